#include "redout/encodings.hpp"

namespace redout {

DenseMatrix rw_diffusion_encoding(const Graph& graph, int walk_length) {
  if (walk_length < 1) throw std::invalid_argument("rw_diffusion_encoding: walk length must be >= 1");
  const int n = graph.node_count();
  const auto& deg = graph.degrees();

  int isolated = 0;
  for (int v = 0; v < n; ++v)
    if (deg[v] == 0) ++isolated;
  if (isolated > 0)
    warn("rw_diffusion_encoding: " + std::to_string(isolated) +
         " isolated node(s), their encodings are all-zero");

  // One probability vector per start node: p <- (A D^-1) p, recording the
  // return mass after each step. O(r * |E|) per node, O(n) memory.
  DenseMatrix rw(n, walk_length);
  std::vector<double> p(n), next(n);
  for (int start = 0; start < n; ++start) {
    if (deg[start] == 0) continue;  // row stays zero
    std::fill(p.begin(), p.end(), 0.0);
    p[start] = 1.0;
    for (int t = 0; t < walk_length; ++t) {
      std::fill(next.begin(), next.end(), 0.0);
      for (int v = 0; v < n; ++v) {
        const double pv = p[v];
        if (pv == 0.0 || deg[v] == 0) continue;
        const double share = pv / deg[v];
        for (int u : graph.neighbors(v)) next[u] += share;
      }
      std::swap(p, next);
      rw.at(start, t) = p[start];
    }
  }
  return rw;
}

DenseMatrix laplacian_positional_encoding(const Graph& graph) {
  const int n = graph.node_count();
  DenseMatrix lp(n, 1);
  for (int v = 0; v < n; ++v) lp.at(v, 0) = graph.degrees()[v] > 0 ? 1.0 : 0.0;
  return lp;
}

PositionalView augmented_view(const Graph& graph, int walk_length) {
  PositionalView view;
  view.rw_encoding = rw_diffusion_encoding(graph, walk_length);
  view.lp_encoding = laplacian_positional_encoding(graph);
  view.combined = DenseMatrix(graph.node_count(), walk_length + 1);
  for (int i = 0; i < graph.node_count(); ++i) {
    for (int t = 0; t < walk_length; ++t) view.combined.at(i, t) = view.rw_encoding.at(i, t);
    view.combined.at(i, walk_length) = view.lp_encoding.at(i, 0);
  }
  return view;
}

}  // namespace redout

#include "redout/graph.hpp"

#include <algorithm>
#include <iostream>
#include <mutex>
#include <random>
#include <set>
#include <unordered_set>

#include <json.hpp>

namespace redout {

namespace {
std::function<void(const std::string&)> g_warning_handler;
std::mutex g_warning_mutex;
}  // namespace

void set_warning_handler(std::function<void(const std::string&)> handler) {
  std::lock_guard<std::mutex> lock(g_warning_mutex);
  g_warning_handler = std::move(handler);
}

void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_warning_mutex);
  if (g_warning_handler)
    g_warning_handler(msg);
  else
    std::cerr << "[redout] warning: " << msg << "\n";
}

Graph::Graph(int node_count, std::vector<std::pair<int, int>> edges, DenseMatrix features)
    : n_(node_count), features_(std::move(features)) {
  if (n_ <= 0) throw std::invalid_argument("Graph: node_count must be positive");
  if (features_.rows() != n_)
    throw std::invalid_argument("Graph: feature rows (" + std::to_string(features_.rows()) +
                                ") != node count (" + std::to_string(n_) + ")");

  int dropped_loops = 0;
  int dropped_dupes = 0;
  std::set<std::pair<int, int>> seen;
  edges_.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u < 0 || u >= n_ || v < 0 || v >= n_)
      throw FormatError("Graph: edge (" + std::to_string(u) + "," + std::to_string(v) +
                        ") references a node outside [0," + std::to_string(n_) + ")");
    if (u == v) {
      ++dropped_loops;
      continue;
    }
    auto key = std::minmax(u, v);
    if (!seen.insert(key).second) {
      ++dropped_dupes;
      continue;
    }
    edges_.emplace_back(key.first, key.second);
  }
  if (dropped_loops > 0)
    warn("Graph: dropped " + std::to_string(dropped_loops) + " self-loop(s)");
  if (dropped_dupes > 0)
    warn("Graph: dropped " + std::to_string(dropped_dupes) + " duplicate edge(s)");
  std::sort(edges_.begin(), edges_.end());

  degrees_.assign(n_, 0);
  adjacency_.assign(n_, {});
  for (auto [u, v] : edges_) {
    ++degrees_[u];
    ++degrees_[v];
    adjacency_[u].push_back(v);
    adjacency_[v].push_back(u);
  }
  for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
  volume_ = 2LL * static_cast<long long>(edges_.size());
}

Graph Graph::with_unit_features(int node_count, std::vector<std::pair<int, int>> edges) {
  return Graph(node_count, std::move(edges), DenseMatrix(node_count, 1, 1.0));
}

Graph generate_er_graph(int node_count, uint64_t seed) {
  if (node_count < 3) throw std::invalid_argument("generate_er_graph: node_count must be >= 3");
  const long long target = 2LL * node_count;
  const long long max_edges = static_cast<long long>(node_count) * (node_count - 1) / 2;
  if (max_edges < target)
    throw std::invalid_argument("generate_er_graph: n(n-1)/2 < 2n, cannot host " +
                                std::to_string(target) + " distinct edges");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, node_count - 1);
  std::set<std::pair<int, int>> chosen;
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<size_t>(target));
  while (static_cast<long long>(edges.size()) < target) {
    int u = pick(rng);
    int v = pick(rng);
    if (u == v) continue;
    auto key = std::minmax(u, v);
    if (chosen.insert(key).second) edges.push_back(key);
  }
  return Graph::with_unit_features(node_count, std::move(edges));
}

Graph generate_random_tree(int node_count, uint64_t seed) {
  if (node_count < 2) throw std::invalid_argument("generate_random_tree: node_count must be >= 2");
  // Random attachment: node i links to a uniformly chosen earlier node.
  std::mt19937_64 rng(seed);
  std::vector<std::pair<int, int>> edges;
  edges.reserve(node_count - 1);
  for (int i = 1; i < node_count; ++i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    edges.emplace_back(pick(rng), i);
  }
  return Graph::with_unit_features(node_count, std::move(edges));
}

Graph generate_dense_graph(int node_count, double density, uint64_t seed) {
  if (node_count < 2) throw std::invalid_argument("generate_dense_graph: node_count must be >= 2");
  if (density <= 0.0 || density > 1.0)
    throw std::invalid_argument("generate_dense_graph: density must lie in (0,1]");
  const long long max_edges = static_cast<long long>(node_count) * (node_count - 1) / 2;
  long long target = static_cast<long long>(std::ceil(density * static_cast<double>(max_edges)));
  target = std::max(1LL, std::min(target, max_edges));

  std::vector<std::pair<int, int>> all;
  all.reserve(static_cast<size_t>(max_edges));
  for (int u = 0; u < node_count; ++u)
    for (int v = u + 1; v < node_count; ++v) all.emplace_back(u, v);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<size_t>(target));
  return Graph::with_unit_features(node_count, std::move(all));
}

std::string graph_to_json(const Graph& g) {
  nlohmann::json j;
  j["n"] = g.node_count();
  auto edges = nlohmann::json::array();
  for (auto [u, v] : g.edges()) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  auto feats = nlohmann::json::array();
  for (int i = 0; i < g.node_count(); ++i) {
    auto row = nlohmann::json::array();
    for (int c = 0; c < g.features().cols(); ++c) row.push_back(g.features().at(i, c));
    feats.push_back(std::move(row));
  }
  j["features"] = std::move(feats);
  return j.dump();
}

namespace {

Graph graph_from_json_obj(const nlohmann::json& j) {
  if (!j.contains("n") || !j.contains("edges") || !j.contains("features"))
    throw FormatError("graph json: missing one of n/edges/features");
  int n = j.at("n").get<int>();
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw FormatError("graph json: malformed edge entry");
    edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  const auto& feats = j.at("features");
  if (static_cast<int>(feats.size()) != n)
    throw FormatError("graph json: feature rows != n");
  int d = feats.empty() ? 0 : static_cast<int>(feats[0].size());
  DenseMatrix x(n, d);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(feats[i].size()) != d) throw FormatError("graph json: ragged features");
    for (int c = 0; c < d; ++c) x.at(i, c) = feats[i][c].get<double>();
  }
  return Graph(n, std::move(edges), std::move(x));
}

}  // namespace

Graph graph_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("graph json: parse failure");
  return graph_from_json_obj(j);
}

std::string collection_to_json(const GraphCollection& c) {
  nlohmann::json j;
  j["provenance"] = c.provenance;
  auto graphs = nlohmann::json::array();
  for (const auto& g : c.graphs) graphs.push_back(nlohmann::json::parse(graph_to_json(g)));
  j["graphs"] = std::move(graphs);
  if (c.labels) j["labels"] = *c.labels;
  return j.dump();
}

GraphCollection collection_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("collection json: parse failure");
  GraphCollection c;
  c.provenance = j.value("provenance", std::string{});
  for (const auto& gj : j.at("graphs")) c.graphs.push_back(graph_from_json_obj(gj));
  if (j.contains("labels")) {
    c.labels = j.at("labels").get<std::vector<int>>();
    if (c.labels->size() != c.graphs.size())
      throw FormatError("collection json: label count != graph count");
  }
  return c;
}

uint64_t graph_structure_hash(const Graph& g) {
  // FNV-1a over n and the sorted edge list.
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffULL;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<uint64_t>(g.node_count()));
  for (auto [u, v] : g.edges()) {
    mix(static_cast<uint64_t>(u));
    mix(static_cast<uint64_t>(v));
  }
  return h;
}

}  // namespace redout

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "redout/matrix.hpp"

namespace redout {

struct LoadError : std::runtime_error {
  explicit LoadError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Warning sink shared by operations that tolerate degenerate input
/// (isolated nodes, dropped duplicate edges). Defaults to stderr.
void set_warning_handler(std::function<void(const std::string&)> handler);
void warn(const std::string& msg);

/// Undirected simple graph. Immutable after construction: edges are
/// deduplicated, self-loops rejected, degrees derived once.
class Graph {
public:
  Graph(int node_count, std::vector<std::pair<int, int>> edges, DenseMatrix features);

  /// Convenience: all-ones single feature column.
  static Graph with_unit_features(int node_count, std::vector<std::pair<int, int>> edges);

  int node_count() const { return n_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const DenseMatrix& features() const { return features_; }
  const std::vector<int>& degrees() const { return degrees_; }
  const std::vector<int>& neighbors(int v) const { return adjacency_[v]; }

  int edge_count() const { return static_cast<int>(edges_.size()); }
  /// Sum of all degrees, i.e. 2 * |edges|.
  long long volume() const { return volume_; }
  int feature_dim() const { return features_.cols(); }

private:
  int n_ = 0;
  std::vector<std::pair<int, int>> edges_;
  DenseMatrix features_;
  std::vector<int> degrees_;
  std::vector<std::vector<int>> adjacency_;
  long long volume_ = 0;
};

struct GraphCollection {
  std::vector<Graph> graphs;
  std::optional<std::vector<int>> labels;
  std::string provenance;

  size_t size() const { return graphs.size(); }
};

/// Random simple graph with exactly 2*n distinct edges and all-ones
/// features. Deterministic for a fixed seed.
Graph generate_er_graph(int node_count, uint64_t seed);

/// Uniform random labelled tree (n-1 edges) with all-ones features.
Graph generate_random_tree(int node_count, uint64_t seed);

/// Random simple graph whose edge count is ceil(density * n*(n-1)/2),
/// all-ones features. density in (0, 1].
Graph generate_dense_graph(int node_count, double density, uint64_t seed);

/// JSON graph interchange: {"n": int, "edges": [[u,v],...], "features": [[...],...]}
std::string graph_to_json(const Graph& g);
Graph graph_from_json(const std::string& text);

std::string collection_to_json(const GraphCollection& c);
GraphCollection collection_from_json(const std::string& text);

/// Structure-only hash (node count + sorted edge list); feature values do
/// not participate. Used as the coding-tree cache key.
uint64_t graph_structure_hash(const Graph& g);

}  // namespace redout

#pragma once

#include <string>
#include <vector>

#include "redout/graph.hpp"

namespace redout {

struct StructureError : std::logic_error {
  explicit StructureError(const std::string& msg) : std::logic_error(msg) {}
};

struct TreeNode {
  int parent = -1;                // -1 for the root
  std::vector<int> children;
  long long volume = 0;           // sum of degrees of descendant leaves
  long long cut = 0;              // edges with exactly one endpoint below this node
  int graph_node = -1;            // >= 0 iff leaf
  bool alive = true;

  bool is_leaf() const { return graph_node >= 0; }
};

/// Rooted hierarchy over a graph's nodes. Leaves are in bijection with the
/// graph nodes; internal nodes are nested communities. Node handles are
/// arena indices in creation order and stay stable across drops (dead slots
/// are skipped).
class CodingTree {
public:
  int root() const { return root_; }
  const TreeNode& node(int id) const { return nodes_[id]; }
  int arena_size() const { return static_cast<int>(nodes_.size()); }
  int leaf_of(int graph_node) const { return leaf_of_[graph_node]; }
  int leaf_count() const { return static_cast<int>(leaf_of_.size()); }

  /// Edges on the longest root-to-leaf path.
  int height() const;

  /// Ids of alive nodes, ascending.
  std::vector<int> alive_ids() const;

  friend CodingTree init_flat_tree(const Graph& graph);
  friend int apply_merge(const Graph& graph, CodingTree& tree, int a, int b);
  friend void apply_drop(CodingTree& tree, int m);
  friend CodingTree build_coding_tree(const Graph& graph, int k);
  friend CodingTree tree_from_json(const std::string& text);

private:
  std::vector<TreeNode> nodes_;
  std::vector<int> leaf_of_;  // graph node id -> leaf handle
  int root_ = -1;
};

/// Root over all graph nodes as leaves; leaf handle == graph node id.
CodingTree init_flat_tree(const Graph& graph);

/// Structural entropy of `graph` on `tree` in bits:
///   -sum over non-root nodes v of (g_v / vol(V)) * log2(vol(v) / vol(v+)).
/// Terms with g_v = 0 or vol(v) = 0 contribute exactly 0.
double structural_entropy(const Graph& graph, const CodingTree& tree);

/// Number of graph edges with one endpoint under `a` and the other under `b`.
long long subtree_cut_between(const Graph& graph, const CodingTree& tree, int a, int b);

/// Entropy reduction H^T - H^T_ab if the root children a and b were merged
/// under a new node. Positive means the merge lowers entropy.
double merge_delta(const Graph& graph, const CodingTree& tree, int a, int b);

/// Inserts the merge node and rewires bookkeeping; returns its handle.
int apply_merge(const Graph& graph, CodingTree& tree, int a, int b);

/// Entropy change H^T_m - H^T if internal node m were removed and its
/// children attached to m's parent. Non-negative for valid trees.
double drop_delta(const Graph& graph, const CodingTree& tree, int m);

void apply_drop(CodingTree& tree, int m);

/// Greedy structural-entropy minimization: full binary agglomeration, then
/// compression to height <= k.
CodingTree build_coding_tree(const Graph& graph, int k);

/// Consistency audit; each violation is one human-readable string.
std::vector<std::string> validate_tree(const Graph& graph, const CodingTree& tree);

/// {"root": id, "nodes": [{"id","parent","children","graph_node","volume","cut"}]}
std::string tree_to_json(const CodingTree& tree);
CodingTree tree_from_json(const std::string& text);

}  // namespace redout

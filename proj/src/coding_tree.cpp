#include "redout/coding_tree.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace redout {

namespace {

// One entropy term; the g = 0 and vol = 0 conventions make every sum over
// tree nodes finite.
inline double entropy_term(long long g, long long vol, long long parent_vol, long long total_vol) {
  if (g == 0 || vol == 0) return 0.0;
  return -(static_cast<double>(g) / static_cast<double>(total_vol)) *
         std::log2(static_cast<double>(vol) / static_cast<double>(parent_vol));
}

void require_root_children(const CodingTree& tree, int a, int b) {
  if (a == b) throw StructureError("merge: nodes must be distinct");
  for (int id : {a, b}) {
    if (id < 0 || id >= tree.arena_size() || !tree.node(id).alive)
      throw StructureError("merge: dead or out-of-range handle " + std::to_string(id));
    if (tree.node(id).parent != tree.root())
      throw StructureError("merge: node " + std::to_string(id) + " is not a root child");
  }
}

void require_droppable(const CodingTree& tree, int m) {
  if (m < 0 || m >= tree.arena_size() || !tree.node(m).alive)
    throw StructureError("drop: dead or out-of-range handle " + std::to_string(m));
  if (m == tree.root()) throw StructureError("drop: cannot drop the root");
  if (tree.node(m).is_leaf()) throw StructureError("drop: cannot drop a leaf");
}

}  // namespace

int CodingTree::height() const {
  // BFS from the root over alive nodes.
  int best = 0;
  std::vector<std::pair<int, int>> stack{{root_, 0}};
  while (!stack.empty()) {
    auto [id, depth] = stack.back();
    stack.pop_back();
    best = std::max(best, depth);
    for (int c : nodes_[id].children) stack.emplace_back(c, depth + 1);
  }
  return best;
}

std::vector<int> CodingTree::alive_ids() const {
  std::vector<int> ids;
  for (int i = 0; i < arena_size(); ++i)
    if (nodes_[i].alive) ids.push_back(i);
  return ids;
}

CodingTree init_flat_tree(const Graph& graph) {
  const int n = graph.node_count();
  CodingTree tree;
  tree.nodes_.resize(n + 1);
  tree.leaf_of_.resize(n);
  for (int v = 0; v < n; ++v) {
    TreeNode& leaf = tree.nodes_[v];
    leaf.parent = n;
    leaf.graph_node = v;
    leaf.volume = graph.degrees()[v];
    leaf.cut = graph.degrees()[v];
    tree.leaf_of_[v] = v;
  }
  TreeNode& root = tree.nodes_[n];
  root.parent = -1;
  root.children.resize(n);
  for (int v = 0; v < n; ++v) root.children[v] = v;
  root.volume = graph.volume();
  root.cut = 0;
  tree.root_ = n;
  return tree;
}

double structural_entropy(const Graph& graph, const CodingTree& tree) {
  const long long total = graph.volume();
  if (total == 0) throw std::domain_error("structural_entropy: edgeless graph has vol(V) = 0");
  double h = 0.0;
  for (int id = 0; id < tree.arena_size(); ++id) {
    const TreeNode& v = tree.node(id);
    if (!v.alive || v.parent < 0) continue;
    h += entropy_term(v.cut, v.volume, tree.node(v.parent).volume, total);
  }
  return h;
}

long long subtree_cut_between(const Graph& graph, const CodingTree& tree, int a, int b) {
  // Label each graph node with its ancestor among {a, b} (if any) by walking
  // leaf-to-root once per leaf.
  const int n = graph.node_count();
  std::vector<char> side(n, 0);
  for (int v = 0; v < n; ++v) {
    int cur = tree.leaf_of(v);
    while (cur >= 0) {
      if (cur == a) {
        side[v] = 1;
        break;
      }
      if (cur == b) {
        side[v] = 2;
        break;
      }
      cur = tree.node(cur).parent;
    }
  }
  long long cut = 0;
  for (auto [u, v] : graph.edges())
    if (side[u] != 0 && side[v] != 0 && side[u] != side[v]) ++cut;
  return cut;
}

// The term-by-term difference telescopes: only the log denominators of a and
// b change (vol(V) -> vol_j) and the new node contributes g_j = g_a + g_b -
// 2 Cut(a,b), which collapses to a single closed form.
static double merge_delta_value(long long cut_ab, long long vol_sum, long long total) {
  if (cut_ab == 0) return 0.0;
  return 2.0 * static_cast<double>(cut_ab) / static_cast<double>(total) *
         std::log2(static_cast<double>(total) / static_cast<double>(vol_sum));
}

double merge_delta(const Graph& graph, const CodingTree& tree, int a, int b) {
  require_root_children(tree, a, b);
  const long long total = graph.volume();
  if (total == 0) throw std::domain_error("merge_delta: edgeless graph");
  const long long cut_ab = subtree_cut_between(graph, tree, a, b);
  return merge_delta_value(cut_ab, tree.node(a).volume + tree.node(b).volume, total);
}

int apply_merge(const Graph& graph, CodingTree& tree, int a, int b) {
  require_root_children(tree, a, b);
  const int root = tree.root();
  const long long cut_ab = subtree_cut_between(graph, tree, a, b);

  const int j = tree.arena_size();
  tree.nodes_.emplace_back();
  TreeNode& merged = tree.nodes_[j];
  merged.parent = root;
  merged.children = {a, b};
  merged.volume = tree.nodes_[a].volume + tree.nodes_[b].volume;
  merged.cut = tree.nodes_[a].cut + tree.nodes_[b].cut - 2 * cut_ab;
  tree.nodes_[a].parent = j;
  tree.nodes_[b].parent = j;

  auto& rc = tree.nodes_[root].children;
  rc.erase(std::remove_if(rc.begin(), rc.end(), [a, b](int c) { return c == a || c == b; }),
           rc.end());
  rc.push_back(j);
  return j;
}

void apply_drop(CodingTree& tree, int m) {
  require_droppable(tree, m);
  TreeNode& node_m = tree.nodes_[m];
  TreeNode& parent = tree.nodes_[node_m.parent];
  auto& siblings = parent.children;
  siblings.erase(std::remove(siblings.begin(), siblings.end(), m), siblings.end());
  for (int c : node_m.children) {
    tree.nodes_[c].parent = node_m.parent;
    siblings.push_back(c);
  }
  node_m.children.clear();
  node_m.alive = false;
  node_m.parent = -1;
}

// Removing m rescales its children's log denominators from vol_m to vol_p
// and deletes m's own term, which telescopes to
//   (g_m - sum_c g_c) / vol(V) * log2(vol_m / vol_p)  >=  0.
static double drop_delta_value(long long cut_m, long long child_cut_sum, long long vol_m,
                               long long vol_p, long long total) {
  if (vol_m == 0) return 0.0;  // zero-volume subtrees contribute nothing
  const long long coeff = cut_m - child_cut_sum;
  if (coeff == 0) return 0.0;
  return static_cast<double>(coeff) / static_cast<double>(total) *
         std::log2(static_cast<double>(vol_m) / static_cast<double>(vol_p));
}

double drop_delta(const Graph& graph, const CodingTree& tree, int m) {
  require_droppable(tree, m);
  const long long total = graph.volume();
  if (total == 0) throw std::domain_error("drop_delta: edgeless graph");
  const TreeNode& node_m = tree.node(m);
  long long child_cut_sum = 0;
  for (int c : node_m.children) child_cut_sum += tree.node(c).cut;
  return drop_delta_value(node_m.cut, child_cut_sum, node_m.volume,
                          tree.node(node_m.parent).volume, total);
}

namespace {

// Insert-only open-addressing map, power-of-two capacity. The candidate
// engine only ever adds pair records, so no tombstones are needed.
class PairCutMap {
public:
  explicit PairCutMap(size_t expected) {
    size_t cap = 64;
    while (cap < expected * 2) cap <<= 1;
    keys_.assign(cap, kEmpty);
    values_.resize(cap);
  }

  // Returns the stored value, or -1 when absent.
  long long lookup(long long key) const {
    for (size_t i = slot(key);; i = (i + 1) & (keys_.size() - 1)) {
      if (keys_[i] == kEmpty) return -1;
      if (keys_[i] == key) return values_[i];
    }
  }

  // Inserts if absent; returns true when the key was new.
  bool insert(long long key, long long value) {
    if (2 * (count_ + 1) > keys_.size()) grow();
    for (size_t i = slot(key);; i = (i + 1) & (keys_.size() - 1)) {
      if (keys_[i] == key) return false;
      if (keys_[i] == kEmpty) {
        keys_[i] = key;
        values_[i] = value;
        ++count_;
        return true;
      }
    }
  }

private:
  static constexpr long long kEmpty = -1;

  size_t slot(long long key) const {
    uint64_t h = static_cast<uint64_t>(key) * 0x9e3779b97f4a7c15ULL;
    return static_cast<size_t>(h >> 17) & (keys_.size() - 1);
  }

  void grow() {
    std::vector<long long> old_keys = std::move(keys_);
    std::vector<long long> old_values = std::move(values_);
    keys_.assign(old_keys.size() * 2, kEmpty);
    values_.assign(old_keys.size() * 2, 0);
    count_ = 0;
    for (size_t i = 0; i < old_keys.size(); ++i)
      if (old_keys[i] != kEmpty) insert(old_keys[i], old_values[i]);
  }

  std::vector<long long> keys_;
  std::vector<long long> values_;
  size_t count_ = 0;
};

struct MergeCandidate {
  double delta;
  int a, b;           // a < b, handles at push time
  uint64_t cut_bits;  // (cut << 1) | exact; exact entries carry the true cut

  long long cut() const { return static_cast<long long>(cut_bits >> 1); }
  bool exact() const { return (cut_bits & 1) != 0; }
};

// Max delta first; ties resolved toward the lexicographically smallest pair.
// The remaining field only makes the order total.
inline bool merge_worse(const MergeCandidate& x, const MergeCandidate& y) {
  if (x.delta != y.delta) return x.delta < y.delta;
  if (x.a != y.a) return x.a > y.a;
  if (x.b != y.b) return x.b > y.b;
  return x.cut_bits < y.cut_bits;
}

// 4-ary max-heap: shallower and more cache-friendly than std::priority_queue
// at the multi-million entry sizes the merge phase reaches.
class MergeHeap {
public:
  void reserve(size_t n) { data_.reserve(n); }
  bool empty() const { return data_.empty(); }
  const MergeCandidate& top() const { return data_.front(); }

  void push(const MergeCandidate& c) {
    data_.push_back(c);
    size_t i = data_.size() - 1;
    while (i > 0) {
      const size_t parent = (i - 1) >> 2;
      if (!merge_worse(data_[parent], data_[i])) break;
      std::swap(data_[parent], data_[i]);
      i = parent;
    }
  }

  void pop() {
    data_.front() = data_.back();
    data_.pop_back();
    const size_t n = data_.size();
    size_t i = 0;
    while (true) {
      const size_t first = 4 * i + 1;
      if (first >= n) break;
      size_t best = i;
      const size_t last = std::min(first + 4, n);
      for (size_t c = first; c < last; ++c)
        if (merge_worse(data_[best], data_[c])) best = c;
      if (best == i) break;
      std::swap(data_[i], data_[best]);
      i = best;
    }
  }

private:
  std::vector<MergeCandidate> data_;
};

struct DropCandidate {
  double delta;
  int id;
  uint64_t stamp;
};

// Min delta first; ties resolved toward the smallest handle.
struct DropWorse {
  bool operator()(const DropCandidate& x, const DropCandidate& y) const {
    if (x.delta != y.delta) return x.delta > y.delta;
    return x.id > y.id;
  }
};

}  // namespace

CodingTree build_coding_tree(const Graph& graph, int k) {
  if (k < 2) throw std::invalid_argument("build_coding_tree: k must be >= 2");
  if (graph.edge_count() == 0)
    throw std::domain_error("build_coding_tree: edgeless graph has no coding tree");

  CodingTree tree = init_flat_tree(graph);
  const int n = graph.node_count();
  const int root = tree.root_;
  const long long total = graph.volume();

  // ----- Step 1: binary agglomeration.
  //
  // The heap is kept correct lazily. Exact entries (true cut, handles live
  // at push time) stay exact for as long as both handles remain root
  // children, because a community's volume and cuts never change while it is
  // alive. Every live pair is covered by at least one entry whose stored
  // delta upper-bounds its true delta: merging can only grow volumes (which
  // lowers deltas of untouched pairs) and cut growth is covered by a fresh
  // bound pushed from the smaller side at merge time. Popping therefore
  // yields the argmax once the top entry is exact and live; anything else is
  // re-validated with an on-demand cut count and pushed back.
  const int max_nodes = 2 * n + 1;

  // Root children as an intrusive doubly-linked list: O(1) removal while
  // keeping the same child order the one-at-a-time public ops would produce.
  std::vector<int> next(max_nodes + 2, -1), prev(max_nodes + 2, -1);
  const int head = max_nodes, tail = max_nodes + 1;
  next[head] = 0;
  prev[tail] = n - 1;
  for (int v = 0; v < n; ++v) {
    prev[v] = v == 0 ? head : v - 1;
    next[v] = v == n - 1 ? tail : v + 1;
  }
  size_t root_child_count = static_cast<size_t>(n);
  auto remove_root_child = [&](int id) {
    next[prev[id]] = next[id];
    prev[next[id]] = prev[id];
    --root_child_count;
  };
  auto append_root_child = [&](int id) {
    prev[id] = prev[tail];
    next[id] = tail;
    next[prev[tail]] = id;
    prev[tail] = id;
    ++root_child_count;
  };

  // Union-find from dead handles to the wrapper that absorbed them.
  std::vector<int> rep(max_nodes);
  for (int i = 0; i < max_nodes; ++i) rep[i] = i;
  auto find = [&rep](int x) {
    while (rep[x] != x) {
      rep[x] = rep[rep[x]];
      x = rep[x];
    }
    return x;
  };

  // Per-community leaf chains for on-demand cut counting.
  std::vector<int> leaf_head(max_nodes, -1), leaf_tail(max_nodes, -1), leaf_next(n, -1);
  for (int v = 0; v < n; ++v) {
    leaf_head[v] = v;
    leaf_tail[v] = v;
  }

  // Crossing edges counted from the lighter side's leaves.
  auto on_demand_cut = [&](int u, int v) {
    int w = u, other = v;
    if (tree.nodes_[v].volume < tree.nodes_[u].volume ||
        (tree.nodes_[v].volume == tree.nodes_[u].volume && v < u)) {
      w = v;
      other = u;
    }
    long long c = 0;
    for (int leaf = leaf_head[w]; leaf >= 0; leaf = leaf_next[leaf])
      for (int nb : graph.neighbors(tree.nodes_[leaf].graph_node))
        if (find(nb) == other) ++c;
    return c;
  };

  std::priority_queue<MergeCandidate, std::vector<MergeCandidate>, MergeWorse> merge_heap;
  auto push_pair = [&](int u, int v, long long cut, bool exact) {
    const long long vol_sum = tree.nodes_[u].volume + tree.nodes_[v].volume;
    merge_heap.push(
        {merge_delta_value(cut, vol_sum, total), std::min(u, v), std::max(u, v), cut, exact});
  };

  // Cuts already counted stay valid while both handles live, so they are
  // memoized: repeat stale translations of the same pair are discarded, and
  // a merge whose big-side cut is known pushes an exact entry directly.
  PairCutMap known_cuts(graph.edges().size() * 4);
  auto pair_key = [max_nodes](int u, int v) {
    return static_cast<long long>(std::min(u, v)) * max_nodes + std::max(u, v);
  };
  for (auto [u, v] : graph.edges()) {
    push_pair(u, v, 1, true);
    known_cuts.insert(pair_key(u, v), 1);
  }

  std::vector<int> scratch_reps;  // neighbour reps of the lighter merge side

  while (root_child_count > 2) {
    int a = -1, b = -1;
    long long cut_ab = 0;
    while (!merge_heap.empty()) {
      MergeCandidate top = merge_heap.top();
      merge_heap.pop();
      const int u = find(top.a);
      const int v = find(top.b);
      if (u == v) continue;  // pair merged internally, dead
      if (top.exact && u == top.a && v == top.b) {
        a = u;
        b = v;
        cut_ab = top.cut;
        break;
      }
      const long long key = pair_key(u, v);
      if (known_cuts.lookup(key) >= 0) continue;  // an exact live entry covers this pair
      const long long c = on_demand_cut(u, v);
      known_cuts.insert(key, c);
      push_pair(u, v, c, true);
    }
    if (a < 0) {
      // Disconnected remainder: wrap the two lowest-id root children. The
      // cut between them is zero, so entropy is unchanged.
      int first = -1, second = -1;
      for (int id = next[head]; id != tail; id = next[id]) {
        if (first < 0 || id < first) {
          second = first;
          first = id;
        } else if (second < 0 || id < second) {
          second = id;
        }
      }
      a = first;
      b = second;
      cut_ab = 0;
    }

    const int j = static_cast<int>(tree.nodes_.size());
    tree.nodes_.emplace_back();
    TreeNode& merged = tree.nodes_[j];
    merged.parent = root;
    merged.children = {a, b};
    merged.volume = tree.nodes_[a].volume + tree.nodes_[b].volume;
    merged.cut = tree.nodes_[a].cut + tree.nodes_[b].cut - 2 * cut_ab;
    tree.nodes_[a].parent = j;
    tree.nodes_[b].parent = j;
    remove_root_child(a);
    remove_root_child(b);
    append_root_child(j);

    rep[a] = j;
    rep[b] = j;

    // Fresh bounds for the new node's pairs, enumerated from the lighter
    // side only: cut(j,x) = cut(small,x) + cut(big,x), and the unknown big
    // share is bounded by the smaller of the total cuts.
    const int small =
        (tree.nodes_[a].volume < tree.nodes_[b].volume ||
         (tree.nodes_[a].volume == tree.nodes_[b].volume && a < b))
            ? a
            : b;
    const int big = small == a ? b : a;
    scratch_reps.clear();
    for (int leaf = leaf_head[small]; leaf >= 0; leaf = leaf_next[leaf])
      for (int nb : graph.neighbors(tree.nodes_[leaf].graph_node)) {
        const int x = find(nb);
        if (x != j) scratch_reps.push_back(x);
      }
    std::sort(scratch_reps.begin(), scratch_reps.end());

    leaf_next[leaf_tail[big]] = leaf_head[small];
    leaf_head[j] = leaf_head[big];
    leaf_tail[j] = leaf_tail[small];

    const long long big_total_cut = tree.nodes_[big].cut;
    for (size_t i = 0; i < scratch_reps.size();) {
      const int x = scratch_reps[i];
      size_t run = i;
      while (run < scratch_reps.size() && scratch_reps[run] == x) ++run;
      const long long c_small = static_cast<long long>(run - i);
      const long long big_cut = known_cuts.lookup(pair_key(big, x));
      if (big_cut >= 0) {
        known_cuts.insert(pair_key(j, x), c_small + big_cut);
        push_pair(j, x, c_small + big_cut, true);
      } else {
        push_pair(j, x, c_small + std::min(big_total_cut, tree.nodes_[x].cut), false);
      }
      i = run;
    }
  }
  {
    std::vector<int> rc;
    rc.reserve(root_child_count);
    for (int id = next[head]; id != tail; id = next[id]) rc.push_back(id);
    tree.nodes_[root].children = std::move(rc);
  }

  // ----- Step 2: compress to height k, cheapest drop first.
  // A drop only perturbs the deltas of the dropped node's parent and former
  // children, so stamped heap entries reproduce a full argmin rescan. Child
  // lists use swap-remove with a position index; the delta is order-free
  // (integer cut sums), so only determinism matters.
  //
  // Lifting a subtree leaves its internal height unchanged, so the tree
  // height is maintained through per-node histograms of child subtree
  // heights: a drop touches its parent's histogram and at most one
  // decrement per ancestor.
  const int arena = static_cast<int>(tree.nodes_.size());
  std::vector<long long> child_cut_sum(arena, 0);
  std::vector<int> pos_in_parent(arena, -1);
  std::vector<int> subtree_height(arena, 0);
  std::vector<std::unordered_map<int, int>> child_heights(arena);
  {
    std::vector<int> order;  // parents precede children
    order.reserve(arena);
    order.push_back(root);
    for (size_t i = 0; i < order.size(); ++i) {
      const auto& children = tree.nodes_[order[i]].children;
      for (int idx = 0; idx < static_cast<int>(children.size()); ++idx) {
        pos_in_parent[children[idx]] = idx;
        order.push_back(children[idx]);
      }
    }
    for (size_t i = order.size(); i-- > 0;) {
      const int id = order[i];
      for (int c : tree.nodes_[id].children) {
        child_cut_sum[id] += tree.nodes_[c].cut;
        subtree_height[id] = std::max(subtree_height[id], 1 + subtree_height[c]);
        ++child_heights[id][1 + subtree_height[c]];
      }
    }
  }
  if (subtree_height[root] <= k) return tree;

  std::vector<uint64_t> stamp(arena, 0);
  std::priority_queue<DropCandidate, std::vector<DropCandidate>, DropWorse> drop_heap;
  auto push_candidate = [&](int id) {
    const TreeNode& v = tree.nodes_[id];
    if (!v.alive || v.is_leaf() || id == root) return;
    drop_heap.push({drop_delta_value(v.cut, child_cut_sum[id], v.volume,
                                     tree.nodes_[v.parent].volume, total),
                    id, stamp[id]});
  };
  for (int id = 0; id < arena; ++id) push_candidate(id);

  while (subtree_height[root] > k) {
    if (drop_heap.empty()) throw StructureError("build: drop candidates exhausted");
    DropCandidate top = drop_heap.top();
    drop_heap.pop();
    if (!tree.nodes_[top.id].alive || stamp[top.id] != top.stamp) continue;

    const int m = top.id;
    const int parent = tree.nodes_[m].parent;
    const std::vector<int> lifted = std::move(tree.nodes_[m].children);

    auto& siblings = tree.nodes_[parent].children;
    const int last = siblings.back();
    siblings[pos_in_parent[m]] = last;
    pos_in_parent[last] = pos_in_parent[m];
    siblings.pop_back();
    for (int c : lifted) {
      pos_in_parent[c] = static_cast<int>(siblings.size());
      siblings.push_back(c);
      tree.nodes_[c].parent = parent;
    }
    child_cut_sum[parent] += child_cut_sum[m] - tree.nodes_[m].cut;
    tree.nodes_[m].children.clear();
    tree.nodes_[m].alive = false;
    tree.nodes_[m].parent = -1;

    // Height bookkeeping: m's entry leaves the parent histogram, the lifted
    // children enter one level higher than before.
    {
      auto& hist = child_heights[parent];
      auto it = hist.find(1 + subtree_height[m]);
      if (--(it->second) == 0) hist.erase(it);
      for (int c : lifted) ++hist[1 + subtree_height[c]];
      child_heights[m].clear();

      int node = parent;
      while (true) {
        const int old_height = subtree_height[node];
        int new_height = old_height;
        if (!child_heights[node].count(old_height)) new_height = old_height - 1;
        if (new_height == old_height) break;
        subtree_height[node] = new_height;
        if (node == root) break;
        const int up = tree.nodes_[node].parent;
        auto& uph = child_heights[up];
        auto uit = uph.find(1 + old_height);
        if (--(uit->second) == 0) uph.erase(uit);
        ++uph[1 + new_height];
        node = up;
      }
    }

    if (parent != root) {
      ++stamp[parent];
      push_candidate(parent);
    }
    for (int c : lifted) {
      ++stamp[c];
      push_candidate(c);
    }
  }
  return tree;
}

std::vector<std::string> validate_tree(const Graph& graph, const CodingTree& tree) {
  std::vector<std::string> violations;
  auto flag = [&violations](const std::string& msg) { violations.push_back(msg); };

  const int arena = tree.arena_size();
  if (tree.root() < 0 || tree.root() >= arena || !tree.node(tree.root()).alive) {
    flag("root handle invalid");
    return violations;
  }

  int roots = 0;
  for (int id = 0; id < arena; ++id) {
    const TreeNode& v = tree.node(id);
    if (!v.alive) continue;
    if (v.parent < 0) {
      ++roots;
      if (id != tree.root()) flag("node " + std::to_string(id) + " is a second root");
    } else {
      if (v.parent >= arena || !tree.node(v.parent).alive)
        flag("node " + std::to_string(id) + " has a dead parent");
      else {
        const auto& siblings = tree.node(v.parent).children;
        if (std::count(siblings.begin(), siblings.end(), id) != 1)
          flag("node " + std::to_string(id) + " not listed exactly once under its parent");
      }
    }
    for (int c : v.children) {
      if (c < 0 || c >= arena || !tree.node(c).alive)
        flag("node " + std::to_string(id) + " has dead child " + std::to_string(c));
      else if (tree.node(c).parent != id)
        flag("child " + std::to_string(c) + " does not point back to " + std::to_string(id));
    }
    if (!v.is_leaf() && v.parent >= 0 && v.children.empty())
      flag("internal node " + std::to_string(id) + " has no children");
  }
  if (roots != 1) flag("expected exactly one root, found " + std::to_string(roots));

  // Reachability / acyclicity: walk down from the root counting alive nodes.
  std::vector<char> seen(arena, 0);
  std::vector<int> stack{tree.root()};
  int reached = 0;
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    if (seen[id]) {
      flag("cycle or shared child at node " + std::to_string(id));
      continue;
    }
    seen[id] = 1;
    ++reached;
    for (int c : tree.node(id).children)
      if (c >= 0 && c < arena && tree.node(c).alive) stack.push_back(c);
  }
  int alive = static_cast<int>(tree.alive_ids().size());
  if (reached != alive)
    flag("only " + std::to_string(reached) + " of " + std::to_string(alive) +
         " alive nodes reachable from root");

  // Leaf bijection.
  const int n = graph.node_count();
  if (tree.leaf_count() != n)
    flag("leaf map size != graph node count");
  std::vector<int> leaf_seen(n, 0);
  for (int v = 0; v < std::min(n, tree.leaf_count()); ++v) {
    int leaf = tree.leaf_of(v);
    if (leaf < 0 || leaf >= arena || !tree.node(leaf).alive || !seen[leaf])
      flag("graph node " + std::to_string(v) + " maps to a detached leaf");
    else if (tree.node(leaf).graph_node != v)
      flag("leaf of graph node " + std::to_string(v) + " carries wrong graph_node");
    else
      ++leaf_seen[v];
  }
  for (int id = 0; id < arena; ++id) {
    const TreeNode& v = tree.node(id);
    if (!v.alive || !v.is_leaf()) continue;
    if (!v.children.empty()) flag("leaf " + std::to_string(id) + " has children");
    if (v.graph_node < 0 || v.graph_node >= n || tree.leaf_of(v.graph_node) != id)
      flag("leaf " + std::to_string(id) + " not in bijection");
  }

  // Volume additivity and cut recount from the raw edge list.
  for (int id = 0; id < arena; ++id) {
    const TreeNode& v = tree.node(id);
    if (!v.alive || !seen[id]) continue;
    if (v.is_leaf()) {
      if (v.graph_node >= 0 && v.graph_node < n &&
          v.volume != graph.degrees()[v.graph_node])
        flag("leaf " + std::to_string(id) + " volume != degree");
    } else {
      long long sum = 0;
      for (int c : v.children) sum += tree.node(c).volume;
      if (sum != v.volume)
        flag("node " + std::to_string(id) + " volume " + std::to_string(v.volume) +
             " != children sum " + std::to_string(sum));
    }
    if (v.cut < 0 || v.cut > v.volume)
      flag("node " + std::to_string(id) + " cut outside [0, volume]");
  }

  std::vector<long long> recount(arena, 0);
  for (auto [u, v] : graph.edges()) {
    if (u >= tree.leaf_count() || v >= tree.leaf_count()) continue;
    // Collect ancestor chains and cancel the common suffix: nodes on exactly
    // one chain have this edge crossing their boundary.
    std::vector<int> chain_u, chain_v;
    for (int cur = tree.leaf_of(u); cur >= 0; cur = tree.node(cur).parent) chain_u.push_back(cur);
    for (int cur = tree.leaf_of(v); cur >= 0; cur = tree.node(cur).parent) chain_v.push_back(cur);
    size_t iu = chain_u.size(), iv = chain_v.size();
    while (iu > 0 && iv > 0 && chain_u[iu - 1] == chain_v[iv - 1]) {
      --iu;
      --iv;
    }
    for (size_t i = 0; i < iu; ++i) ++recount[chain_u[i]];
    for (size_t i = 0; i < iv; ++i) ++recount[chain_v[i]];
  }
  for (int id = 0; id < arena; ++id) {
    const TreeNode& v = tree.node(id);
    if (!v.alive || !seen[id]) continue;
    if (v.cut != recount[id])
      flag("node " + std::to_string(id) + " cut " + std::to_string(v.cut) +
           " != recount " + std::to_string(recount[id]));
  }
  if (tree.node(tree.root()).cut != 0) flag("root cut != 0");

  return violations;
}

std::string tree_to_json(const CodingTree& tree) {
  nlohmann::json j;
  j["root"] = tree.root();
  auto nodes = nlohmann::json::array();
  for (int id : tree.alive_ids()) {
    const TreeNode& v = tree.node(id);
    nlohmann::json nj;
    nj["id"] = id;
    nj["parent"] = v.parent;
    nj["children"] = v.children;
    nj["graph_node"] = v.graph_node;
    nj["volume"] = v.volume;
    nj["cut"] = v.cut;
    nodes.push_back(std::move(nj));
  }
  j["nodes"] = std::move(nodes);
  return j.dump();
}

CodingTree tree_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("tree json: parse failure");
  CodingTree tree;
  tree.root_ = j.at("root").get<int>();
  int max_id = tree.root_;
  for (const auto& nj : j.at("nodes")) max_id = std::max(max_id, nj.at("id").get<int>());
  tree.nodes_.resize(max_id + 1);
  for (auto& n : tree.nodes_) n.alive = false;
  int max_graph_node = -1;
  for (const auto& nj : j.at("nodes")) {
    int id = nj.at("id").get<int>();
    TreeNode& v = tree.nodes_[id];
    v.alive = true;
    v.parent = nj.at("parent").get<int>();
    v.children = nj.at("children").get<std::vector<int>>();
    v.graph_node = nj.at("graph_node").get<int>();
    v.volume = nj.at("volume").get<long long>();
    v.cut = nj.at("cut").get<long long>();
    max_graph_node = std::max(max_graph_node, v.graph_node);
  }
  tree.leaf_of_.assign(max_graph_node + 1, -1);
  for (int id = 0; id <= max_id; ++id)
    if (tree.nodes_[id].alive && tree.nodes_[id].is_leaf())
      tree.leaf_of_[tree.nodes_[id].graph_node] = id;
  for (int v = 0; v <= max_graph_node; ++v)
    if (tree.leaf_of_[v] < 0) throw FormatError("tree json: missing leaf for graph node");
  return tree;
}

}  // namespace redout

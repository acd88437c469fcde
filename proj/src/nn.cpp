#include "redout/nn.hpp"

#include <algorithm>
#include <cmath>

namespace redout {

MlpParams init_mlp(const std::vector<int>& dims, std::mt19937_64& rng) {
  if (dims.size() < 2) throw std::invalid_argument("init_mlp: need at least in/out dims");
  MlpParams mlp;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uniform(-a, a);
    MlpParams::Layer layer{DenseMatrix(fan_out, fan_in), DenseMatrix(1, fan_out)};
    for (double& w : layer.weight.data()) w = uniform(rng);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

GraphEncoderParams init_graph_encoder(int input_dim, int hidden_dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  GraphEncoderParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  for (int l = 0; l < kGinLayers; ++l) {
    const int in = l == 0 ? input_dim : hidden_dim;
    p.gin_layers.push_back(init_mlp({in, hidden_dim, hidden_dim}, rng));
  }
  p.projection = init_mlp({kGinLayers * hidden_dim, hidden_dim, hidden_dim}, rng);
  return p;
}

TreeEncoderParams init_tree_encoder(int input_dim, int hidden_dim, int height, uint64_t seed) {
  if (height < 1) throw std::invalid_argument("init_tree_encoder: height must be >= 1");
  std::mt19937_64 rng(seed);
  TreeEncoderParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.height = height;
  for (int l = 0; l < height; ++l) {
    const int in = l == 0 ? input_dim : hidden_dim;
    p.level_mlps.push_back(init_mlp({in, hidden_dim, hidden_dim}, rng));
  }
  p.projection = init_mlp({hidden_dim, hidden_dim, hidden_dim}, rng);
  return p;
}

DenseMatrix pad_features(const DenseMatrix& features, int width) {
  if (features.cols() > width)
    throw std::invalid_argument("pad_features: features wider than encoder input");
  if (features.cols() == width) return features;
  DenseMatrix out(features.rows(), width);
  for (int i = 0; i < features.rows(); ++i)
    for (int j = 0; j < features.cols(); ++j) out.at(i, j) = features.at(i, j);
  return out;
}

MlpValues wrap_mlp(Tape& tape, const MlpParams& params, bool requires_grad) {
  MlpValues v;
  for (const auto& layer : params.layers)
    v.layers.emplace_back(tape.leaf(layer.weight, requires_grad),
                          tape.leaf(layer.bias, requires_grad));
  return v;
}

GraphEncoderValues wrap_graph_encoder(Tape& tape, const GraphEncoderParams& params,
                                      bool requires_grad) {
  const bool rg = requires_grad && !params.frozen;
  GraphEncoderValues v;
  for (const auto& mlp : params.gin_layers) v.gin_layers.push_back(wrap_mlp(tape, mlp, rg));
  v.projection = wrap_mlp(tape, params.projection, rg);
  return v;
}

TreeEncoderValues wrap_tree_encoder(Tape& tape, const TreeEncoderParams& params,
                                    bool requires_grad) {
  TreeEncoderValues v;
  for (const auto& mlp : params.level_mlps) v.level_mlps.push_back(wrap_mlp(tape, mlp, requires_grad));
  v.projection = wrap_mlp(tape, params.projection, requires_grad);
  return v;
}

Value mlp_forward(Tape& tape, const MlpValues& mlp, Value input) {
  Value h = input;
  for (size_t l = 0; l < mlp.layers.size(); ++l) {
    h = tape.add_rowvec(tape.matmul_nt(h, mlp.layers[l].first), mlp.layers[l].second);
    if (l + 1 < mlp.layers.size()) h = tape.relu(h);
  }
  return h;
}

Value gin_forward(Tape& tape, const GraphEncoderValues& encoder, const Graph& graph,
                  Value features) {
  if (features.rows() != graph.node_count())
    throw std::invalid_argument("gin_forward: feature rows != node count");
  Value h = features;
  std::vector<Value> pooled;
  for (const auto& mlp : encoder.gin_layers) {
    Value aggregated = tape.add(h, tape.neighbor_sum(h, graph));
    h = mlp_forward(tape, mlp, aggregated);
    pooled.push_back(tape.mean_rows(h));
  }
  return mlp_forward(tape, encoder.projection, tape.concat_cols(pooled));
}

Value tree_forward(Tape& tape, const TreeEncoderValues& encoder, const CodingTree& tree,
                   Value leaf_features) {
  if (leaf_features.rows() != tree.leaf_count())
    throw StructureError("tree_forward: leaf feature rows != leaf count");
  for (int v = 0; v < tree.leaf_count(); ++v) {
    const int leaf = tree.leaf_of(v);
    if (leaf < 0 || leaf >= tree.arena_size() || !tree.node(leaf).alive ||
        tree.node(leaf).graph_node != v)
      throw StructureError("tree_forward: leaf bijection broken at graph node " +
                           std::to_string(v));
  }
  const int height = tree.height();
  if (height > static_cast<int>(encoder.level_mlps.size()))
    throw StructureError("tree_forward: tree taller than encoder (height " +
                         std::to_string(height) + ")");

  // depth -> level = height - depth
  std::vector<int> depth(tree.arena_size(), -1);
  std::vector<std::vector<int>> internal_at_level(height + 1);
  depth[tree.root()] = 0;
  std::vector<int> stack{tree.root()};
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    const TreeNode& node = tree.node(id);
    if (!node.is_leaf()) internal_at_level[height - depth[id]].push_back(id);
    for (int c : node.children) {
      depth[c] = depth[id] + 1;
      stack.push_back(c);
    }
  }
  for (auto& level : internal_at_level) std::sort(level.begin(), level.end());

  // Leaves sitting above the bottom level are lifted into hidden space by
  // the level-1 MLP once, then travel unchanged to their parent's level.
  std::vector<int> raw_leaves, lifted_leaves;
  for (int v = 0; v < tree.leaf_count(); ++v) {
    const int leaf = tree.leaf_of(v);
    if (height - depth[leaf] == 0)
      raw_leaves.push_back(leaf);
    else
      lifted_leaves.push_back(leaf);
  }

  // x_of[node id] = tape value of the node's outgoing vector (1 x dim rows
  // are kept inside per-level matrices; map node -> (level matrix, row)).
  std::vector<int> row_of(tree.arena_size(), -1);

  Value raw = leaf_features;  // rows indexed by graph node id
  Value lifted{};
  if (!lifted_leaves.empty()) {
    std::vector<int> rows;
    rows.reserve(lifted_leaves.size());
    for (int leaf : lifted_leaves) rows.push_back(tree.node(leaf).graph_node);
    lifted = mlp_forward(tape, encoder.level_mlps[0], tape.gather_rows(leaf_features, rows));
    for (size_t i = 0; i < lifted_leaves.size(); ++i) row_of[lifted_leaves[i]] = static_cast<int>(i);
  }

  Value current{};  // outputs of the previous level's internal nodes
  std::vector<int> current_ids;
  for (int level = 1; level <= height; ++level) {
    const auto& ids = internal_at_level[level];
    if (ids.empty()) continue;
    // Children split by provenance: raw leaves (level 1 aggregation only),
    // lifted leaves, and internal nodes from the level below.
    std::vector<std::vector<int>> raw_groups(ids.size()), lifted_groups(ids.size()),
        internal_groups(ids.size());
    for (size_t t = 0; t < ids.size(); ++t) {
      for (int c : tree.node(ids[t]).children) {
        const TreeNode& child = tree.node(c);
        if (child.is_leaf()) {
          if (height - depth[c] == 0)
            raw_groups[t].push_back(child.graph_node);
          else
            lifted_groups[t].push_back(row_of[c]);
        } else {
          internal_groups[t].push_back(row_of[c]);
        }
      }
    }
    Value sum{};
    bool have = false;
    auto accumulate_groups = [&](Value source, std::vector<std::vector<int>> groups) {
      bool any = false;
      for (const auto& g : groups) any = any || !g.empty();
      if (!any) return;
      Value part = tape.group_sum_rows(source, std::move(groups));
      sum = have ? tape.add(sum, part) : part;
      have = true;
    };
    if (level == 1) accumulate_groups(raw, raw_groups);
    if (!lifted_leaves.empty() && level >= 2) accumulate_groups(lifted, lifted_groups);
    if (current_ids.size() > 0) accumulate_groups(current, internal_groups);
    if (!have) throw StructureError("tree_forward: level " + std::to_string(level) +
                                    " has no inputs");
    current = mlp_forward(tape, encoder.level_mlps[level - 1], sum);
    current_ids = ids;
    for (size_t t = 0; t < ids.size(); ++t) row_of[ids[t]] = static_cast<int>(t);
  }

  // Root output row, then the projection head. Missing upper levels are the
  // identity, so a short tree projects its root output directly.
  Value root_vec = tape.gather_rows(current, {row_of[tree.root()]});
  return mlp_forward(tape, encoder.projection, root_vec);
}

DenseMatrix gin_embed(const GraphEncoderParams& params, const Graph& graph,
                      const DenseMatrix& features) {
  Tape tape;
  auto encoder = wrap_graph_encoder(tape, params, false);
  Value out = gin_forward(tape, encoder, graph,
                          tape.constant(pad_features(features, params.input_dim)));
  return out.matrix();
}

DenseMatrix tree_embed(const TreeEncoderParams& params, const CodingTree& tree,
                       const DenseMatrix& leaf_features) {
  Tape tape;
  auto encoder = wrap_tree_encoder(tape, params, false);
  Value out = tree_forward(tape, encoder, tree, tape.constant(leaf_features));
  return out.matrix();
}

namespace {

void extract_mlp_grads(const MlpValues& values, MlpParams& grads) {
  for (size_t l = 0; l < values.layers.size(); ++l) {
    grads.layers[l].weight = values.layers[l].first.grad();
    grads.layers[l].bias = values.layers[l].second.grad();
  }
}

}  // namespace

TreeEncoderGrads loss_gradient(
    const TreeEncoderParams& params,
    const std::function<Value(Tape&, const TreeEncoderValues&)>& loss_fn) {
  Tape tape;
  TreeEncoderValues values = wrap_tree_encoder(tape, params, true);
  Value loss = loss_fn(tape, values);
  if (!loss.matrix().all_finite())
    throw NumericError("loss_gradient: loss is not finite");
  tape.backward(loss);
  TreeEncoderGrads grads = params;
  for (size_t l = 0; l < values.level_mlps.size(); ++l)
    extract_mlp_grads(values.level_mlps[l], grads.level_mlps[l]);
  extract_mlp_grads(values.projection, grads.projection);
  return grads;
}

void for_each_tensor(const MlpParams& p, const std::string& prefix,
                     const std::function<void(const std::string&, const DenseMatrix&)>& fn) {
  for (size_t l = 0; l < p.layers.size(); ++l) {
    fn(prefix + ".layer" + std::to_string(l) + ".weight", p.layers[l].weight);
    fn(prefix + ".layer" + std::to_string(l) + ".bias", p.layers[l].bias);
  }
}

void for_each_tensor(const GraphEncoderParams& p,
                     const std::function<void(const std::string&, const DenseMatrix&)>& fn) {
  for (size_t l = 0; l < p.gin_layers.size(); ++l)
    for_each_tensor(p.gin_layers[l], "gin" + std::to_string(l), fn);
  for_each_tensor(p.projection, "projection", fn);
}

void for_each_tensor(const TreeEncoderParams& p,
                     const std::function<void(const std::string&, const DenseMatrix&)>& fn) {
  for (size_t l = 0; l < p.level_mlps.size(); ++l)
    for_each_tensor(p.level_mlps[l], "level" + std::to_string(l), fn);
  for_each_tensor(p.projection, "projection", fn);
}

void for_each_tensor_mut(MlpParams& p, const std::function<void(DenseMatrix&)>& fn) {
  for (auto& layer : p.layers) {
    fn(layer.weight);
    fn(layer.bias);
  }
}

void for_each_tensor_mut(GraphEncoderParams& p, const std::function<void(DenseMatrix&)>& fn) {
  for (auto& mlp : p.gin_layers) for_each_tensor_mut(mlp, fn);
  for_each_tensor_mut(p.projection, fn);
}

void for_each_tensor_mut(TreeEncoderParams& p, const std::function<void(DenseMatrix&)>& fn) {
  for (auto& mlp : p.level_mlps) for_each_tensor_mut(mlp, fn);
  for_each_tensor_mut(p.projection, fn);
}

namespace {

void adam_update(std::vector<DenseMatrix*>& tensors, std::vector<const DenseMatrix*>& grads,
                 AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const DenseMatrix* g : grads) {
      state.m.emplace_back(g->rows(), g->cols());
      state.v.emplace_back(g->rows(), g->cols());
    }
  }
  if (state.m.size() != tensors.size())
    throw std::invalid_argument("sgd_step: optimizer state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t t = 0; t < tensors.size(); ++t) {
    DenseMatrix& p = *tensors[t];
    const DenseMatrix& g = *grads[t];
    if (!g.all_finite()) throw NumericError("sgd_step: non-finite gradient");
    DenseMatrix& m = state.m[t];
    DenseMatrix& v = state.v[t];
    for (size_t i = 0; i < p.data().size(); ++i) {
      const double gi = g.data()[i];
      m.data()[i] = state.beta1 * m.data()[i] + (1.0 - state.beta1) * gi;
      v.data()[i] = state.beta2 * v.data()[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      const double update = lr * mhat / (std::sqrt(vhat) + state.eps);
      if (!std::isfinite(update)) throw NumericError("sgd_step: non-finite update");
      p.data()[i] -= update;
    }
  }
}

template <typename Params>
void sgd_step_impl(Params& params, const Params& grads, AdamState& state, double lr) {
  std::vector<DenseMatrix*> tensors;
  std::vector<const DenseMatrix*> gradients;
  for_each_tensor_mut(params, [&tensors](DenseMatrix& t) { tensors.push_back(&t); });
  for_each_tensor_mut(const_cast<Params&>(grads),
                      [&gradients](DenseMatrix& t) { gradients.push_back(&t); });
  adam_update(tensors, gradients, state, lr);
}

}  // namespace

void sgd_step(TreeEncoderParams& params, const TreeEncoderGrads& grads, AdamState& state,
              double lr) {
  sgd_step_impl(params, grads, state, lr);
}

void sgd_step(GraphEncoderParams& params, const GraphEncoderGrads& grads, AdamState& state,
              double lr) {
  if (params.frozen) throw std::logic_error("sgd_step: encoder is frozen");
  sgd_step_impl(params, grads, state, lr);
}

}  // namespace redout

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "redout/autodiff.hpp"
#include "redout/coding_tree.hpp"
#include "redout/graph.hpp"

namespace redout {

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Stacked linear layers with ReLU between them (none after the last).
/// weight is out x in, bias is 1 x out.
struct MlpParams {
  struct Layer {
    DenseMatrix weight;
    DenseMatrix bias;
  };
  std::vector<Layer> layers;

  int input_dim() const { return layers.front().weight.cols(); }
  int output_dim() const { return layers.back().weight.rows(); }
};

constexpr int kGinLayers = 5;

struct GraphEncoderParams {
  std::vector<MlpParams> gin_layers;  // kGinLayers entries
  MlpParams projection;
  int input_dim = 0;
  int hidden_dim = 0;
  bool frozen = false;
};

struct TreeEncoderParams {
  std::vector<MlpParams> level_mlps;  // one per level 1..k, bottom first
  MlpParams projection;
  int input_dim = 0;
  int hidden_dim = 0;
  int height = 0;
};

struct EmbeddingBatch {
  DenseMatrix z_graph;  // N x d, frozen graph encoder
  DenseMatrix z_tree;   // N x d, tree encoder
  std::vector<int> graph_ids;
};

/// Glorot-uniform weights, zero biases; `dims` lists layer sizes
/// [in, h1, ..., out].
MlpParams init_mlp(const std::vector<int>& dims, std::mt19937_64& rng);
GraphEncoderParams init_graph_encoder(int input_dim, int hidden_dim, uint64_t seed);
TreeEncoderParams init_tree_encoder(int input_dim, int hidden_dim, int height, uint64_t seed);

/// Zero-pads feature columns up to width; errors if already wider.
DenseMatrix pad_features(const DenseMatrix& features, int width);

/// Tape-resident copies of an MLP's tensors.
struct MlpValues {
  std::vector<std::pair<Value, Value>> layers;  // (weight, bias)
};
struct GraphEncoderValues {
  std::vector<MlpValues> gin_layers;
  MlpValues projection;
};
struct TreeEncoderValues {
  std::vector<MlpValues> level_mlps;
  MlpValues projection;
};

MlpValues wrap_mlp(Tape& tape, const MlpParams& params, bool requires_grad);
GraphEncoderValues wrap_graph_encoder(Tape& tape, const GraphEncoderParams& params,
                                      bool requires_grad);
TreeEncoderValues wrap_tree_encoder(Tape& tape, const TreeEncoderParams& params,
                                    bool requires_grad);

Value mlp_forward(Tape& tape, const MlpValues& mlp, Value input);

/// Five rounds of sum aggregation (h + sum of neighbor h) followed by the
/// layer MLP; readout concatenates per-layer mean pools and projects.
/// Returns a 1 x hidden_dim embedding. `graph` must outlive the tape.
Value gin_forward(Tape& tape, const GraphEncoderValues& encoder, const Graph& graph,
                  Value features);

/// Bottom-up aggregation over the coding tree: internal node at level l
/// applies MLP^(l) to the sum of its children's outputs. Leaves feed their
/// feature rows in at level 0; a leaf attached above the bottom level is
/// lifted once through MLP^(1) and then passed along unchanged. Levels above
/// the tree's height act as identity. Returns 1 x hidden_dim.
Value tree_forward(Tape& tape, const TreeEncoderValues& encoder, const CodingTree& tree,
                   Value leaf_features);

/// Convenience no-gradient forwards on a scratch tape.
DenseMatrix gin_embed(const GraphEncoderParams& params, const Graph& graph,
                      const DenseMatrix& features);
DenseMatrix tree_embed(const TreeEncoderParams& params, const CodingTree& tree,
                       const DenseMatrix& leaf_features);

/// Gradient containers are shape-congruent parameter structs.
using TreeEncoderGrads = TreeEncoderParams;
using GraphEncoderGrads = GraphEncoderParams;

/// Exact reverse-mode gradients of a scalar loss built from tape ops.
/// Throws NumericError if the loss is not finite.
TreeEncoderGrads loss_gradient(
    const TreeEncoderParams& params,
    const std::function<Value(Tape&, const TreeEncoderValues&)>& loss_fn);

/// Adam-style first-moment/second-moment update with bias correction.
struct AdamState {
  std::vector<DenseMatrix> m;
  std::vector<DenseMatrix> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void sgd_step(TreeEncoderParams& params, const TreeEncoderGrads& grads, AdamState& state,
              double lr);
void sgd_step(GraphEncoderParams& params, const GraphEncoderGrads& grads, AdamState& state,
              double lr);

/// Canonical tensor order shared by the optimizer and weight files.
void for_each_tensor(const MlpParams& p, const std::string& prefix,
                     const std::function<void(const std::string&, const DenseMatrix&)>& fn);
void for_each_tensor(const GraphEncoderParams& p,
                     const std::function<void(const std::string&, const DenseMatrix&)>& fn);
void for_each_tensor(const TreeEncoderParams& p,
                     const std::function<void(const std::string&, const DenseMatrix&)>& fn);
void for_each_tensor_mut(MlpParams& p, const std::function<void(DenseMatrix&)>& fn);
void for_each_tensor_mut(GraphEncoderParams& p, const std::function<void(DenseMatrix&)>& fn);
void for_each_tensor_mut(TreeEncoderParams& p, const std::function<void(DenseMatrix&)>& fn);

}  // namespace redout

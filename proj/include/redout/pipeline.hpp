#pragma once

#include <optional>
#include <string>
#include <vector>

#include "redout/coding_tree.hpp"
#include "redout/graph.hpp"
#include "redout/losses.hpp"
#include "redout/nn.hpp"
#include "redout/weights_io.hpp"

namespace redout {

struct RunConfig {
  int k = 2;          // coding-tree height, 2..5
  int r = 16;         // random-walk length of the positional view
  int hidden_dim = 32;
  double tau = 0.2;
  double lambda = 0.01;
  int epochs_pretrain = 50;
  int epochs_testtime = 20;
  double lr = 1e-3;
  int batch_size = 64;
  uint64_t seed = 0;
  std::string id_train_path;
  std::string id_test_path;
  std::string ood_test_path;
  std::string cache_dir = "tree_cache";
  int threads = 0;  // 0 picks the OpenMP default

  void validate() const;
};

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);
/// Starts from `base` and overrides any keys present in the JSON file.
RunConfig config_from_file(const std::string& path, const RunConfig& base = {});

/// Directory -> TUDataset flat files; *.json -> collection interchange.
GraphCollection load_collection(const std::string& path);

/// Seeded shuffle split: first fraction / remainder.
std::pair<GraphCollection, GraphCollection> split_fraction(const GraphCollection& collection,
                                                           double fraction, uint64_t seed);

struct PretrainResult {
  GraphEncoderParams encoder;        // returned frozen
  std::vector<double> epoch_losses;  // mean contrastive loss per epoch
};

/// Contrastive pre-training of the graph encoder between the feature view
/// and the positional view. Deterministic for a fixed seed.
PretrainResult pretrain(const RunConfig& config, const GraphCollection& id_train);

struct PreprocessResult {
  /// One entry per graph; empty for skipped (edgeless) graphs.
  std::vector<std::optional<CodingTree>> trees;
  int built = 0;
  int from_cache = 0;
  int skipped = 0;
};

/// Coding trees for every graph, cached on disk keyed by (structure hash, k)
/// and built in parallel across graphs.
PreprocessResult preprocess_trees(const RunConfig& config, const GraphCollection& graphs);
/// Single-threaded reference; identical output.
PreprocessResult preprocess_trees_serial(const RunConfig& config, const GraphCollection& graphs);

/// N x hidden embeddings of every graph under the frozen encoder, rows in
/// collection order. Parallel across graphs; thread count does not change
/// the result.
DenseMatrix embed_graphs(const GraphEncoderParams& params, const GraphCollection& graphs,
                         int threads = 0);
DenseMatrix embed_graphs_serial(const GraphEncoderParams& params, const GraphCollection& graphs);

struct AdaptResult {
  TreeEncoderParams tree_encoder;
  ScoreReport report;                   // final-epoch inference scores
  std::vector<double> initial_scores;   // scores before any adaptation step
};

/// Test-time loop: per batch, embeddings from the frozen encoder pair with
/// tree embeddings; pseudo-labels drive the conditional term; only the tree
/// encoder trains. Scores are the per-sample loss decomposition in a final
/// no-gradient pass. Trees must align with `test_graphs`.
AdaptResult test_time_adapt(const GraphEncoderParams& frozen, const RunConfig& config,
                            const GraphCollection& test_graphs,
                            const std::vector<CodingTree>& trees);

struct DetectResult {
  ScoreReport report;
  TreeEncoderParams tree_encoder;
  std::vector<double> initial_scores;
  int skipped_graphs = 0;
};

/// End-to-end scoring of id-test + ood-test under a pre-trained encoder.
DetectResult detect(const RunConfig& config, const ModelWeights& weights,
                    const GraphCollection& id_test, const GraphCollection& ood_test);

/// Synthetic ID/OOD construction used by the end-to-end checks: ID graphs
/// are random trees, OOD graphs are dense (edge density >= 0.6), node counts
/// drawn from [10, 14].
struct SyntheticPair {
  GraphCollection id_train;
  GraphCollection id_test;
  GraphCollection ood_test;
};
SyntheticPair make_synthetic_pair(int train_count, int test_count, uint64_t seed);

}  // namespace redout

#include "redout/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "redout/encodings.hpp"
#include "redout/tudataset.hpp"

#ifdef REDOUT_HAS_OPENMP
#include <omp.h>
#endif

namespace redout {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (k < 2 || k > 5) throw std::invalid_argument("config: k must lie in [2,5]");
  if (r < 1) throw std::invalid_argument("config: r must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("config: hidden_dim must be positive");
  if (tau <= 0.0) throw std::invalid_argument("config: tau must be positive");
  if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
  if (epochs_pretrain < 0 || epochs_testtime < 0)
    throw std::invalid_argument("config: epochs must be >= 0");
  if (lr < 0.0) throw std::invalid_argument("config: lr must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
}

std::string config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["k"] = c.k;
  j["r"] = c.r;
  j["hidden_dim"] = c.hidden_dim;
  j["tau"] = c.tau;
  j["lambda"] = c.lambda;
  j["epochs_pretrain"] = c.epochs_pretrain;
  j["epochs_testtime"] = c.epochs_testtime;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["id_train_path"] = c.id_train_path;
  j["id_test_path"] = c.id_test_path;
  j["ood_test_path"] = c.ood_test_path;
  j["cache_dir"] = c.cache_dir;
  j["threads"] = c.threads;
  return j.dump(2);
}

namespace {

RunConfig apply_json(const nlohmann::json& j, RunConfig c) {
  c.k = j.value("k", c.k);
  c.r = j.value("r", c.r);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.tau = j.value("tau", c.tau);
  c.lambda = j.value("lambda", c.lambda);
  c.epochs_pretrain = j.value("epochs_pretrain", c.epochs_pretrain);
  c.epochs_testtime = j.value("epochs_testtime", c.epochs_testtime);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.id_train_path = j.value("id_train_path", c.id_train_path);
  c.id_test_path = j.value("id_test_path", c.id_test_path);
  c.ood_test_path = j.value("ood_test_path", c.ood_test_path);
  c.cache_dir = j.value("cache_dir", c.cache_dir);
  c.threads = j.value("threads", c.threads);
  return c;
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("config: invalid JSON");
  return apply_json(j, RunConfig{});
}

RunConfig config_from_file(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw LoadError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw FormatError("config: invalid JSON in " + path);
  return apply_json(j, base);
}

GraphCollection load_collection(const std::string& path) {
  if (fs::is_directory(path)) return parse_tud_dataset(path);
  std::ifstream in(path);
  if (!in) throw LoadError("load_collection: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return collection_from_json(ss.str());
}

std::pair<GraphCollection, GraphCollection> split_fraction(const GraphCollection& collection,
                                                           double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw std::invalid_argument("split_fraction: fraction must lie in (0,1)");
  std::vector<size_t> order(collection.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const size_t head = static_cast<size_t>(fraction * static_cast<double>(collection.size()));

  GraphCollection first, second;
  first.provenance = collection.provenance + "[split-head]";
  second.provenance = collection.provenance + "[split-tail]";
  if (collection.labels) {
    first.labels.emplace();
    second.labels.emplace();
  }
  for (size_t i = 0; i < order.size(); ++i) {
    GraphCollection& dst = i < head ? first : second;
    dst.graphs.push_back(collection.graphs[order[i]]);
    if (collection.labels) dst.labels->push_back((*collection.labels)[order[i]]);
  }
  return {std::move(first), std::move(second)};
}

namespace {

/// Consecutive batches; a trailing singleton is merged into the previous
/// batch so the contrastive denominator never degenerates.
std::vector<std::pair<int, int>> fixed_batches(int n, int batch_size) {
  std::vector<std::pair<int, int>> out;
  for (int start = 0; start < n; start += batch_size)
    out.emplace_back(start, std::min(start + batch_size, n));
  if (out.size() >= 2 && out.back().second - out.back().first < 2) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

int resolve_threads(int requested) {
#ifdef REDOUT_HAS_OPENMP
  return requested > 0 ? requested : omp_get_max_threads();
#else
  (void)requested;
  return 1;
#endif
}

}  // namespace

PretrainResult pretrain(const RunConfig& config, const GraphCollection& id_train) {
  config.validate();
  if (id_train.graphs.empty()) throw std::invalid_argument("pretrain: empty training collection");

  int feature_dim = 0;
  for (const Graph& g : id_train.graphs) feature_dim = std::max(feature_dim, g.feature_dim());
  const int input_dim = std::max(feature_dim, config.r + 1);

  // Positional views are deterministic; build them once up front.
  std::vector<DenseMatrix> positional(id_train.size());
  {
    const int threads = resolve_threads(config.threads);
#ifdef REDOUT_HAS_OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
    for (int i = 0; i < static_cast<int>(id_train.size()); ++i)
      positional[i] = augmented_view(id_train.graphs[i], config.r).combined;
    (void)threads;
  }

  GraphEncoderParams encoder = init_graph_encoder(input_dim, config.hidden_dim, config.seed);
  AdamState state;
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  PretrainResult result;
  std::vector<int> order(id_train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs_pretrain; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    int counted = 0;
    for (auto [lo, hi] : fixed_batches(static_cast<int>(order.size()), config.batch_size)) {
      if (hi - lo < 2) continue;  // unusable remainder
      Tape tape;
      GraphEncoderValues values = wrap_graph_encoder(tape, encoder, true);
      std::vector<Value> basic_rows, view_rows;
      for (int t = lo; t < hi; ++t) {
        const Graph& g = id_train.graphs[order[t]];
        basic_rows.push_back(gin_forward(
            tape, values, g, tape.constant(pad_features(g.features(), input_dim))));
        view_rows.push_back(gin_forward(
            tape, values, g, tape.constant(pad_features(positional[order[t]], input_dim))));
      }
      Value z_basic = tape.stack_rows(basic_rows);
      Value z_view = tape.stack_rows(view_rows);
      Value terms = info_nce_per_sample(tape, z_basic, z_view, config.tau);
      Value loss = tape.mean_all(terms);
      if (!loss.matrix().all_finite()) throw NumericError("pretrain: loss is not finite");
      tape.backward(loss);

      GraphEncoderGrads grads = encoder;
      for (size_t l = 0; l < values.gin_layers.size(); ++l)
        for (size_t t = 0; t < values.gin_layers[l].layers.size(); ++t) {
          grads.gin_layers[l].layers[t].weight = values.gin_layers[l].layers[t].first.grad();
          grads.gin_layers[l].layers[t].bias = values.gin_layers[l].layers[t].second.grad();
        }
      for (size_t t = 0; t < values.projection.layers.size(); ++t) {
        grads.projection.layers[t].weight = values.projection.layers[t].first.grad();
        grads.projection.layers[t].bias = values.projection.layers[t].second.grad();
      }
      sgd_step(encoder, grads, state, config.lr);
      epoch_loss += loss.scalar() * (hi - lo);
      counted += hi - lo;
    }
    result.epoch_losses.push_back(counted > 0 ? epoch_loss / counted : 0.0);
  }
  encoder.frozen = true;
  result.encoder = std::move(encoder);
  return result;
}

namespace {

std::string cache_path(const RunConfig& config, const Graph& g) {
  std::ostringstream name;
  name << std::hex << graph_structure_hash(g) << "_k" << std::dec << config.k << ".json";
  return (fs::path(config.cache_dir) / name.str()).string();
}

std::optional<CodingTree> load_cached_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return tree_from_json(ss.str());
  } catch (const std::exception&) {
    return std::nullopt;  // corrupt cache entries are rebuilt
  }
}

void store_cached_tree(const std::string& path, const CodingTree& tree) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) return;  // cache is best-effort
    out << tree_to_json(tree);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
}

PreprocessResult preprocess_impl(const RunConfig& config, const GraphCollection& graphs,
                                 int threads) {
  config.validate();
  if (!config.cache_dir.empty()) fs::create_directories(config.cache_dir);
  PreprocessResult result;
  result.trees.resize(graphs.size());
  std::vector<int> built(graphs.size(), 0), hit(graphs.size(), 0), skip(graphs.size(), 0);

#ifdef REDOUT_HAS_OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
  for (int i = 0; i < static_cast<int>(graphs.size()); ++i) {
    const Graph& g = graphs.graphs[i];
    if (g.edge_count() == 0) {
      warn("preprocess_trees: graph " + std::to_string(i) + " has no edges, skipped");
      skip[i] = 1;
      continue;
    }
    const std::string path = config.cache_dir.empty() ? std::string{} : cache_path(config, g);
    if (!path.empty()) {
      if (auto cached = load_cached_tree(path)) {
        result.trees[i] = std::move(*cached);
        hit[i] = 1;
        continue;
      }
    }
    CodingTree tree = build_coding_tree(g, config.k);
    if (!path.empty()) store_cached_tree(path, tree);
    result.trees[i] = std::move(tree);
    built[i] = 1;
  }
  (void)threads;
  result.built = std::accumulate(built.begin(), built.end(), 0);
  result.from_cache = std::accumulate(hit.begin(), hit.end(), 0);
  result.skipped = std::accumulate(skip.begin(), skip.end(), 0);
  return result;
}

}  // namespace

PreprocessResult preprocess_trees(const RunConfig& config, const GraphCollection& graphs) {
  return preprocess_impl(config, graphs, resolve_threads(config.threads));
}

PreprocessResult preprocess_trees_serial(const RunConfig& config, const GraphCollection& graphs) {
  return preprocess_impl(config, graphs, 1);
}

DenseMatrix embed_graphs(const GraphEncoderParams& params, const GraphCollection& graphs,
                         int threads) {
  DenseMatrix out(static_cast<int>(graphs.size()), params.hidden_dim);
  const int use = resolve_threads(threads);
#ifdef REDOUT_HAS_OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(use)
#endif
  for (int i = 0; i < static_cast<int>(graphs.size()); ++i) {
    const Graph& g = graphs.graphs[i];
    DenseMatrix z = gin_embed(params, g, g.features());
    for (int j = 0; j < z.cols(); ++j) out.at(i, j) = z.at(0, j);
  }
  (void)use;
  return out;
}

DenseMatrix embed_graphs_serial(const GraphEncoderParams& params, const GraphCollection& graphs) {
  DenseMatrix out(static_cast<int>(graphs.size()), params.hidden_dim);
  for (int i = 0; i < static_cast<int>(graphs.size()); ++i) {
    const Graph& g = graphs.graphs[i];
    DenseMatrix z = gin_embed(params, g, g.features());
    for (int j = 0; j < z.cols(); ++j) out.at(i, j) = z.at(0, j);
  }
  return out;
}

namespace {

DenseMatrix take_rows(const DenseMatrix& m, int lo, int hi) {
  DenseMatrix out(hi - lo, m.cols());
  for (int i = lo; i < hi; ++i)
    for (int j = 0; j < m.cols(); ++j) out.at(i - lo, j) = m.at(i, j);
  return out;
}

}  // namespace

AdaptResult test_time_adapt(const GraphEncoderParams& frozen, const RunConfig& config,
                            const GraphCollection& test_graphs,
                            const std::vector<CodingTree>& trees) {
  config.validate();
  if (trees.size() != test_graphs.size())
    throw std::invalid_argument("test_time_adapt: trees not aligned with graphs");
  if (test_graphs.graphs.empty()) throw std::invalid_argument("test_time_adapt: empty test set");

  const int n = static_cast<int>(test_graphs.size());
  int feature_dim = 0;
  for (const Graph& g : test_graphs.graphs) feature_dim = std::max(feature_dim, g.feature_dim());

  TreeEncoderParams tree_encoder =
      init_tree_encoder(feature_dim, frozen.hidden_dim, config.k, config.seed ^ 0x5bf03635ULL);

  // Frozen-view embeddings never change across epochs.
  const DenseMatrix z_graph_all = embed_graphs(frozen, test_graphs, config.threads);
  const auto batches = fixed_batches(n, config.batch_size);

  auto tree_rows = [&](Tape& tape, const TreeEncoderValues& values, int lo, int hi) {
    std::vector<Value> rows;
    rows.reserve(hi - lo);
    for (int t = lo; t < hi; ++t) {
      const Graph& g = test_graphs.graphs[t];
      rows.push_back(tree_forward(tape, values, trees[t],
                                  tape.constant(pad_features(g.features(), feature_dim))));
    }
    return tape.stack_rows(rows);
  };

  auto score_pass = [&]() {
    std::vector<double> scores(n, 0.0);
    for (auto [lo, hi] : batches) {
      Tape tape;
      TreeEncoderValues values = wrap_tree_encoder(tape, tree_encoder, false);
      Value z_tree = tree_rows(tape, values, lo, hi);
      const DenseMatrix z_graph = take_rows(z_graph_all, lo, hi);
      const std::vector<int> labels = pseudo_labels(z_graph);
      Value zg = tape.constant(z_graph);
      Value cl = info_nce_per_sample(tape, z_tree, zg, config.tau);
      Value cri = cri_per_sample(tape, zg, z_tree, labels, 1e-12);
      LossValue l_cl{0.0, cl.matrix().data()};
      LossValue l_cri{0.0, cri.matrix().data()};
      for (double v : l_cl.per_sample) l_cl.scalar += v / l_cl.per_sample.size();
      for (double v : l_cri.per_sample) l_cri.scalar += v / l_cri.per_sample.size();
      LossValue total = total_loss(l_cl, l_cri, config.lambda);
      for (int t = lo; t < hi; ++t) scores[t] = total.per_sample[t - lo];
    }
    return scores;
  };

  AdaptResult result;
  result.initial_scores = score_pass();

  AdamState state;
  for (int epoch = 0; epoch < config.epochs_testtime; ++epoch) {
    for (auto [lo, hi] : batches) {
      if (hi - lo < 2)
        throw std::invalid_argument("test_time_adapt: batch of one graph cannot be scored");
      Tape tape;
      TreeEncoderValues values = wrap_tree_encoder(tape, tree_encoder, true);
      Value z_tree = tree_rows(tape, values, lo, hi);
      const DenseMatrix z_graph = take_rows(z_graph_all, lo, hi);
      const std::vector<int> labels = pseudo_labels(z_graph);
      Value zg = tape.constant(z_graph);
      // The tree view supplies the contrastive negatives; the graph view
      // supplies the conditional negatives.
      Value cl = info_nce_per_sample(tape, z_tree, zg, config.tau);
      Value cri = cri_per_sample(tape, zg, z_tree, labels, 1e-12);
      Value loss =
          tape.add(tape.mean_all(cl), tape.scale(tape.mean_all(cri), config.lambda));
      if (!loss.matrix().all_finite()) throw NumericError("test_time_adapt: loss is not finite");
      tape.backward(loss);

      TreeEncoderGrads grads = tree_encoder;
      for (size_t l = 0; l < values.level_mlps.size(); ++l)
        for (size_t t = 0; t < values.level_mlps[l].layers.size(); ++t) {
          grads.level_mlps[l].layers[t].weight = values.level_mlps[l].layers[t].first.grad();
          grads.level_mlps[l].layers[t].bias = values.level_mlps[l].layers[t].second.grad();
        }
      for (size_t t = 0; t < values.projection.layers.size(); ++t) {
        grads.projection.layers[t].weight = values.projection.layers[t].first.grad();
        grads.projection.layers[t].bias = values.projection.layers[t].second.grad();
      }
      sgd_step(tree_encoder, grads, state, config.lr);
    }
  }

  result.report.per_graph_score = score_pass();
  result.tree_encoder = std::move(tree_encoder);
  return result;
}

DetectResult detect(const RunConfig& config, const ModelWeights& weights,
                    const GraphCollection& id_test, const GraphCollection& ood_test) {
  config.validate();
  GraphCollection combined;
  combined.provenance = id_test.provenance + "+" + ood_test.provenance;
  std::vector<bool> is_ood;
  for (const Graph& g : id_test.graphs) {
    combined.graphs.push_back(g);
    is_ood.push_back(false);
  }
  for (const Graph& g : ood_test.graphs) {
    combined.graphs.push_back(g);
    is_ood.push_back(true);
  }

  PreprocessResult prep = preprocess_trees(config, combined);
  GraphCollection scored;
  scored.provenance = combined.provenance;
  std::vector<CodingTree> trees;
  std::vector<bool> labels;
  for (size_t i = 0; i < combined.graphs.size(); ++i) {
    if (!prep.trees[i]) continue;
    scored.graphs.push_back(combined.graphs[i]);
    trees.push_back(std::move(*prep.trees[i]));
    labels.push_back(is_ood[i]);
  }

  AdaptResult adapted = test_time_adapt(weights.graph_encoder, config, scored, trees);
  DetectResult result;
  result.report = std::move(adapted.report);
  result.report.is_ood = labels;
  result.tree_encoder = std::move(adapted.tree_encoder);
  result.initial_scores = std::move(adapted.initial_scores);
  result.skipped_graphs = prep.skipped;
  return result;
}

SyntheticPair make_synthetic_pair(int train_count, int test_count, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> node_count(10, 14);
  std::uniform_real_distribution<double> density(0.6, 0.9);
  SyntheticPair pair;
  pair.id_train.provenance = "synthetic-id-train";
  pair.id_test.provenance = "synthetic-id-test";
  pair.ood_test.provenance = "synthetic-ood-test";
  for (int i = 0; i < train_count; ++i)
    pair.id_train.graphs.push_back(generate_random_tree(node_count(rng), rng()));
  for (int i = 0; i < test_count; ++i)
    pair.id_test.graphs.push_back(generate_random_tree(node_count(rng), rng()));
  for (int i = 0; i < test_count; ++i)
    pair.ood_test.graphs.push_back(generate_dense_graph(node_count(rng), density(rng), rng()));
  return pair;
}

}  // namespace redout

#include "redout/weights_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace redout {

namespace {

constexpr char kMagic[4] = {'R', 'D', 'O', 'T'};

void append_le16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_le32(std::string& out, uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void append_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

nlohmann::json manifest_entry(const std::string& name, const DenseMatrix& m) {
  return {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}};
}

std::string serialize(const ModelWeights& w) {
  nlohmann::json manifest;
  manifest["graph_encoder"] = {{"input_dim", w.graph_encoder.input_dim},
                               {"hidden_dim", w.graph_encoder.hidden_dim},
                               {"frozen", w.graph_encoder.frozen},
                               {"gin_layers", w.graph_encoder.gin_layers.size()}};
  manifest["tree_encoder"] = {{"input_dim", w.tree_encoder.input_dim},
                              {"hidden_dim", w.tree_encoder.hidden_dim},
                              {"height", w.tree_encoder.height}};
  auto tensors = nlohmann::json::array();
  std::vector<const DenseMatrix*> payload;
  for_each_tensor(w.graph_encoder, [&](const std::string& name, const DenseMatrix& m) {
    tensors.push_back(manifest_entry("graph." + name, m));
    payload.push_back(&m);
  });
  for_each_tensor(w.tree_encoder, [&](const std::string& name, const DenseMatrix& m) {
    tensors.push_back(manifest_entry("tree." + name, m));
    payload.push_back(&m);
  });
  manifest["tensors"] = std::move(tensors);
  const std::string mjson = manifest.dump();

  std::string out;
  out.append(kMagic, 4);
  append_le16(out, kWeightsFormatVersion);
  append_le32(out, static_cast<uint32_t>(mjson.size()));
  out += mjson;
  for (const DenseMatrix* m : payload)
    for (double d : m->data()) append_f64(out, d);
  return out;
}

uint16_t read_le16(const std::string& buf, size_t off) {
  return static_cast<uint16_t>(static_cast<uint8_t>(buf[off]) |
                               (static_cast<uint8_t>(buf[off + 1]) << 8));
}

uint32_t read_le32(const std::string& buf, size_t off) {
  uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[off + b])) << (8 * b);
  return v;
}

double read_f64(const std::string& buf, size_t off) {
  uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(static_cast<uint8_t>(buf[off + b])) << (8 * b);
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

}  // namespace

void save_weights(const std::string& path, const ModelWeights& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("save_weights: cannot open " + path);
  const std::string blob = serialize(weights);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw LoadError("save_weights: short write to " + path);
}

ModelWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("load_weights: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 10 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw FormatError("load_weights: bad magic bytes");
  const uint16_t version = read_le16(buf, 4);
  if (version != kWeightsFormatVersion)
    throw FormatError("load_weights: unsupported format version " + std::to_string(version));
  const uint32_t mlen = read_le32(buf, 6);
  if (buf.size() < 10 + static_cast<size_t>(mlen))
    throw FormatError("load_weights: truncated manifest");
  nlohmann::json manifest = nlohmann::json::parse(buf.substr(10, mlen), nullptr, false);
  if (manifest.is_discarded()) throw FormatError("load_weights: manifest is not valid JSON");

  ModelWeights w;
  const auto& ge = manifest.at("graph_encoder");
  w.graph_encoder.input_dim = ge.at("input_dim").get<int>();
  w.graph_encoder.hidden_dim = ge.at("hidden_dim").get<int>();
  w.graph_encoder.frozen = ge.at("frozen").get<bool>();
  const auto& te = manifest.at("tree_encoder");
  w.tree_encoder.input_dim = te.at("input_dim").get<int>();
  w.tree_encoder.hidden_dim = te.at("hidden_dim").get<int>();
  w.tree_encoder.height = te.at("height").get<int>();

  size_t off = 10 + mlen;
  std::vector<DenseMatrix> tensors;
  std::vector<std::string> names;
  for (const auto& entry : manifest.at("tensors")) {
    const int rows = entry.at("rows").get<int>();
    const int cols = entry.at("cols").get<int>();
    const size_t count = static_cast<size_t>(rows) * cols;
    if (buf.size() < off + count * 8) throw FormatError("load_weights: truncated payload");
    DenseMatrix m(rows, cols);
    for (size_t i = 0; i < count; ++i) m.data()[i] = read_f64(buf, off + i * 8);
    off += count * 8;
    tensors.push_back(std::move(m));
    names.push_back(entry.at("name").get<std::string>());
  }
  if (off != buf.size()) throw FormatError("load_weights: trailing bytes after payload");

  // Rebuild the layer structure from the manifest order: weight/bias pairs
  // per MLP, grouped by name prefix.
  size_t idx = 0;
  auto take_mlp = [&](const std::string& prefix) {
    MlpParams mlp;
    while (idx + 1 < names.size() + 1 && idx < names.size() &&
           names[idx].rfind(prefix + ".layer", 0) == 0) {
      MlpParams::Layer layer;
      layer.weight = std::move(tensors[idx++]);
      if (idx >= names.size() || names[idx].rfind(prefix + ".layer", 0) != 0)
        throw FormatError("load_weights: dangling weight tensor for " + prefix);
      layer.bias = std::move(tensors[idx++]);
      mlp.layers.push_back(std::move(layer));
    }
    if (mlp.layers.empty()) throw FormatError("load_weights: missing tensors for " + prefix);
    return mlp;
  };
  const size_t gin_count = ge.at("gin_layers").get<size_t>();
  for (size_t l = 0; l < gin_count; ++l)
    w.graph_encoder.gin_layers.push_back(take_mlp("graph.gin" + std::to_string(l)));
  w.graph_encoder.projection = take_mlp("graph.projection");
  for (int l = 0; l < w.tree_encoder.height; ++l)
    w.tree_encoder.level_mlps.push_back(take_mlp("tree.level" + std::to_string(l)));
  w.tree_encoder.projection = take_mlp("tree.projection");
  return w;
}

uint64_t weights_digest(const GraphEncoderParams& params) {
  uint64_t h = 1469598103934665603ULL;
  auto mix_bytes = [&h](const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for_each_tensor(params, [&](const std::string& name, const DenseMatrix& m) {
    mix_bytes(name.data(), name.size());
    mix_bytes(m.data().data(), m.data().size() * sizeof(double));
  });
  return h;
}

}  // namespace redout

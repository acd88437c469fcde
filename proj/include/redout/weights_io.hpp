#pragma once

#include <string>

#include "redout/nn.hpp"

namespace redout {

/// Binary layout: "RDOT" magic, u16 little-endian format version, u32
/// little-endian manifest length, manifest JSON (tensor names + shapes +
/// encoder hyperparameters), then little-endian f64 payloads in manifest
/// order. Round-trips are bit exact.
constexpr uint16_t kWeightsFormatVersion = 1;

struct ModelWeights {
  GraphEncoderParams graph_encoder;
  TreeEncoderParams tree_encoder;
};

void save_weights(const std::string& path, const ModelWeights& weights);
ModelWeights load_weights(const std::string& path);

/// Byte hash of the serialized frozen encoder; used by the freeze tests.
uint64_t weights_digest(const GraphEncoderParams& params);

}  // namespace redout

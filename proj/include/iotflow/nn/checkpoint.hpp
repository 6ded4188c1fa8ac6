#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "iotflow/nn/network.hpp"

namespace iotflow::nn {

/// Model container, JSON:
///   { "format": "iotflow-model", "version": 1,
///     "input_shape": [...],
///     "layers": [ { "type": "conv1d", ...spec fields...,
///                   "params": [ {"shape": [...], "data": [...]}, ... ],
///                   "state":  [ ... ] }, ... ],
///     "meta": { ...owner-defined, e.g. regime and scalers... } }
/// Doubles are written with round-trip precision, so load(save(net)) is exact.
/// Readers reject any major version other than kCheckpointVersion.
inline constexpr int kCheckpointVersion = 1;

nlohmann::json layer_spec_to_json(const LayerSpec& spec);
LayerSpec layer_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Network& net, const nlohmann::json& meta = nlohmann::json::object());

struct LoadedModel {
  Network network;
  nlohmann::json meta;
};

LoadedModel from_json(const nlohmann::json& j);

}  // namespace iotflow::nn

#include "iotflow/nn/checkpoint.hpp"

#include "iotflow/error.hpp"

namespace iotflow::nn {

using nlohmann::json;

namespace {

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "linear"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "linear") return Activation::linear;
  throw DataError("checkpoint: unknown activation '" + s + "'");
}

json tensor_to_json(const Tensor& t) { return json{{"shape", t.shape()}, {"data", t.values()}}; }

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

void restore(std::span<Tensor> dst, const json& src, const std::string& what, std::size_t layer) {
  if (src.size() != dst.size()) {
    throw DataError("checkpoint: layer " + std::to_string(layer) + " has wrong " + what + " count");
  }
  for (std::size_t k = 0; k < dst.size(); ++k) {
    Tensor t = tensor_from_json(src[k]);
    if (t.shape() != dst[k].shape()) {
      throw DataError("checkpoint: layer " + std::to_string(layer) + " " + what + " shape mismatch");
    }
    dst[k] = std::move(t);
  }
}

}  // namespace

json layer_spec_to_json(const LayerSpec& spec) {
  json j;
  j["type"] = layer_name(spec);
  if (const auto* s = std::get_if<DenseSpec>(&spec)) {
    j["in"] = s->in;
    j["out"] = s->out;
    j["activation"] = activation_name(s->activation);
  } else if (const auto* s = std::get_if<Conv1DSpec>(&spec)) {
    j["filters"] = s->filters;
    j["kernel"] = s->kernel;
    j["activation"] = activation_name(s->activation);
  } else if (const auto* s = std::get_if<MaxPool1DSpec>(&spec)) {
    j["size"] = s->size;
  } else if (const auto* s = std::get_if<LstmSpec>(&spec)) {
    j["units"] = s->units;
    j["return_sequences"] = s->return_sequences;
  } else if (const auto* s = std::get_if<DropoutSpec>(&spec)) {
    j["p"] = s->p;
  } else if (const auto* s = std::get_if<BatchNormSpec>(&spec)) {
    j["epsilon"] = s->epsilon;
    j["momentum"] = s->momentum;
  }
  return j;
}

LayerSpec layer_spec_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "dense") {
    return DenseSpec{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>(),
                     parse_activation(j.at("activation").get<std::string>())};
  }
  if (type == "conv1d") {
    return Conv1DSpec{j.at("filters").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                      parse_activation(j.at("activation").get<std::string>())};
  }
  if (type == "maxpool1d") return MaxPool1DSpec{j.at("size").get<std::size_t>()};
  if (type == "flatten") return FlattenSpec{};
  if (type == "lstm") return LstmSpec{j.at("units").get<std::size_t>(), j.at("return_sequences").get<bool>()};
  if (type == "dropout") return DropoutSpec{j.at("p").get<double>()};
  if (type == "batchnorm") return BatchNormSpec{j.at("epsilon").get<double>(), j.at("momentum").get<double>()};
  throw DataError("checkpoint: unknown layer type '" + type + "'");
}

json to_json(const Network& net, const json& meta) {
  json layers = json::array();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    json l = layer_spec_to_json(net.specs()[i]);
    json params = json::array();
    for (const Tensor& p : net.layer(i).params()) params.push_back(tensor_to_json(p));
    json state = json::array();
    for (const Tensor& s : net.layer(i).state()) state.push_back(tensor_to_json(s));
    l["params"] = std::move(params);
    l["state"] = std::move(state);
    layers.push_back(std::move(l));
  }
  return json{{"format", "iotflow-model"},
              {"version", kCheckpointVersion},
              {"input_shape", net.input_shape()},
              {"layers", std::move(layers)},
              {"meta", meta}};
}

LoadedModel from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "iotflow-model") throw DataError("checkpoint: not a model file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    std::vector<LayerSpec> specs;
    for (const json& l : j.at("layers")) specs.push_back(layer_spec_from_json(l));
    Network net = Network::build(std::move(specs), j.at("input_shape").get<Shape>(), 0);
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
      const json& l = j.at("layers")[i];
      restore(net.layer(i).params(), l.at("params"), "parameter", i);
      restore(net.layer(i).state(), l.at("state"), "state", i);
    }
    return {std::move(net), j.value("meta", json::object())};
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace iotflow::nn

#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "iotflow/nn/tensor.hpp"
#include "iotflow/random.hpp"

namespace iotflow::nn {

enum class Activation { linear, relu };

struct DenseSpec {
  std::size_t in = 1;
  std::size_t out = 1;
  Activation activation = Activation::linear;
  bool operator==(const DenseSpec&) const = default;
};

/// "Valid" convolution over [length, channels] samples.
struct Conv1DSpec {
  std::size_t filters = 1;
  std::size_t kernel = 1;
  Activation activation = Activation::linear;
  bool operator==(const Conv1DSpec&) const = default;
};

/// Non-overlapping windows; a trailing partial window is dropped.
struct MaxPool1DSpec {
  std::size_t size = 2;
  bool operator==(const MaxPool1DSpec&) const = default;
};

struct FlattenSpec {
  bool operator==(const FlattenSpec&) const = default;
};

struct LstmSpec {
  std::size_t units = 1;
  bool return_sequences = false;
  bool operator==(const LstmSpec&) const = default;
};

struct DropoutSpec {
  double p = 0.2;
  bool operator==(const DropoutSpec&) const = default;
};

/// Normalizes the last axis over every other axis (batch, and time for sequences).
struct BatchNormSpec {
  double epsilon = 1e-3;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  bool operator==(const BatchNormSpec&) const = default;
};

using LayerSpec =
    std::variant<DenseSpec, Conv1DSpec, MaxPool1DSpec, FlattenSpec, LstmSpec, DropoutSpec, BatchNormSpec>;

std::string layer_name(const LayerSpec& spec);

/// Dropout is live in train and mc_dropout. Batch norm uses batch statistics
/// only in train.
enum class ExecutionMode { train, infer, mc_dropout };

struct Context {
  ExecutionMode mode = ExecutionMode::infer;
  Rng* rng = nullptr;  // required whenever dropout is live
  /// When set, replaces the rate of every dropout layer (mc_dropout sweeps).
  std::optional<double> dropout_rate;
};

/// Whatever a layer saves during forward for its backward pass.
struct Cache {
  std::vector<Tensor> tensors;
  std::vector<std::size_t> indices;
};

/// Batched layer: every tensor carries a leading batch axis. forward/backward
/// are const; parameters are read, gradients written to caller-owned tensors,
/// so one immutable network can serve many threads.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerSpec spec() const = 0;
  /// Per-sample output shape (no batch axis). Throws ShapeError.
  virtual Shape output_shape(const Shape& input) const = 0;

  virtual Tensor forward(const Tensor& x, const Context& ctx, Cache* cache) const = 0;
  /// Adds parameter gradients into `grads` (same layout as params()) and
  /// returns the gradient with respect to the input.
  virtual Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> grads) const = 0;

  virtual std::span<Tensor> params() { return {}; }
  virtual std::span<const Tensor> params() const { return {}; }
  /// Non-trainable state saved with the model (batch-norm running statistics).
  virtual std::span<Tensor> state() { return {}; }
  virtual std::span<const Tensor> state() const { return {}; }
  /// Folds train-mode batch statistics from `cache` into the running state.
  virtual void update_state(const Cache&) {}

  virtual std::unique_ptr<Layer> clone() const = 0;
};

/// Builds a layer for the given per-sample input shape with Glorot-uniform
/// weights drawn from `init` (biases zero, LSTM forget-gate bias one).
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& input, Rng& init);

}  // namespace iotflow::nn

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "iotflow/nn/layers.hpp"
#include "iotflow/nn/tensor.hpp"
#include "iotflow/random.hpp"

namespace iotflow::nn {

/// Per-layer caches of one forward pass, consumed by backward.
struct Tape {
  std::vector<Cache> caches;
};

/// Gradients for every parameter tensor, in Network::parameters() order.
using Gradients = std::vector<Tensor>;

/// An ordered stack of layers over a fixed per-sample input shape.
class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// Checks adjacent shapes (ShapeError naming the layer index) and
  /// initializes weights from `seed`.
  static Network build(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t layer_count() const { return layers_.size(); }
  /// Per-sample input shape of layer i.
  const Shape& layer_input_shape(std::size_t i) const { return layer_inputs_.at(i); }

  /// Batched forward pass; `x` is [batch, input_shape...]. With a tape, the
  /// per-layer caches needed by backward are recorded.
  Tensor forward(const Tensor& x, const Context& ctx, Tape* tape = nullptr) const;
  Tensor forward(const Tensor& x, ExecutionMode mode, Rng& rng) const;

  /// Gradients of a scalar objective given d(objective)/d(output).
  Gradients backward(const Tape& tape, const Tensor& grad_out, Tensor* grad_input = nullptr) const;

  /// Folds batch-norm statistics recorded on a train-mode tape into running state.
  void commit_state(const Tape& tape);

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> states();
  std::vector<const Tensor*> states() const;
  Gradients zero_gradients() const;
  std::size_t parameter_count() const;

  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

 private:
  std::vector<LayerSpec> specs_;
  Shape input_shape_;
  Shape output_shape_;
  std::vector<Shape> layer_inputs_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

// -- losses -------------------------------------------------------------------

enum class LossKind { mae, mse };

/// MAE = (1/N) sum |x - x_pred|, MSE = (1/N) sum (x - x_pred)^2 over all N elements.
double loss(LossKind kind, const Tensor& prediction, const Tensor& target);
double loss(LossKind kind, std::span<const double> prediction, std::span<const double> target);
/// d loss / d prediction.
Tensor loss_gradient(LossKind kind, const Tensor& prediction, const Tensor& target);

struct LossAndGradients {
  double loss = 0.0;
  Gradients gradients;
};

/// Exact gradients of loss(net(input), target). Train mode by default
/// (batch statistics, live dropout drawn from `rng`).
LossAndGradients backward(const Network& net, const Tensor& input, const Tensor& target, LossKind kind,
                          Rng& rng, ExecutionMode mode = ExecutionMode::train);

// -- optimizer ----------------------------------------------------------------

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update. State is lazily sized on first use.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamHyper& hyper);

// -- training -----------------------------------------------------------------

struct FitOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  AdamHyper adam;
  LossKind loss = LossKind::mse;
  std::uint64_t seed = 0;
};

/// Mini-batch Adam over [N, ...] inputs and targets. Shuffling and dropout are
/// seeded; the result is a pure function of (net, data, options). Returns the
/// mean training loss of every epoch.
std::vector<double> fit(Network& net, const Tensor& inputs, const Tensor& targets, const FitOptions& options);

/// Rows [first, first + count) of a [N, ...] tensor.
Tensor slice_rows(const Tensor& t, std::size_t first, std::size_t count);
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows);

// -- verification ---------------------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Compares analytic gradients of a fixed random projection of the output
/// against central differences (f(theta + eps) - f(theta - eps)) / (2 eps),
/// for every parameter entry and every input entry. Uses train mode so batch
/// statistics are exercised; dropout layers should have p = 0.
GradCheckResult grad_check(const Network& net, const Tensor& input, double eps = 1e-5,
                           std::uint64_t seed = 0);

}  // namespace iotflow::nn

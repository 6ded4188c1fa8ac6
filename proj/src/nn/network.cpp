#include "iotflow/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "iotflow/error.hpp"

namespace iotflow::nn {

Network::Network(const Network& other)
    : specs_(other.specs_),
      input_shape_(other.input_shape_),
      output_shape_(other.output_shape_),
      layer_inputs_(other.layer_inputs_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

Network Network::build(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed) {
  if (specs.empty()) throw std::invalid_argument("network needs at least one layer");
  if (input_shape.empty() || element_count(input_shape) == 0) throw ShapeError("empty network input shape");
  Network net;
  net.specs_ = std::move(specs);
  net.input_shape_ = std::move(input_shape);
  Rng init(seed);
  Shape current = net.input_shape_;
  for (std::size_t i = 0; i < net.specs_.size(); ++i) {
    try {
      auto layer = make_layer(net.specs_[i], current, init);
      net.layer_inputs_.push_back(current);
      current = layer->output_shape(current);
      net.layers_.push_back(std::move(layer));
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + layer_name(net.specs_[i]) + "): " + e.what());
    }
  }
  net.output_shape_ = current;
  return net;
}

Tensor Network::forward(const Tensor& x, const Context& ctx, Tape* tape) const {
  if (tape) {
    tape->caches.clear();
    tape->caches.resize(layers_.size());
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      h = layers_[i]->forward(h, ctx, tape ? &tape->caches[i] : nullptr);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + layer_name(specs_[i]) + "): " + e.what());
    }
  }
  return h;
}

Tensor Network::forward(const Tensor& x, ExecutionMode mode, Rng& rng) const {
  return forward(x, Context{mode, &rng, std::nullopt});
}

Gradients Network::backward(const Tape& tape, const Tensor& grad_out, Tensor* grad_input) const {
  if (tape.caches.size() != layers_.size()) throw std::logic_error("tape does not match network");
  Gradients grads = zero_gradients();
  // Offsets of each layer's parameters in the flat gradient list.
  std::vector<std::size_t> offsets(layers_.size() + 1, 0);
  for (std::size_t i = 0; i < layers_.size(); ++i) offsets[i + 1] = offsets[i] + layers_[i]->params().size();
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    std::span<Tensor> layer_grads(grads.data() + offsets[i], offsets[i + 1] - offsets[i]);
    g = layers_[i]->backward(g, tape.caches[i], layer_grads);
  }
  if (grad_input) *grad_input = std::move(g);
  return grads;
}

void Network::commit_state(const Tape& tape) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->update_state(tape.caches.at(i));
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    for (Tensor& p : l->params()) out.push_back(&p);
  }
  return out;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    for (const Tensor& p : std::as_const(*l).params()) out.push_back(&p);
  }
  return out;
}

std::vector<Tensor*> Network::states() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    for (Tensor& s : l->state()) out.push_back(&s);
  }
  return out;
}

std::vector<const Tensor*> Network::states() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    for (const Tensor& s : std::as_const(*l).state()) out.push_back(&s);
  }
  return out;
}

Gradients Network::zero_gradients() const {
  Gradients g;
  for (const Tensor* p : parameters()) g.emplace_back(p->shape());
  return g;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += p->size();
  return n;
}

// -- losses -------------------------------------------------------------------

double loss(LossKind kind, std::span<const double> prediction, std::span<const double> target) {
  if (prediction.size() != target.size()) throw ShapeError("loss: prediction and target sizes differ");
  if (prediction.empty()) throw ShapeError("loss: empty input");
  double sum = 0.0;
  for (std::size_t n = 0; n < prediction.size(); ++n) {
    const double r = target[n] - prediction[n];
    sum += kind == LossKind::mae ? std::abs(r) : r * r;
  }
  return sum / static_cast<double>(prediction.size());
}

double loss(LossKind kind, const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("loss: shape " + to_string(prediction.shape()) + " vs " + to_string(target.shape()));
  }
  return loss(kind, prediction.data(), target.data());
}

Tensor loss_gradient(LossKind kind, const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("loss: shape " + to_string(prediction.shape()) + " vs " + to_string(target.shape()));
  }
  const auto n = static_cast<double>(prediction.size());
  Tensor g(prediction.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = prediction[i] - target[i];
    g[i] = kind == LossKind::mae ? (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / n : 2.0 * r / n;
  }
  return g;
}

LossAndGradients backward(const Network& net, const Tensor& input, const Tensor& target, LossKind kind,
                          Rng& rng, ExecutionMode mode) {
  Tape tape;
  const Tensor out = net.forward(input, Context{mode, &rng, std::nullopt}, &tape);
  LossAndGradients r;
  r.loss = loss(kind, out, target);
  r.gradients = net.backward(tape, loss_gradient(kind, out, target));
  return r;
}

// -- optimizer ----------------------------------------------------------------

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamHyper& hyper) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (g.size() != p.size()) throw ShapeError("adam: gradient shape mismatch");
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
}

// -- training -----------------------------------------------------------------

Tensor slice_rows(const Tensor& t, std::size_t first, std::size_t count) {
  if (t.rank() == 0 || first + count > t.dim(0)) throw ShapeError("slice_rows out of range");
  const std::size_t row = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = count;
  const auto begin = t.values().begin() + static_cast<std::ptrdiff_t>(first * row);
  return Tensor(std::move(shape), std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * row)));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (t.rank() == 0) throw ShapeError("gather_rows on scalar");
  const std::size_t row = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = rows.size();
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.dim(0)) throw ShapeError("gather_rows out of range");
    std::copy_n(t.ptr() + rows[i] * row, row, out.ptr() + i * row);
  }
  return out;
}

std::vector<double> fit(Network& net, const Tensor& inputs, const Tensor& targets, const FitOptions& options) {
  if (inputs.rank() == 0 || inputs.dim(0) == 0) throw DataError("fit: empty dataset");
  if (targets.rank() == 0 || targets.dim(0) != inputs.dim(0)) {
    throw ShapeError("fit: inputs and targets have different sample counts");
  }
  if (options.batch_size == 0) throw std::invalid_argument("fit: batch size must be >= 1");
  const std::size_t n = inputs.dim(0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = make_rng(options.seed, 1);
  Rng dropout_rng = make_rng(options.seed, 2);
  AdamState adam;
  const auto params = net.parameters();
  std::vector<double> history;
  history.reserve(options.epochs);
  Tape tape;
  // A singleton trailing batch has no batch variance; it joins the previous batch.
  std::vector<std::pair<std::size_t, std::size_t>> batches;
  for (std::size_t first = 0; first < n; first += options.batch_size) {
    batches.emplace_back(first, std::min(options.batch_size, n - first));
  }
  if (batches.size() > 1 && batches.back().second == 1) {
    batches.pop_back();
    batches.back().second += 1;
  }
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double weighted = 0.0;
    for (const auto& [first, count] : batches) {
      const std::span<const std::size_t> idx(order.data() + first, count);
      const Tensor x = gather_rows(inputs, idx);
      const Tensor y = gather_rows(targets, idx);
      const Tensor out = net.forward(x, Context{ExecutionMode::train, &dropout_rng, std::nullopt}, &tape);
      weighted += loss(options.loss, out, y) * static_cast<double>(count);
      const Gradients grads = net.backward(tape, loss_gradient(options.loss, out, y));
      net.commit_state(tape);
      adam_step(params, grads, adam, options.adam);
    }
    history.push_back(weighted / static_cast<double>(n));
  }
  return history;
}

// -- verification ---------------------------------------------------------------

GradCheckResult grad_check(const Network& net, const Tensor& input, double eps, std::uint64_t seed) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must be in [1e-7, 1e-3]");
  Rng rng(seed);
  Tensor probe;
  {
    Rng dummy(0);
    probe = net.forward(input, ExecutionMode::train, dummy);
  }
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(probe.size())));
  for (double& v : probe.data()) v = normal(rng);
  const Tensor& projection = probe;

  // Objective: sum(net(x) * projection); its output gradient is `projection`.
  const auto objective = [&](const Network& n, const Tensor& x) {
    Rng dropout(seed);
    const Tensor out = n.forward(x, ExecutionMode::train, dropout);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * projection[i];
    return s;
  };

  Tape tape;
  Rng dropout(seed);
  net.forward(input, Context{ExecutionMode::train, &dropout, std::nullopt}, &tape);
  Tensor grad_input;
  const Gradients grads = net.backward(tape, projection, &grad_input);

  GradCheckResult result;
  const auto compare = [&](double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.checked;
  };

  Network work = net;
  auto params = work.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = objective(work, input);
      p[i] = saved - eps;
      const double down = objective(work, input);
      p[i] = saved;
      compare(grads[k][i], (up - down) / (2.0 * eps));
    }
  }
  Tensor x = input;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = objective(net, x);
    x[i] = saved - eps;
    const double down = objective(net, x);
    x[i] = saved;
    compare(grad_input[i], (up - down) / (2.0 * eps));
  }
  return result;
}

}  // namespace iotflow::nn

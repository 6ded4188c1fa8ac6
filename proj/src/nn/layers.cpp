#include "iotflow/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "iotflow/error.hpp"
#include "iotflow/kernels.hpp"

namespace iotflow::nn {

namespace {

using kernels::ConstMatrix;
using kernels::Matrix;

void glorot_uniform(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : w.data()) v = dist(rng);
}

void apply_activation(Activation a, std::span<double> y) {
  if (a == Activation::relu) {
    for (double& v : y) v = v > 0.0 ? v : 0.0;
  }
}

// Gradient through the activation, given the post-activation output.
Tensor activation_grad(Activation a, const Tensor& grad_out, const Tensor& y) {
  Tensor g = grad_out;
  if (a == Activation::relu) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(y[i] > 0.0)) g[i] = 0.0;
    }
  }
  return g;
}

void add_bias_rows(std::span<double> y, std::span<const double> bias) {
  const std::size_t n = bias.size();
  for (std::size_t i = 0; i < y.size(); i += n) {
    for (std::size_t j = 0; j < n; ++j) y[i + j] += bias[j];
  }
}

void add_column_sums(std::span<const double> g, std::span<double> out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < g.size(); i += n) {
    for (std::size_t j = 0; j < n; ++j) out[j] += g[i + j];
  }
}

std::size_t batch_of(const Tensor& x, const Shape& sample, std::size_t layer_hint) {
  if (x.rank() != sample.size() + 1 || !std::equal(sample.begin(), sample.end(), x.shape().begin() + 1)) {
    (void)layer_hint;
    throw ShapeError("expected input of per-sample shape " + to_string(sample) + ", got batch " +
                     to_string(x.shape()));
  }
  return x.dim(0);
}

Shape with_batch(std::size_t batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// --------------------------------------------------------------------------

class Dense final : public Layer {
 public:
  Dense(const DenseSpec& s, const Shape& input, Rng& rng) : spec_(s), input_(input) {
    output_shape(input);
    params_[0] = Tensor({s.in, s.out});
    params_[1] = Tensor({s.out});
    glorot_uniform(params_[0], s.in, s.out, rng);
  }

  LayerSpec spec() const override { return spec_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 1 || input[0] != spec_.in) {
      throw ShapeError("dense expects [" + std::to_string(spec_.in) + "], got " + to_string(input));
    }
    return {spec_.out};
  }

  Tensor forward(const Tensor& x, const Context&, Cache* cache) const override {
    const std::size_t batch = batch_of(x, input_, 0);
    Tensor y({batch, spec_.out});
    kernels::matmul(kernels::view(x.data(), batch, spec_.in), kernels::view(params_[0].data(), spec_.in, spec_.out),
                    kernels::view(y.data(), batch, spec_.out));
    add_bias_rows(y.data(), params_[1].data());
    apply_activation(spec_.activation, y.data());
    if (cache) cache->tensors = {x, y};
    return y;
  }

  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> grads) const override {
    const Tensor& x = cache.tensors[0];
    const std::size_t batch = x.dim(0);
    const Tensor g = activation_grad(spec_.activation, grad_out, cache.tensors[1]);
    kernels::matmul_tn(kernels::view(x.data(), batch, spec_.in), kernels::view(g.data(), batch, spec_.out),
                       kernels::view(grads[0].data(), spec_.in, spec_.out), true);
    add_column_sums(g.data(), grads[1].data());
    Tensor dx({batch, spec_.in});
    kernels::matmul_nt(kernels::view(g.data(), batch, spec_.out), kernels::view(params_[0].data(), spec_.in, spec_.out),
                       kernels::view(dx.data(), batch, spec_.in));
    return dx;
  }

  std::span<Tensor> params() override { return params_; }
  std::span<const Tensor> params() const override { return params_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

 private:
  DenseSpec spec_;
  Shape input_;
  std::array<Tensor, 2> params_;  // weights [in, out], bias [out]
};

// --------------------------------------------------------------------------

class Conv1D final : public Layer {
 public:
  Conv1D(const Conv1DSpec& s, const Shape& input, Rng& rng) : spec_(s), input_(input) {
    output_shape(input);
    channels_ = input[1];
    params_[0] = Tensor({s.kernel * channels_, s.filters});
    params_[1] = Tensor({s.filters});
    glorot_uniform(params_[0], s.kernel * channels_, s.kernel * s.filters, rng);
  }

  LayerSpec spec() const override { return spec_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 2 || input[0] < spec_.kernel || input[1] == 0) {
      throw ShapeError("conv1d with kernel " + std::to_string(spec_.kernel) +
                       " expects [length >= kernel, channels], got " + to_string(input));
    }
    return {input[0] - spec_.kernel + 1, spec_.filters};
  }

  Tensor forward(const Tensor& x, const Context&, Cache* cache) const override {
    const std::size_t batch = batch_of(x, input_, 0);
    const std::size_t len = input_[0];
    const std::size_t out_len = len - spec_.kernel + 1;
    const std::size_t window = spec_.kernel * channels_;
    Tensor y({batch, out_len, spec_.filters});
    const auto w = kernels::view(params_[0].data(), window, spec_.filters);
    for (std::size_t b = 0; b < batch; ++b) {
      // Row t of the window matrix is x[b, t : t + kernel, :], contiguous.
      const ConstMatrix windows{x.ptr() + b * len * channels_, out_len, window, channels_};
      const Matrix out{y.ptr() + b * out_len * spec_.filters, out_len, spec_.filters, spec_.filters};
      kernels::matmul(windows, w, out);
    }
    add_bias_rows(y.data(), params_[1].data());
    apply_activation(spec_.activation, y.data());
    if (cache) cache->tensors = {x, y};
    return y;
  }

  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> grads) const override {
    const Tensor& x = cache.tensors[0];
    const std::size_t batch = x.dim(0);
    const std::size_t len = input_[0];
    const std::size_t out_len = len - spec_.kernel + 1;
    const std::size_t window = spec_.kernel * channels_;
    const Tensor g = activation_grad(spec_.activation, grad_out, cache.tensors[1]);
    add_column_sums(g.data(), grads[1].data());

    const auto w = kernels::view(params_[0].data(), window, spec_.filters);
    const auto dw = kernels::view(grads[0].data(), window, spec_.filters);
    Tensor dx(x.shape());
    std::vector<double> dwindows(out_len * window);
    for (std::size_t b = 0; b < batch; ++b) {
      const ConstMatrix windows{x.ptr() + b * len * channels_, out_len, window, channels_};
      const ConstMatrix gb{g.ptr() + b * out_len * spec_.filters, out_len, spec_.filters, spec_.filters};
      kernels::matmul_tn(windows, gb, dw, true);
      kernels::matmul_nt(gb, w, kernels::view(std::span<double>(dwindows), out_len, window));
      double* dxb = dx.ptr() + b * len * channels_;
      for (std::size_t t = 0; t < out_len; ++t) {
        double* dst = dxb + t * channels_;
        const double* src = dwindows.data() + t * window;
        for (std::size_t j = 0; j < window; ++j) dst[j] += src[j];
      }
    }
    return dx;
  }

  std::span<Tensor> params() override { return params_; }
  std::span<const Tensor> params() const override { return params_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1D>(*this); }

 private:
  Conv1DSpec spec_;
  Shape input_;
  std::size_t channels_ = 0;
  std::array<Tensor, 2> params_;  // weights [kernel * channels, filters], bias [filters]
};

// --------------------------------------------------------------------------

class MaxPool1D final : public Layer {
 public:
  MaxPool1D(const MaxPool1DSpec& s, const Shape& input) : spec_(s), input_(input) { output_shape(input); }

  LayerSpec spec() const override { return spec_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 2 || spec_.size == 0 || input[0] < spec_.size) {
      throw ShapeError("maxpool1d of size " + std::to_string(spec_.size) + " expects [length >= size, channels], got " +
                       to_string(input));
    }
    return {input[0] / spec_.size, input[1]};
  }

  Tensor forward(const Tensor& x, const Context&, Cache* cache) const override {
    const std::size_t batch = batch_of(x, input_, 0);
    const std::size_t len = input_[0];
    const std::size_t ch = input_[1];
    const std::size_t out_len = len / spec_.size;
    Tensor y({batch, out_len, ch});
    std::vector<std::size_t> argmax(y.size());
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < out_len; ++o) {
        for (std::size_t c = 0; c < ch; ++c) {
          std::size_t best = (b * len + o * spec_.size) * ch + c;
          for (std::size_t j = 1; j < spec_.size; ++j) {
            const std::size_t idx = (b * len + o * spec_.size + j) * ch + c;
            if (x[idx] > x[best]) best = idx;
          }
          const std::size_t out = (b * out_len + o) * ch + c;
          y[out] = x[best];
          argmax[out] = best;
        }
      }
    }
    if (cache) {
      cache->tensors = {Tensor(x.shape())};  // shape carrier for backward
      cache->indices = std::move(argmax);
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor>) const override {
    Tensor dx(cache.tensors[0].shape());
    for (std::size_t i = 0; i < grad_out.size(); ++i) dx[cache.indices[i]] += grad_out[i];
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool1D>(*this); }

 private:
  MaxPool1DSpec spec_;
  Shape input_;
};

// --------------------------------------------------------------------------

class Flatten final : public Layer {
 public:
  explicit Flatten(const Shape& input) : input_(input) { output_shape(input); }

  LayerSpec spec() const override { return FlattenSpec{}; }

  Shape output_shape(const Shape& input) const override {
    if (input.empty()) throw ShapeError("flatten expects a non-scalar sample");
    return {element_count(input)};
  }

  Tensor forward(const Tensor& x, const Context&, Cache*) const override {
    const std::size_t batch = batch_of(x, input_, 0);
    return x.reshaped({batch, element_count(input_)});
  }

  Tensor backward(const Tensor& grad_out, const Cache&, std::span<Tensor>) const override {
    return grad_out.reshaped(with_batch(grad_out.dim(0), input_));
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  Shape input_;
};

// --------------------------------------------------------------------------

// Gate layout along the 4U axis: input, forget, candidate, output.
class Lstm final : public Layer {
 public:
  Lstm(const LstmSpec& s, const Shape& input, Rng& rng) : spec_(s), input_(input) {
    output_shape(input);
    const std::size_t u = s.units;
    const std::size_t c = input[1];
    params_[0] = Tensor({c, 4 * u});
    params_[1] = Tensor({u, 4 * u});
    params_[2] = Tensor({4 * u});
    glorot_uniform(params_[0], c, 4 * u, rng);
    glorot_uniform(params_[1], u, 4 * u, rng);
    for (std::size_t j = u; j < 2 * u; ++j) params_[2][j] = 1.0;
  }

  LayerSpec spec() const override { return spec_; }

  Shape output_shape(const Shape& input) const override {
    if (input.size() != 2 || input[0] == 0 || input[1] == 0 || spec_.units == 0) {
      throw ShapeError("lstm expects [time, features], got " + to_string(input));
    }
    if (spec_.return_sequences) return {input[0], spec_.units};
    return {spec_.units};
  }

  Tensor forward(const Tensor& x, const Context&, Cache* cache) const override {
    const std::size_t batch = batch_of(x, input_, 0);
    const std::size_t steps = input_[0];
    const std::size_t feat = input_[1];
    const std::size_t u = spec_.units;
    const std::size_t g4 = 4 * u;

    Tensor gates({batch, steps, g4});
    kernels::matmul(kernels::view(x.data(), batch * steps, feat), kernels::view(params_[0].data(), feat, g4),
                    kernels::view(gates.data(), batch * steps, g4));
    add_bias_rows(gates.data(), params_[2].data());

    Tensor cell({batch, steps, u});
    Tensor hidden({batch, steps, u});
    const auto recurrent = kernels::view(params_[1].data(), u, g4);
    for (std::size_t t = 0; t < steps; ++t) {
      const Matrix z{gates.ptr() + t * g4, batch, g4, steps * g4};
      if (t > 0) {
        const ConstMatrix h_prev{hidden.ptr() + (t - 1) * u, batch, u, steps * u};
        kernels::matmul(h_prev, recurrent, z, true);
      }
      for (std::size_t b = 0; b < batch; ++b) {
        double* zr = z.row(b);
        const std::size_t off = (b * steps + t) * u;
        for (std::size_t k = 0; k < u; ++k) {
          const double i = sigmoid(zr[k]);
          const double f = sigmoid(zr[u + k]);
          const double g = std::tanh(zr[2 * u + k]);
          const double o = sigmoid(zr[3 * u + k]);
          zr[k] = i;
          zr[u + k] = f;
          zr[2 * u + k] = g;
          zr[3 * u + k] = o;
          const double c_prev = t > 0 ? cell[off - u + k] : 0.0;
          const double c = f * c_prev + i * g;
          cell[off + k] = c;
          hidden[off + k] = o * std::tanh(c);
        }
      }
    }

    Tensor y;
    if (spec_.return_sequences) {
      y = hidden;
    } else {
      y = Tensor({batch, u});
      for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(hidden.ptr() + ((b + 1) * steps - 1) * u, u, y.ptr() + b * u);
      }
    }
    if (cache) cache->tensors = {x, std::move(gates), std::move(cell), std::move(hidden)};
    return y;
  }

  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> grads) const override {
    const Tensor& x = cache.tensors[0];
    const Tensor& gates = cache.tensors[1];
    const Tensor& cell = cache.tensors[2];
    const Tensor& hidden = cache.tensors[3];
    const std::size_t batch = x.dim(0);
    const std::size_t steps = input_[0];
    const std::size_t feat = input_[1];
    const std::size_t u = spec_.units;
    const std::size_t g4 = 4 * u;

    Tensor dz({batch, steps, g4});
    std::vector<double> dh_next(batch * u, 0.0);
    std::vector<double> dc_next(batch * u, 0.0);
    const auto recurrent = kernels::view(params_[1].data(), u, g4);

    for (std::size_t t = steps; t-- > 0;) {
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * steps + t) * u;
        const double* gr = gates.ptr() + (b * steps + t) * g4;
        double* dzr = dz.ptr() + (b * steps + t) * g4;
        for (std::size_t k = 0; k < u; ++k) {
          double dh = dh_next[b * u + k];
          if (spec_.return_sequences) {
            dh += grad_out[off + k];
          } else if (t == steps - 1) {
            dh += grad_out[b * u + k];
          }
          const double i = gr[k];
          const double f = gr[u + k];
          const double g = gr[2 * u + k];
          const double o = gr[3 * u + k];
          const double c = cell[off + k];
          const double c_prev = t > 0 ? cell[off - u + k] : 0.0;
          const double tc = std::tanh(c);
          const double dc = dh * o * (1.0 - tc * tc) + dc_next[b * u + k];
          dzr[k] = dc * g * i * (1.0 - i);
          dzr[u + k] = dc * c_prev * f * (1.0 - f);
          dzr[2 * u + k] = dc * i * (1.0 - g * g);
          dzr[3 * u + k] = dh * tc * o * (1.0 - o);
          dc_next[b * u + k] = dc * f;
        }
      }
      const ConstMatrix dz_t{dz.ptr() + t * g4, batch, g4, steps * g4};
      kernels::matmul_nt(dz_t, recurrent, kernels::view(std::span<double>(dh_next), batch, u));
    }

    const std::size_t rows = batch * steps;
    const auto dz_all = kernels::view(dz.data(), rows, g4);
    kernels::matmul_tn(kernels::view(x.data(), rows, feat), dz_all, kernels::view(grads[0].data(), feat, g4), true);

    std::vector<double> h_prev(rows * u, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 1; t < steps; ++t) {
        std::copy_n(hidden.ptr() + (b * steps + t - 1) * u, u, h_prev.data() + (b * steps + t) * u);
      }
    }
    kernels::matmul_tn(kernels::view(std::span<const double>(h_prev), rows, u), dz_all,
                       kernels::view(grads[1].data(), u, g4), true);
    add_column_sums(dz.data(), grads[2].data());

    Tensor dx(x.shape());
    kernels::matmul_nt(dz_all, kernels::view(params_[0].data(), feat, g4), kernels::view(dx.data(), rows, feat));
    return dx;
  }

  std::span<Tensor> params() override { return params_; }
  std::span<const Tensor> params() const override { return params_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Lstm>(*this); }

 private:
  LstmSpec spec_;
  Shape input_;
  std::array<Tensor, 3> params_;  // input weights [C, 4U], recurrent [U, 4U], bias [4U]
};

// --------------------------------------------------------------------------

class Dropout final : public Layer {
 public:
  Dropout(const DropoutSpec& s, const Shape& input) : spec_(s), input_(input) {
    if (!(s.p >= 0.0 && s.p < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  }

  LayerSpec spec() const override { return spec_; }
  Shape output_shape(const Shape& input) const override { return input; }

  Tensor forward(const Tensor& x, const Context& ctx, Cache* cache) const override {
    batch_of(x, input_, 0);
    double p = spec_.p;
    if (ctx.mode == ExecutionMode::mc_dropout && ctx.dropout_rate) p = *ctx.dropout_rate;
    if (ctx.mode == ExecutionMode::infer || p == 0.0) {
      if (cache) cache->tensors.clear();
      return x;
    }
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
    if (ctx.rng == nullptr) throw std::logic_error("live dropout needs an rng");
    Rng& rng = *ctx.rng;
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor mask(x.shape());
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      mask[i] = u >= p ? keep_scale : 0.0;
      y[i] = x[i] * mask[i];
    }
    if (cache) cache->tensors = {std::move(mask)};
    return y;
  }

  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor>) const override {
    if (cache.tensors.empty()) return grad_out;
    Tensor dx = grad_out;
    const Tensor& mask = cache.tensors[0];
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

 private:
  DropoutSpec spec_;
  Shape input_;
};

// --------------------------------------------------------------------------

class BatchNorm final : public Layer {
 public:
  BatchNorm(const BatchNormSpec& s, const Shape& input) : spec_(s), input_(input) {
    output_shape(input);
    const std::size_t f = input.back();
    params_[0] = Tensor({f}, 1.0);
    params_[1] = Tensor({f}, 0.0);
    state_[0] = Tensor({f}, 0.0);
    state_[1] = Tensor({f}, 1.0);
  }

  LayerSpec spec() const override { return spec_; }

  Shape output_shape(const Shape& input) const override {
    if (input.empty() || input.back() == 0) throw ShapeError("batchnorm expects a non-empty feature axis");
    return input;
  }

  // cache: tensors {xhat, inv_std, batch_mean, batch_var}; indices {1} in train mode.
  Tensor forward(const Tensor& x, const Context& ctx, Cache* cache) const override {
    batch_of(x, input_, 0);
    const std::size_t f = input_.back();
    const std::size_t m = x.size() / f;
    const Tensor& gamma = params_[0];
    const Tensor& beta = params_[1];
    Tensor inv_std({f});
    Tensor mean({f});
    Tensor var({f});
    const bool train = ctx.mode == ExecutionMode::train;
    if (train) {
      for (std::size_t i = 0; i < x.size(); i += f) {
        for (std::size_t j = 0; j < f; ++j) mean[j] += x[i + j];
      }
      for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(m);
      for (std::size_t i = 0; i < x.size(); i += f) {
        for (std::size_t j = 0; j < f; ++j) {
          const double d = x[i + j] - mean[j];
          var[j] += d * d;
        }
      }
      for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(m);
    } else {
      mean = state_[0];
      var = state_[1];
    }
    for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + spec_.epsilon);

    Tensor xhat(x.shape());
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); i += f) {
      for (std::size_t j = 0; j < f; ++j) {
        xhat[i + j] = (x[i + j] - mean[j]) * inv_std[j];
        y[i + j] = gamma[j] * xhat[i + j] + beta[j];
      }
    }
    if (cache) {
      cache->tensors = {std::move(xhat), std::move(inv_std), std::move(mean), std::move(var)};
      cache->indices = {train ? std::size_t{1} : std::size_t{0}, m};
    }
    return y;
  }

  Tensor backward(const Tensor& grad_out, const Cache& cache, std::span<Tensor> grads) const override {
    const Tensor& xhat = cache.tensors[0];
    const Tensor& inv_std = cache.tensors[1];
    const bool train = cache.indices[0] == 1;
    const std::size_t f = input_.back();
    const auto m = static_cast<double>(cache.indices[1]);
    const Tensor& gamma = params_[0];

    std::vector<double> sum_g(f, 0.0);
    std::vector<double> sum_gx(f, 0.0);
    for (std::size_t i = 0; i < grad_out.size(); i += f) {
      for (std::size_t j = 0; j < f; ++j) {
        sum_g[j] += grad_out[i + j];
        sum_gx[j] += grad_out[i + j] * xhat[i + j];
      }
    }
    for (std::size_t j = 0; j < f; ++j) {
      grads[0][j] += sum_gx[j];
      grads[1][j] += sum_g[j];
    }
    Tensor dx(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.size(); i += f) {
      for (std::size_t j = 0; j < f; ++j) {
        const double scale = gamma[j] * inv_std[j];
        dx[i + j] = train ? scale / m * (m * grad_out[i + j] - sum_g[j] - xhat[i + j] * sum_gx[j])
                          : scale * grad_out[i + j];
      }
    }
    return dx;
  }

  void update_state(const Cache& cache) override {
    if (cache.indices.empty() || cache.indices[0] != 1) return;
    const Tensor& mean = cache.tensors[2];
    const Tensor& var = cache.tensors[3];
    const auto m = static_cast<double>(cache.indices[1]);
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    const double mom = spec_.momentum;
    for (std::size_t j = 0; j < mean.size(); ++j) {
      state_[0][j] = mom * state_[0][j] + (1.0 - mom) * mean[j];
      state_[1][j] = mom * state_[1][j] + (1.0 - mom) * var[j] * unbias;
    }
  }

  std::span<Tensor> params() override { return params_; }
  std::span<const Tensor> params() const override { return params_; }
  std::span<Tensor> state() override { return state_; }
  std::span<const Tensor> state() const override { return state_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

 private:
  BatchNormSpec spec_;
  Shape input_;
  std::array<Tensor, 2> params_;  // gamma, beta
  std::array<Tensor, 2> state_;   // running mean, running variance
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

std::string layer_name(const LayerSpec& spec) {
  return std::visit(Overloaded{
                        [](const DenseSpec&) { return std::string("dense"); },
                        [](const Conv1DSpec&) { return std::string("conv1d"); },
                        [](const MaxPool1DSpec&) { return std::string("maxpool1d"); },
                        [](const FlattenSpec&) { return std::string("flatten"); },
                        [](const LstmSpec&) { return std::string("lstm"); },
                        [](const DropoutSpec&) { return std::string("dropout"); },
                        [](const BatchNormSpec&) { return std::string("batchnorm"); },
                    },
                    spec);
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& input, Rng& init) {
  return std::visit(Overloaded{
                        [&](const DenseSpec& s) -> std::unique_ptr<Layer> { return std::make_unique<Dense>(s, input, init); },
                        [&](const Conv1DSpec& s) -> std::unique_ptr<Layer> { return std::make_unique<Conv1D>(s, input, init); },
                        [&](const MaxPool1DSpec& s) -> std::unique_ptr<Layer> { return std::make_unique<MaxPool1D>(s, input); },
                        [&](const FlattenSpec&) -> std::unique_ptr<Layer> { return std::make_unique<Flatten>(input); },
                        [&](const LstmSpec& s) -> std::unique_ptr<Layer> { return std::make_unique<Lstm>(s, input, init); },
                        [&](const DropoutSpec& s) -> std::unique_ptr<Layer> { return std::make_unique<Dropout>(s, input); },
                        [&](const BatchNormSpec& s) -> std::unique_ptr<Layer> { return std::make_unique<BatchNorm>(s, input); },
                    },
                    spec);
}

}  // namespace iotflow::nn

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "iotflow/error.hpp"
#include "iotflow/nn/checkpoint.hpp"
#include "iotflow/nn/network.hpp"

using namespace iotflow;
using namespace iotflow::nn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Tensor infer(const Network& net, const Tensor& x) {
  Rng rng(0);
  return net.forward(x, ExecutionMode::infer, rng);
}

}  // namespace

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).dim(0) == 3);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
  CHECK(t.all_finite());
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("build rejects incompatible layers with the layer index") {
  CHECK_THROWS_WITH_AS(Network::build({DenseSpec{3, 4}, DenseSpec{5, 1}}, {3}, 1), doctest::Contains("layer 1"),
                       ShapeError);
  CHECK_THROWS_AS(Network::build({Conv1DSpec{4, 7}}, {5, 1}, 1), ShapeError);
  CHECK_THROWS_AS(Network::build({DropoutSpec{1.0}}, {3}, 1), std::invalid_argument);
  CHECK_THROWS_AS(Network::build({LstmSpec{0}}, {5, 1}, 1), ShapeError);

  const auto cnn = Network::build({Conv1DSpec{64, 3, Activation::relu}, MaxPool1DSpec{2}, Conv1DSpec{64, 3, Activation::relu},
                                   MaxPool1DSpec{2}, Conv1DSpec{64, 3, Activation::relu}, MaxPool1DSpec{2}, FlattenSpec{},
                                   BatchNormSpec{}, DropoutSpec{0.2}, DenseSpec{3904, 168}},
                                  {504, 1}, 1);
  CHECK(cnn.output_shape() == Shape{168});
  CHECK(cnn.layer_input_shape(6) == Shape{61, 64});
}

TEST_CASE("dense forward and hand chain rule") {
  auto net = Network::build({DenseSpec{1, 1}}, {1}, 1);
  net.parameters()[0]->values() = {2.0};
  net.parameters()[1]->values() = {0.0};
  const Tensor x({1, 1}, 3.0);
  CHECK(infer(net, x)[0] == 6.0);
  Rng rng(0);
  const auto lg = backward(net, x, Tensor({1, 1}, 0.0), LossKind::mse, rng);
  CHECK(lg.loss == doctest::Approx(36.0));
  CHECK(lg.gradients[0][0] == doctest::Approx(36.0));
  CHECK(lg.gradients[1][0] == doctest::Approx(12.0));

  const auto zero = backward(net, x, Tensor({1, 1}, 6.0), LossKind::mse, rng);
  for (const auto& g : zero.gradients)
    for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("lstm single step equals hand evaluation") {
  auto net = Network::build({LstmSpec{1, false}}, {1, 1}, 1);
  auto params = net.parameters();
  params[0]->values() = {0.3, -0.2, 0.5, 0.7};  // W: i f g o
  params[1]->values() = {0.1, 0.4, -0.6, 0.2};  // U
  params[2]->values() = {0.05, 1.0, -0.1, 0.0};  // b
  const Tensor x({1, 1, 1}, 0.8);
  const double i = sigmoid(0.3 * 0.8 + 0.05), f = sigmoid(-0.2 * 0.8 + 1.0);
  const double g = std::tanh(0.5 * 0.8 - 0.1), o = sigmoid(0.7 * 0.8);
  const double c = f * 0.0 + i * g;
  CHECK(infer(net, x)[0] == doctest::Approx(o * std::tanh(c)).epsilon(1e-14));

  // Two further steps exercise the recurrent weights.
  const std::vector<double> seq = {0.8, -0.4, 1.1};
  double h = 0.0, cs = 0.0;
  const auto& W = params[0]->values();
  const auto& U = params[1]->values();
  const auto& B = params[2]->values();
  for (double xt : seq) {
    const double zi = W[0] * xt + U[0] * h + B[0], zf = W[1] * xt + U[1] * h + B[1];
    const double zg = W[2] * xt + U[2] * h + B[2], zo = W[3] * xt + U[3] * h + B[3];
    cs = sigmoid(zf) * cs + sigmoid(zi) * std::tanh(zg);
    h = sigmoid(zo) * std::tanh(cs);
  }
  auto longer = Network::build({LstmSpec{1, false}}, {3, 1}, 1);
  for (std::size_t k = 0; k < 3; ++k) *longer.parameters()[k] = *params[k];
  CHECK(infer(longer, Tensor({1, 3, 1}, seq))[0] == doctest::Approx(h).epsilon(1e-14));

  for (auto* p : longer.parameters()) p->fill(0.0);
  CHECK(infer(longer, Tensor({1, 3, 1}, seq))[0] == 0.0);
}

TEST_CASE("lstm returns sequences of the right shape") {
  const auto net = Network::build({LstmSpec{4, true}, LstmSpec{3, false}}, {6, 2}, 3);
  const auto y = infer(net, random_tensor({5, 6, 2}, 1));
  CHECK(y.shape() == Shape{5, 3});
  CHECK(net.layer_input_shape(1) == Shape{6, 4});
}

TEST_CASE("losses match their definitions") {
  const auto p = random_tensor({7, 5}, 2);
  const auto t = random_tensor({7, 5}, 3);
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    abs_sum += std::fabs(t[i] - p[i]);
    sq_sum += (t[i] - p[i]) * (t[i] - p[i]);
  }
  CHECK(loss(LossKind::mae, p, t) == doctest::Approx(abs_sum / 35.0).epsilon(1e-14));
  CHECK(loss(LossKind::mse, p, t) == doctest::Approx(sq_sum / 35.0).epsilon(1e-14));
  const std::vector<double> a = {1, 2, 3}, b = {1, 2, 5};
  CHECK(loss(LossKind::mae, a, b) == doctest::Approx(2.0 / 3.0));
  CHECK(loss(LossKind::mse, a, b) == doctest::Approx(4.0 / 3.0));
  CHECK_THROWS_AS(loss(LossKind::mae, p, Tensor({5, 7})), ShapeError);
}

TEST_CASE("gradient check for every layer type") {
  struct Case {
    const char* name;
    std::vector<LayerSpec> specs;
    Shape input;
    std::size_t batch;
    double tolerance;
  };
  const std::vector<Case> cases = {
      {"dense", {DenseSpec{4, 3}}, {4}, 3, 1e-6},
      {"dense relu", {DenseSpec{4, 6, Activation::relu}, DenseSpec{6, 2}}, {4}, 3, 1e-4},
      {"lstm", {LstmSpec{4, false}}, {5, 2}, 2, 1e-5},
      {"lstm sequences", {LstmSpec{3, true}, LstmSpec{2, false}}, {5, 2}, 2, 1e-5},
      {"conv pool", {Conv1DSpec{3, 3}, MaxPool1DSpec{2}, FlattenSpec{}, DenseSpec{12, 2}}, {10, 2}, 2, 1e-5},
      {"conv relu", {Conv1DSpec{4, 2, Activation::relu}, FlattenSpec{}}, {6, 1}, 2, 1e-4},
      {"batch norm", {DenseSpec{3, 4}, BatchNormSpec{}}, {3}, 5, 1e-4},
      {"sequence batch norm", {LstmSpec{3, true}, BatchNormSpec{}, FlattenSpec{}}, {4, 2}, 3, 1e-4},
      {"dropout off", {DenseSpec{3, 4}, DropoutSpec{0.0}, DenseSpec{4, 2}}, {3}, 2, 1e-6},
      {"conv lstm", {Conv1DSpec{4, 3, Activation::relu}, MaxPool1DSpec{2}, LstmSpec{3, true}, LstmSpec{3, false},
                     BatchNormSpec{}, DropoutSpec{0.0}, DenseSpec{3, 4}},
       {12, 1}, 3, 1e-4},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto net = Network::build(c.specs, c.input, seed);
      Shape shape = c.input;
      shape.insert(shape.begin(), c.batch);
      const auto r = grad_check(net, random_tensor(shape, 100 + seed), 1e-5, seed);
      CHECK(r.checked > 0);
      CHECK(r.max_relative_error < c.tolerance);
    }
  }
  const auto net = Network::build({DenseSpec{1, 1}}, {1}, 1);
  CHECK_THROWS(grad_check(net, Tensor({1, 1}), 1e-2));
}

TEST_CASE("infer mode is pure; train uses batch statistics") {
  const auto net = Network::build({DenseSpec{3, 4}, BatchNormSpec{}, DropoutSpec{0.5}, DenseSpec{4, 2}}, {3}, 4);
  const auto x = random_tensor({6, 3}, 4);
  Rng a(1), b(99);
  CHECK(net.forward(x, ExecutionMode::infer, a) == net.forward(x, ExecutionMode::infer, b));
  Rng c(1);
  CHECK(net.forward(x, ExecutionMode::train, c) != net.forward(x, ExecutionMode::infer, c));
}

TEST_CASE("batch norm train output has mean beta and variance near gamma squared") {
  auto net = Network::build({BatchNormSpec{}}, {3}, 1);
  net.parameters()[0]->values() = {1.5, 0.5, 2.0};
  net.parameters()[1]->values() = {0.2, -1.0, 3.0};
  const auto x = random_tensor({200, 3}, 5, 4.0);
  Rng rng(0);
  Tape tape;
  const auto y = net.forward(x, Context{ExecutionMode::train, &rng});
  for (std::size_t f = 0; f < 3; ++f) {
    double mx = 0.0, vx = 0.0, my = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < 200; ++i) mx += x[i * 3 + f] / 200.0, my += y[i * 3 + f] / 200.0;
    for (std::size_t i = 0; i < 200; ++i)
      vx += std::pow(x[i * 3 + f] - mx, 2) / 200.0, vy += std::pow(y[i * 3 + f] - my, 2) / 200.0;
    const double gamma = net.parameters()[0]->values()[f];
    CHECK(my == doctest::Approx(net.parameters()[1]->values()[f]).epsilon(1e-10));
    CHECK(vy == doctest::Approx(gamma * gamma * vx / (vx + 1e-3)).epsilon(1e-10));
  }

  // Running statistics move towards the batch statistics with momentum 0.9.
  net.forward(x, Context{ExecutionMode::train, &rng}, &tape);
  net.commit_state(tape);
  const auto states = net.states();
  double m0 = 0.0;
  for (std::size_t i = 0; i < 200; ++i) m0 += x[i * 3] / 200.0;
  CHECK(states[0]->values()[0] == doctest::Approx(0.1 * m0));
}

TEST_CASE("mc dropout zeroes with probability p and is unbiased") {
  const auto net = Network::build({DropoutSpec{0.2}}, {1000}, 1);
  const Tensor x({1, 1000}, 1.0);
  Rng rng(7);
  constexpr int kSamples = 200;
  double zeros = 0.0, sum = 0.0;
  for (int s = 0; s < kSamples; ++s) {
    const auto y = net.forward(x, Context{ExecutionMode::mc_dropout, &rng});
    for (double v : y.values()) {
      zeros += v == 0.0;
      sum += v;
      if (v != 0.0) CHECK(v == doctest::Approx(1.25));
    }
  }
  const double n = 1000.0 * kSamples;
  const double se_p = std::sqrt(0.2 * 0.8 / n);
  CHECK(std::fabs(zeros / n - 0.2) < 3 * se_p);
  // Per-unit output has variance p/(1-p); its mean should be 1 within 3 SE.
  CHECK(std::fabs(sum / n - 1.0) < 3 * std::sqrt(0.25 / n));

  Rng r2(7);
  const auto y = net.forward(x, Context{ExecutionMode::mc_dropout, &r2, 0.5});
  std::size_t z = 0;
  for (double v : y.values()) z += v == 0.0;
  CHECK(z > 400);
  CHECK(z < 600);
  CHECK(net.forward(x, ExecutionMode::infer, r2) == x);
}

TEST_CASE("adam step") {
  Tensor p({2}, std::vector<double>{1.0, -1.0});
  std::vector<Tensor*> params = {&p};
  AdamState state;
  const AdamHyper hyper;
  adam_step(params, std::vector<Tensor>{Tensor({2}, 0.0)}, state, hyper);
  CHECK(p.values() == std::vector<double>{1.0, -1.0});

  AdamState fresh;
  const std::vector<Tensor> g = {Tensor({2}, std::vector<double>{0.5, -2.0})};
  Tensor q = p;
  std::vector<Tensor*> qp = {&q};
  adam_step(qp, g, fresh, hyper);
  // Bias-corrected first step: m_hat = g, v_hat = g^2.
  CHECK(q[0] == doctest::Approx(1.0 - 1e-3 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(-1.0 + 1e-3 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));

  Tensor r = p, s = p;
  AdamState sr, ss;
  std::vector<Tensor*> rp = {&r}, sp = {&s};
  adam_step(rp, g, sr, hyper);
  adam_step(sp, g, ss, hyper);
  CHECK(r == s);
}

TEST_CASE("fit converges on a linear map and is deterministic") {
  Tensor x({64, 1});
  for (std::size_t i = 0; i < 64; ++i) x[i] = -1.0 + 2.0 * static_cast<double>(i) / 63.0;
  Tensor y = x;
  for (double& v : y.values()) v *= 2.0;

  auto net = Network::build({DenseSpec{1, 1}}, {1}, 5);
  FitOptions opts;
  opts.epochs = 200;
  opts.adam.lr = 0.05;
  opts.seed = 3;
  const auto history = fit(net, x, y, opts);
  CHECK(history.size() == 200);
  CHECK(history.back() < 1e-3);

  auto again = Network::build({DenseSpec{1, 1}}, {1}, 5);
  fit(again, x, y, opts);
  CHECK(*again.parameters()[0] == *net.parameters()[0]);

  auto untouched = Network::build({DenseSpec{1, 1}}, {1}, 5);
  const auto before = *untouched.parameters()[0];
  opts.epochs = 0;
  CHECK(fit(untouched, x, y, opts).empty());
  CHECK(*untouched.parameters()[0] == before);

  CHECK_THROWS_AS(fit(untouched, Tensor({0, 1}), Tensor({0, 1}), opts), DataError);
}

TEST_CASE("fit with dropout and batch norm is deterministic") {
  const auto x = random_tensor({37, 8, 1}, 8);
  const auto y = random_tensor({37, 3}, 9);
  const std::vector<LayerSpec> specs = {Conv1DSpec{4, 3, Activation::relu}, MaxPool1DSpec{2}, FlattenSpec{},
                                        BatchNormSpec{}, DropoutSpec{0.2}, DenseSpec{12, 3}};
  auto a = Network::build(specs, {8, 1}, 2);
  auto b = Network::build(specs, {8, 1}, 2);
  FitOptions opts;
  opts.epochs = 5;
  opts.seed = 11;
  const auto ha = fit(a, x, y, opts);
  const auto hb = fit(b, x, y, opts);
  CHECK(ha == hb);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(*a.parameters()[i] == *b.parameters()[i]);
  CHECK(ha.back() < ha.front());
}

TEST_CASE("checkpoint round trip preserves outputs exactly") {
  const std::vector<LayerSpec> specs = {Conv1DSpec{4, 3, Activation::relu}, MaxPool1DSpec{2}, LstmSpec{3, true},
                                        LstmSpec{2, false}, BatchNormSpec{1e-3, 0.9}, DropoutSpec{0.2},
                                        DenseSpec{2, 5}};
  auto net = Network::build(specs, {16, 1}, 6);
  const auto x = random_tensor({4, 16, 1}, 10);
  Rng rng(1);
  Tape tape;
  net.forward(x, Context{ExecutionMode::train, &rng}, &tape);
  net.commit_state(tape);

  const auto text = to_json(net, {{"regime", "test"}}).dump();
  const auto loaded = from_json(nlohmann::json::parse(text));
  CHECK(loaded.meta["regime"] == "test");
  CHECK(loaded.network.specs() == specs);
  CHECK(infer(loaded.network, x) == infer(net, x));
  for (std::size_t i = 0; i < net.states().size(); ++i) CHECK(*loaded.network.states()[i] == *net.states()[i]);

  auto broken = nlohmann::json::parse(text);
  broken["layers"][0]["params"][0]["data"].erase(0);
  CHECK_THROWS_AS(from_json(broken), DataError);
  CHECK_THROWS_AS(from_json(nlohmann::json::object()), DataError);
  auto future = nlohmann::json::parse(text);
  future["version"] = 99;
  CHECK_THROWS_AS(from_json(future), DataError);
}

TEST_CASE("network copies are independent") {
  auto a = Network::build({DenseSpec{2, 2}}, {2}, 1);
  Network b = a;
  b.parameters()[0]->fill(0.0);
  CHECK(*a.parameters()[0] != *b.parameters()[0]);
}

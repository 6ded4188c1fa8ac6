#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "iotflow/error.hpp"
#include "iotflow/forecast.hpp"

using namespace iotflow;
using namespace iotflow::forecast;

namespace {

// A clean weekly pattern at a given level.
HourlySeries weekly(const std::string& id, double level, std::size_t hours, std::int64_t start = 0) {
  HourlySeries s{id, start, std::vector<double>(hours)};
  for (std::size_t h = 0; h < hours; ++h) {
    const double day = std::cos(2.0 * M_PI * static_cast<double>(h % 24) / 24.0);
    const double week = (h / 24) % 7 >= 5 ? 0.6 : 1.0;
    s.values[h] = level * week * (1.0 + 0.5 * day);
  }
  return s;
}

TrainingOptions quick(std::size_t epochs) {
  TrainingOptions o;
  o.fit.epochs = epochs;
  o.fit.batch_size = 8;
  o.architecture.cnn_filters = 4;
  o.architecture.conv_lstm_filters = 4;
  o.architecture.lstm_units = 4;
  o.seed = 5;
  return o;
}

template <class T>
std::size_t count_layers(const std::vector<nn::LayerSpec>& specs) {
  return static_cast<std::size_t>(
      std::count_if(specs.begin(), specs.end(), [](const auto& s) { return std::holds_alternative<T>(s); }));
}

}  // namespace

TEST_CASE("architectures") {
  const auto cnn = build(Architecture::cnn, 1);
  // Valid convolution then halving, three times.
  std::size_t length = kInputHours;
  for (std::size_t block = 0; block < 3; ++block) {
    CHECK(cnn.layer_input_shape(2 * block) == nn::Shape{length, block == 0 ? 1u : 64u});
    length -= 2;
    CHECK(cnn.layer_input_shape(2 * block + 1) == nn::Shape{length, 64});
    length /= 2;
  }
  CHECK(length == 61);
  CHECK(cnn.layer_input_shape(6) == nn::Shape{61, 64});
  CHECK(cnn.layer_input_shape(7) == nn::Shape{3904});
  CHECK(cnn.output_shape() == nn::Shape{kHorizonHours});
  CHECK(count_layers<nn::Conv1DSpec>(cnn.specs()) == 3);
  CHECK(count_layers<nn::MaxPool1DSpec>(cnn.specs()) == 3);
  for (const auto& s : cnn.specs()) {
    if (const auto* c = std::get_if<nn::Conv1DSpec>(&s)) {
      CHECK(c->filters == 64);
      CHECK(c->activation == nn::Activation::relu);
    }
  }

  const auto lstm = build(Architecture::lstm, 1);
  CHECK(lstm.output_shape() == nn::Shape{168});
  CHECK(count_layers<nn::LstmSpec>(lstm.specs()) == 2);
  CHECK(std::get<nn::LstmSpec>(lstm.specs()[0]).units == 32);

  const auto cl = build(Architecture::conv_lstm, 1);
  CHECK(cl.output_shape() == nn::Shape{168});
  CHECK(count_layers<nn::Conv1DSpec>(cl.specs()) == 2);
  CHECK(count_layers<nn::LstmSpec>(cl.specs()) == 2);
  CHECK(std::holds_alternative<nn::Conv1DSpec>(cl.specs()[0]));
  CHECK(std::holds_alternative<nn::DenseSpec>(cl.specs().back()));

  for (Architecture a : kArchitectures) {
    CHECK(parse_architecture(to_string(a)) == a);
    CHECK(count_layers<nn::BatchNormSpec>(layer_specs(a)) == 1);
    CHECK(count_layers<nn::DropoutSpec>(layer_specs(a)) == 1);
  }
  CHECK(parse_architecture("Conv-LSTM") == Architecture::conv_lstm);
  CHECK(parse_regime("global_normalized") == Regime::global_normalized);
  CHECK_THROWS(parse_regime("local"));
}

TEST_CASE("min-max scaler") {
  const CompanyScaler s{"c", 0.0, 10.0};
  CHECK(s.normalize(0.0) == 0.0);
  CHECK(s.normalize(10.0) == 1.0);
  CHECK(s.normalize(5.0) == 0.5);
  CHECK(s.denormalize(0.5) == 5.0);

  const auto fit = CompanyScaler::fit(HourlySeries{"c", 0, {4, 9, 2, 7}});
  CHECK(fit.x_min == 2.0);
  CHECK(fit.x_max == 9.0);
  CHECK(fit.normalize(2.0) == 0.0);
  CHECK(fit.normalize(9.0) == 1.0);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    double a = u(rng), b = u(rng);
    if (a == b) continue;
    const CompanyScaler r{"c", std::min(a, b), std::max(a, b)};
    const double x = u(rng) * 3.0;
    CHECK(std::fabs(r.denormalize(r.normalize(x)) - x) < 1e-9 * std::max(1.0, std::fabs(x)));
  }

  const CompanyScaler flat{"c", 3.0, 3.0};
  CHECK(flat.degenerate());
  CHECK(flat.normalize(3.0) == 0.0);
  CHECK(flat.normalize(100.0) == 0.0);
  CHECK(flat.denormalize(0.7) == 3.0);
}

TEST_CASE("test windows start at the boundary and reach back for input") {
  const auto s = weekly("c", 100.0, 2000);
  const std::int64_t boundary = 1000 * kHourSeconds;
  const auto w = test_windows(s, boundary);
  REQUIRE(!w.empty());
  CHECK(w.front().target_start == boundary);
  CHECK(w.front().input.front() == s.values[1000 - kInputHours]);
  CHECK(w.front().target.front() == s.values[1000]);
  CHECK(w.size() == (2000 - 1000 - kHorizonHours) / 168 + 1);
  CHECK_THROWS_AS(test_windows(s, 100 * kHourSeconds), DataError);
}

TEST_CASE("per-company training isolates companies") {
  const std::vector<HourlySeries> train = {weekly("a", 100.0, 720), weekly("b", 1000.0, 744)};
  const auto models = train_per_company(train, Architecture::cnn, quick(1));
  REQUIRE(models.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(models[i].trained_on == std::vector<std::string>{train[i].company_id});
    const auto windows = make_windows(train[i], 24);
    CHECK(models[i].fingerprint == fingerprint(train[i].company_id, windows));
    CHECK(models[i].scalers.size() == 1);
    CHECK(models[i].scalers.at(train[i].company_id) == CompanyScaler::fit(train[i]));
    CHECK(models[i].history.size() == 1);
  }
  CHECK(models[0].fingerprint != models[1].fingerprint);
  CHECK_THROWS_WITH_AS(predict(models[0], train[1].values, "b"), doctest::Contains("no scaler for company"),
                       DataError);

  std::vector<HourlySeries> many;
  for (int i = 0; i < 33; ++i) many.push_back(weekly("c" + std::to_string(i), 10.0 + i, 672));
  CHECK(train_per_company(many, Architecture::lstm, quick(0)).size() == 33);

  const std::vector<HourlySeries> short_history = {weekly("s", 1.0, 671)};
  CHECK_THROWS_AS(train_per_company(short_history, Architecture::cnn, quick(1)), DataError);
}

TEST_CASE("global regimes") {
  const std::vector<HourlySeries> train = {weekly("big", 99000.0, 720), weekly("small", 1000.0, 720)};

  const auto norm = train_global(train, Architecture::lstm, true, quick(1));
  CHECK(norm.regime == Regime::global_normalized);
  CHECK(norm.scalers.size() == 2);
  CHECK(norm.trained_on == std::vector<std::string>{"big", "small"});
  for (const auto& s : train) {
    const auto windows = make_windows(s, 24);
    const auto x = model_inputs(norm, windows, s.company_id);
    for (double v : x.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK_THROWS_WITH_AS(predict(norm, train[0].values, "stranger"), doctest::Contains("no scaler for company"),
                       DataError);

  // Raw pooling: at initialization the dominant company carries almost all of the loss.
  const auto raw = train_global(train, Architecture::lstm, false, quick(0));
  CHECK(raw.scalers.empty());
  CHECK(raw.raw_unit == CompanyScaler::fit(train[0]).x_max);
  std::vector<double> company_loss;
  for (const auto& s : train) {
    const auto windows = make_windows(s, 24);
    Rng rng(0);
    const auto y = raw.network.forward(model_inputs(raw, windows, s.company_id), nn::ExecutionMode::infer, rng);
    double sum = 0.0;
    for (std::size_t i = 0; i < windows.size(); ++i)
      for (std::size_t h = 0; h < kHorizonHours; ++h) {
        const double r = y[i * kHorizonHours + h] - windows[i].target[h] / raw.raw_unit;
        sum += r * r;
      }
    company_loss.push_back(sum);
  }
  CHECK(company_loss[0] / (company_loss[0] + company_loss[1]) > 0.9);
  // Unknown companies are fine without per-company scaling.
  CHECK(predict(raw, train[0].values, "stranger").size() == kHorizonHours);
}

TEST_CASE("single-company global-normalized equals per-company") {
  const std::vector<HourlySeries> one = {weekly("solo", 500.0, 720)};
  const auto g = train_global(one, Architecture::conv_lstm, true, quick(2));
  const auto p = train_per_company(one, Architecture::conv_lstm, quick(2)).front();
  CHECK(g.history == p.history);
  CHECK(predict(g, one[0].values, "solo") == predict(p, one[0].values, "solo"));
}

TEST_CASE("forecasts are 168 non-negative values") {
  const std::vector<HourlySeries> train = {weekly("a", 100.0, 720)};
  const auto m = train_per_company(train, Architecture::cnn, quick(1)).front();
  const auto f = predict(m, train[0].values, "a");
  CHECK(f.size() == kHorizonHours);
  for (double v : f) CHECK(v >= 0.0);
  CHECK_THROWS_AS(predict(m, std::span<const double>(train[0].values).first(100), "a"), DataError);
}

TEST_CASE("a model trained on constants forecasts near-constant output") {
  std::vector<HourlySeries> train;
  for (int k = 1; k <= 8; ++k) {
    train.push_back(HourlySeries{"k" + std::to_string(k), 0, std::vector<double>(720, 100.0 * k)});
  }
  auto o = quick(600);
  o.fit.adam.lr = 3e-3;
  const auto m = train_global(train, Architecture::cnn, false, o);
  const auto f = predict(m, std::vector<double>(kInputHours, 450.0), "any");
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double level = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
  CHECK(level > 0.0);
  CHECK((*hi - *lo) < 0.05 * level);
}

TEST_CASE("evaluate against hand-computed residuals") {
  // A global-raw model whose head ignores its input and emits a constant.
  TrainedModel m;
  m.architecture = Architecture::lstm;
  m.regime = Regime::global_raw;
  m.raw_unit = 1.0;
  m.network = build(Architecture::lstm, 1, quick(0).architecture);
  auto params = m.network.parameters();
  params[params.size() - 2]->fill(0.0);
  params.back()->fill(4.0);

  WindowedSample a, b;
  a.input.assign(kInputHours, 1.0);
  b.input.assign(kInputHours, 2.0);
  a.target.assign(kHorizonHours, 4.0);
  b.target.assign(kHorizonHours, 4.0);
  const std::vector<WindowedSample> perfect = {a, b};
  const auto zero = evaluate(m, perfect, "x");
  CHECK(zero.mae == 0.0);
  CHECK(zero.mse == 0.0);

  a.target.assign(kHorizonHours, 6.0);
  b.target.assign(kHorizonHours, 1.0);
  b.target[0] = 4.0;
  const std::vector<WindowedSample> toy = {a, b};
  // Residuals: 168 of 2, 1 of 0, 167 of 3.
  const double n = 2.0 * kHorizonHours;
  const auto r = evaluate(m, toy, "x");
  CHECK(r.mae == doctest::Approx((168 * 2.0 + 167 * 3.0) / n));
  CHECK(r.mse == doctest::Approx((168 * 4.0 + 167 * 9.0) / n));
  CHECK(r.mae >= 0.0);
  CHECK_THROWS_AS(evaluate(m, std::vector<WindowedSample>{}, "x"), DataError);
}

TEST_CASE("comparison structure, determinism and CSV") {
  std::vector<HourlySeries> full = {weekly("a", 100.0, 1400), weekly("b", 300.0, 1400)};
  const auto data = prepare(full, 1000 * kHourSeconds);
  REQUIRE(data.size() == 2);
  CHECK(data[0].train.values.size() == 1000);
  const std::vector<Regime> regimes = {Regime::per_company, Regime::global_normalized};
  const auto c = compare_architectures(data, regimes, quick(1));
  CHECK(c.table.size() == 6);
  for (Regime r : regimes) {
    std::size_t rows = 0;
    for (const auto& t : c.table) rows += t.regime == r;
    CHECK(rows == 3);
  }
  CHECK(c.report.rows.size() == 12);
  for (const auto& row : c.report.rows) {
    CHECK(row.mae >= 0.0);
    CHECK(row.mse >= 0.0);
  }

  const auto again = compare_architectures(data, regimes, quick(1));
  std::ostringstream a, b;
  c.report.write_csv(a);
  again.report.write_csv(b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("regime,architecture,company_id,mae,mse\nper-company,cnn,a,", 0) == 0);
  std::ostringstream t;
  write_comparison_csv(t, c);
  CHECK(t.str().rfind("regime,architecture,mean_mae,mean_mse\n", 0) == 0);
}

TEST_CASE("trained model checkpoint round trip") {
  const std::vector<HourlySeries> train = {weekly("a", 100.0, 720), weekly("b", 50.0, 720)};
  const auto m = train_global(train, Architecture::conv_lstm, true, quick(1));
  const auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
  CHECK(back.regime == m.regime);
  CHECK(back.architecture == m.architecture);
  CHECK(back.scalers == m.scalers);
  CHECK(back.trained_on == m.trained_on);
  CHECK(back.fingerprint == m.fingerprint);
  CHECK(predict(back, train[1].values, "b") == predict(m, train[1].values, "b"));

  auto j = to_json(m);
  j["meta"]["scalers"].erase(0);
  CHECK_THROWS_AS(model_from_json(j), DataError);
}

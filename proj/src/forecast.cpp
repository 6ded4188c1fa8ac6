#include "iotflow/forecast.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>
#include <stdexcept>

#include "iotflow/error.hpp"
#include "iotflow/nn/checkpoint.hpp"
#include "iotflow/random.hpp"

namespace iotflow::forecast {

using nlohmann::json;
using nn::Tensor;

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::cnn: return "cnn";
    case Architecture::lstm: return "lstm";
    case Architecture::conv_lstm: return "convlstm";
  }
  return "?";
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::per_company: return "per-company";
    case Regime::global_raw: return "global-raw";
    case Regime::global_normalized: return "global-normalized";
  }
  return "?";
}

namespace {

std::string canonical(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

Architecture parse_architecture(const std::string& s) {
  const auto c = canonical(s);
  if (c == "cnn") return Architecture::cnn;
  if (c == "lstm") return Architecture::lstm;
  if (c == "convlstm" || c == "conv-lstm") return Architecture::conv_lstm;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

Regime parse_regime(const std::string& s) {
  const auto c = canonical(s);
  if (c == "per-company") return Regime::per_company;
  if (c == "global-raw") return Regime::global_raw;
  if (c == "global-normalized") return Regime::global_normalized;
  throw std::invalid_argument("unknown regime '" + s + "'");
}

std::vector<nn::LayerSpec> layer_specs(Architecture arch, const ArchitectureOptions& o) {
  using namespace nn;
  std::vector<LayerSpec> specs;
  const auto conv_block = [&](std::size_t filters) {
    specs.push_back(Conv1DSpec{filters, o.kernel, Activation::relu});
    specs.push_back(MaxPool1DSpec{2});
  };
  const auto lstm_pair = [&] {
    specs.push_back(LstmSpec{o.lstm_units, true});
    specs.push_back(LstmSpec{o.lstm_units, false});
  };
  std::size_t features = o.lstm_units;
  switch (arch) {
    case Architecture::cnn: {
      std::size_t length = kInputHours;
      for (int i = 0; i < 3; ++i) {
        conv_block(o.cnn_filters);
        length = (length - o.kernel + 1) / 2;
      }
      specs.push_back(FlattenSpec{});
      features = length * o.cnn_filters;
      break;
    }
    case Architecture::lstm:
      lstm_pair();
      break;
    case Architecture::conv_lstm:
      conv_block(o.conv_lstm_filters);
      conv_block(o.conv_lstm_filters);
      lstm_pair();
      break;
  }
  specs.push_back(BatchNormSpec{});
  specs.push_back(DropoutSpec{o.dropout});
  specs.push_back(DenseSpec{features, kHorizonHours, Activation::linear});
  return specs;
}

nn::Network build(Architecture arch, std::uint64_t seed, const ArchitectureOptions& options) {
  return nn::Network::build(layer_specs(arch, options), {kInputHours, 1}, seed);
}

CompanyScaler CompanyScaler::fit(const HourlySeries& train) {
  if (train.values.empty()) throw DataError("no training data for company " + train.company_id);
  const auto [lo, hi] = std::minmax_element(train.values.begin(), train.values.end());
  return {train.company_id, *lo, *hi};
}

double CompanyScaler::normalize(double x) const { return degenerate() ? 0.0 : (x - x_min) / (x_max - x_min); }

double CompanyScaler::denormalize(double x) const { return degenerate() ? x_min : x * (x_max - x_min) + x_min; }

std::uint64_t fingerprint(const std::string& company_id, std::span<const WindowedSample> windows, std::uint64_t h) {
  const auto eat = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  eat(company_id.data(), company_id.size());
  for (const auto& w : windows) {
    eat(&w.target_start, sizeof w.target_start);
    eat(w.input.data(), w.input.size() * sizeof(double));
    eat(w.target.data(), w.target.size() * sizeof(double));
  }
  return h;
}

CompanyScaler scaler_for(const TrainedModel& model, const std::string& company_id) {
  if (model.regime == Regime::global_raw) return {company_id, 0.0, model.raw_unit};
  const auto it = model.scalers.find(company_id);
  if (it == model.scalers.end()) throw DataError("no scaler for company " + company_id);
  return it->second;
}

Tensor model_inputs(const TrainedModel& model, std::span<const WindowedSample> windows, const std::string& company_id) {
  const auto s = scaler_for(model, company_id);
  Tensor x({windows.size(), kInputHours, 1});
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].input.size() != kInputHours) {
      throw std::invalid_argument("forecast input must have " + std::to_string(kInputHours) + " hours");
    }
    for (std::size_t t = 0; t < kInputHours; ++t) x[i * kInputHours + t] = s.normalize(windows[i].input[t]);
  }
  return x;
}

std::vector<double> to_bytes(const TrainedModel& model, std::span<const double> output, const std::string& company_id) {
  const auto s = scaler_for(model, company_id);
  std::vector<double> out(output.size());
  for (std::size_t i = 0; i < output.size(); ++i) out[i] = std::max(0.0, s.denormalize(output[i]));
  return out;
}

std::vector<std::vector<double>> predict(const TrainedModel& model, std::span<const WindowedSample> windows,
                                         const std::string& company_id) {
  const Tensor x = model_inputs(model, windows, company_id);
  Rng unused(0);
  const Tensor y = model.network.forward(x, nn::ExecutionMode::infer, unused);
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out.push_back(to_bytes(model, y.data().subspan(i * kHorizonHours, kHorizonHours), company_id));
  }
  return out;
}

std::vector<double> predict(const TrainedModel& model, std::span<const double> recent, const std::string& company_id) {
  if (recent.size() < kInputHours) {
    throw DataError("insufficient history: need " + std::to_string(kInputHours) + " hours");
  }
  WindowedSample w;
  w.input.assign(recent.end() - static_cast<std::ptrdiff_t>(kInputHours), recent.end());
  return std::move(predict(model, std::span<const WindowedSample>(&w, 1), company_id).front());
}

namespace {

std::uint64_t company_stream(std::span<const std::string> ids) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& id : ids) {
    for (unsigned char c : id) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Builds the scaled window tensors of `companies` and trains a fresh network.
void fit_model(TrainedModel& model, const std::vector<const HourlySeries*>& companies, const TrainingOptions& options) {
  std::vector<std::vector<WindowedSample>> per_company;
  std::size_t n = 0;
  for (const HourlySeries* s : companies) {
    per_company.push_back(make_windows(*s, options.stride));
    n += per_company.back().size();
    model.trained_on.push_back(s->company_id);
  }
  std::uint64_t fp = 0xcbf29ce484222325ULL;
  for (std::size_t c = 0; c < companies.size(); ++c) fp = fingerprint(companies[c]->company_id, per_company[c], fp);
  model.fingerprint = fp;

  Tensor x({n, kInputHours, 1});
  Tensor y({n, kHorizonHours});
  std::size_t row = 0;
  for (std::size_t c = 0; c < companies.size(); ++c) {
    const auto s = scaler_for(model, companies[c]->company_id);
    for (const auto& w : per_company[c]) {
      for (std::size_t t = 0; t < kInputHours; ++t) x[row * kInputHours + t] = s.normalize(w.input[t]);
      for (std::size_t t = 0; t < kHorizonHours; ++t) y[row * kHorizonHours + t] = s.normalize(w.target[t]);
      ++row;
    }
  }
  const std::uint64_t stream = company_stream(model.trained_on);
  model.network = build(model.architecture, derive_seed(options.seed, stream), options.architecture);
  nn::FitOptions fo = options.fit;
  fo.seed = derive_seed(options.seed, stream + 1);
  model.history = nn::fit(model.network, x, y, fo);
}

}  // namespace

std::vector<TrainedModel> train_per_company(std::span<const HourlySeries> train, Architecture arch,
                                            const TrainingOptions& options) {
  std::vector<TrainedModel> models(train.size());
  for (const auto& s : train) {
    if (s.values.size() < kWindowHours) throw DataError("insufficient history for company " + s.company_id);
  }
  const auto n = static_cast<std::ptrdiff_t>(train.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& m = models[static_cast<std::size_t>(i)];
    const HourlySeries& s = train[static_cast<std::size_t>(i)];
    m.architecture = arch;
    m.regime = Regime::per_company;
    m.scalers.emplace(s.company_id, CompanyScaler::fit(s));
    fit_model(m, {&s}, options);
  }
  return models;
}

TrainedModel train_global(std::span<const HourlySeries> train, Architecture arch, bool normalized,
                          const TrainingOptions& options) {
  if (train.empty()) throw DataError("no companies to train on");
  TrainedModel m;
  m.architecture = arch;
  m.regime = normalized ? Regime::global_normalized : Regime::global_raw;
  std::vector<const HourlySeries*> companies;
  double pooled_max = 0.0;
  for (const auto& s : train) {
    if (s.values.size() < kWindowHours) throw DataError("insufficient history for company " + s.company_id);
    companies.push_back(&s);
    const auto scaler = CompanyScaler::fit(s);
    pooled_max = std::max(pooled_max, scaler.x_max);
    if (normalized) m.scalers.emplace(s.company_id, scaler);
  }
  if (!normalized) m.raw_unit = pooled_max > 0.0 ? pooled_max : 1.0;
  fit_model(m, companies, options);
  return m;
}

std::vector<WindowedSample> test_windows(const HourlySeries& full, std::int64_t boundary, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("stride must be positive");
  const std::int64_t offset = boundary - full.start;
  const auto first = static_cast<std::int64_t>((offset + kHourSeconds - 1) / kHourSeconds);
  if (first < static_cast<std::int64_t>(kInputHours)) {
    throw DataError("insufficient history before the test range for company " + full.company_id);
  }
  std::vector<WindowedSample> out;
  for (auto t = static_cast<std::size_t>(first); t + kHorizonHours <= full.values.size(); t += stride) {
    WindowedSample w;
    w.input.assign(full.values.begin() + static_cast<std::ptrdiff_t>(t - kInputHours),
                   full.values.begin() + static_cast<std::ptrdiff_t>(t));
    w.target.assign(full.values.begin() + static_cast<std::ptrdiff_t>(t),
                    full.values.begin() + static_cast<std::ptrdiff_t>(t + kHorizonHours));
    w.target_start = full.hour_start(t);
    out.push_back(std::move(w));
  }
  return out;
}

void MetricsReport::write_csv(std::ostream& out) const {
  out << "regime,architecture,company_id,mae,mse\n";
  const auto old = out.precision(17);
  for (const auto& r : rows) {
    out << to_string(r.regime) << ',' << to_string(r.architecture) << ',' << r.company_id << ',' << r.mae << ','
        << r.mse << '\n';
  }
  out.precision(old);
}

namespace {

double mean_of(const MetricsReport& rep, Regime r, Architecture a, double MetricRow::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : rep.rows) {
    if (row.regime == r && row.architecture == a) {
      sum += row.*field;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("no metrics for " + to_string(r) + "/" + to_string(a));
  return sum / static_cast<double>(n);
}

}  // namespace

double MetricsReport::mean_mae(Regime r, Architecture a) const { return mean_of(*this, r, a, &MetricRow::mae); }
double MetricsReport::mean_mse(Regime r, Architecture a) const { return mean_of(*this, r, a, &MetricRow::mse); }

MetricRow evaluate(const TrainedModel& model, std::span<const WindowedSample> windows, const std::string& company_id) {
  if (windows.empty()) throw DataError("empty test set for company " + company_id);
  const auto forecasts = predict(model, windows, company_id);
  std::vector<double> pred, actual;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    pred.insert(pred.end(), forecasts[i].begin(), forecasts[i].end());
    actual.insert(actual.end(), windows[i].target.begin(), windows[i].target.end());
  }
  return {model.regime, model.architecture, company_id, nn::loss(nn::LossKind::mae, pred, actual),
          nn::loss(nn::LossKind::mse, pred, actual)};
}

std::vector<CompanyData> prepare(std::span<const HourlySeries> series, std::int64_t boundary, std::size_t test_stride) {
  std::vector<CompanyData> out;
  for (const auto& s : series) {
    out.push_back({split_train_test(s, SplitSpec{boundary}).first, test_windows(s, boundary, test_stride)});
  }
  return out;
}

Comparison compare_architectures(std::span<const CompanyData> data, std::span<const Regime> regimes,
                                 const TrainingOptions& options, const ModelVisitor& visit) {
  std::vector<HourlySeries> train;
  for (const auto& d : data) train.push_back(d.train);
  Comparison c;
  for (Regime regime : regimes) {
    for (Architecture arch : kArchitectures) {
      std::vector<TrainedModel> models;
      if (regime == Regime::per_company) {
        models = train_per_company(train, arch, options);
        for (std::size_t i = 0; i < data.size(); ++i) {
          c.report.rows.push_back(evaluate(models[i], data[i].test, data[i].train.company_id));
        }
      } else {
        models.push_back(train_global(train, arch, regime == Regime::global_normalized, options));
        for (const auto& d : data) c.report.rows.push_back(evaluate(models.front(), d.test, d.train.company_id));
      }
      c.table.push_back({regime, arch, c.report.mean_mae(regime, arch), c.report.mean_mse(regime, arch)});
      if (visit) visit(regime, arch, models);
    }
  }
  return c;
}

void write_comparison_csv(std::ostream& out, const Comparison& c) {
  out << "regime,architecture,mean_mae,mean_mse\n";
  const auto old = out.precision(17);
  for (const auto& r : c.table) {
    out << to_string(r.regime) << ',' << to_string(r.architecture) << ',' << r.mean_mae << ',' << r.mean_mse << '\n';
  }
  out.precision(old);
}

json to_json(const TrainedModel& model) {
  json scalers = json::array();
  for (const auto& [id, s] : model.scalers) scalers.push_back({{"company_id", id}, {"x_min", s.x_min}, {"x_max", s.x_max}});
  json meta = {{"architecture", to_string(model.architecture)},
               {"regime", to_string(model.regime)},
               {"scalers", std::move(scalers)},
               {"raw_unit", model.raw_unit},
               {"trained_on", model.trained_on},
               {"fingerprint", model.fingerprint},
               {"history", model.history}};
  return nn::to_json(model.network, meta);
}

TrainedModel model_from_json(const json& j) {
  auto loaded = nn::from_json(j);
  try {
    const json& meta = loaded.meta;
    TrainedModel m;
    m.architecture = parse_architecture(meta.at("architecture").get<std::string>());
    m.regime = parse_regime(meta.at("regime").get<std::string>());
    for (const auto& s : meta.at("scalers")) {
      CompanyScaler c{s.at("company_id").get<std::string>(), s.at("x_min").get<double>(), s.at("x_max").get<double>()};
      m.scalers.emplace(c.company_id, c);
    }
    m.raw_unit = meta.value("raw_unit", 1.0);
    m.trained_on = meta.at("trained_on").get<std::vector<std::string>>();
    m.fingerprint = meta.at("fingerprint").get<std::uint64_t>();
    m.history = meta.value("history", std::vector<double>{});
    if (m.regime == Regime::global_normalized && m.scalers.size() != m.trained_on.size()) {
      throw DataError("checkpoint: scaler count does not match training companies");
    }
    m.network = std::move(loaded.network);
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace iotflow::forecast

#include "iotflow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iotflow/devices.hpp"
#include "iotflow/error.hpp"
#include "iotflow/forecast.hpp"
#include "iotflow/ingest.hpp"
#include "iotflow/svg.hpp"
#include "iotflow/synth.hpp"
#include "iotflow/uncertainty.hpp"

namespace iotflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// JSON config: top-level keys are global flags, nested objects are
// subcommand sections, e.g. {"seed": 3, "train": {"epochs": 10}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("config: top level must be an object");
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void walk(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, v] : j.items()) {
      if (v.is_object()) {
        auto p = parents;
        p.push_back(key);
        walk(v, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (v.is_array()) {
        for (const json& e : v) item.inputs.push_back(scalar(e));
      } else if (v.is_null()) {
        throw UsageError("config: null value for '" + key + "'");
      } else {
        item.inputs.push_back(scalar(v));
      }
      items.push_back(std::move(item));
    }
  }
};

// Files are written beside their destination and renamed only after every
// output of the command has been produced.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::is_directory(dir_)) throw DataError("output directory does not exist: " + dir_.string());
  }
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;

  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& name : names_) fs::remove(temp(name), ec);
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    names_.push_back(name);
    std::ofstream f(temp(name), std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + (dir_ / name).string());
    body(f);
    f.flush();
    if (!f) throw DataError("write failed: " + (dir_ / name).string());
  }

  void commit() {
    for (const auto& name : names_) fs::rename(temp(name), dir_ / name);
    committed_ = true;
  }

 private:
  fs::path temp(const std::string& name) const { return dir_ / ("." + name + ".tmp"); }

  fs::path dir_;
  std::vector<std::string> names_;
  bool committed_ = false;
};

struct Global {
  std::uint64_t seed = 0;
  std::string out = ".";
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

void read_traffic(const std::string& path, const RecordSink& sink) {
  auto in = open_input(path);
  for_each_record(in, sink);
}

/// YYYY-MM-DD or unix seconds.
std::int64_t parse_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) == 3) {
    if (m < 1 || m > 12 || d < 1 || d > 31) throw UsageError("invalid date '" + s + "'");
    return utc_timestamp(y, m, d);
  }
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("invalid date '" + s + "'");
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

nn::FitOptions fit_options(std::size_t epochs, std::size_t batch, std::optional<double> lr) {
  nn::FitOptions f;
  f.epochs = epochs;
  f.batch_size = batch;
  if (lr) f.adam.lr = *lr;
  return f;
}

// -- company selection -----------------------------------------------------------

/// The `top` companies by traffic, then the `top_devices` largest device
/// fleets among those not yet chosen. Ties break on company id.
std::vector<std::string> select_companies(const HourlyAggregator& agg, std::size_t top, std::size_t top_devices) {
  std::vector<std::string> ids = agg.companies();
  auto by_traffic = ids;
  std::stable_sort(by_traffic.begin(), by_traffic.end(), [&](const auto& a, const auto& b) {
    const double ta = agg.total_bytes(a), tb = agg.total_bytes(b);
    return ta != tb ? ta > tb : a < b;
  });
  std::vector<std::string> chosen(by_traffic.begin(), by_traffic.begin() + std::min(top, by_traffic.size()));
  auto by_devices = ids;
  std::stable_sort(by_devices.begin(), by_devices.end(), [&](const auto& a, const auto& b) {
    const std::size_t da = agg.device_count(a), db = agg.device_count(b);
    return da != db ? da > db : a < b;
  });
  std::size_t added = 0;
  for (const auto& id : by_devices) {
    if (added == top_devices) break;
    if (std::find(chosen.begin(), chosen.end(), id) != chosen.end()) continue;
    chosen.push_back(id);
    ++added;
  }
  return chosen;
}

struct Selection {
  std::int64_t boundary = 0;
  std::vector<forecast::CompanyData> data;
};

/// Companies usable for training and testing: enough history before the
/// boundary for one window and at least one test window after it.
Selection load_companies(const std::string& input, std::size_t top, std::size_t top_devices,
                         const std::optional<std::string>& boundary, std::ostream& err) {
  HourlyAggregator agg;
  read_traffic(input, [&](TrafficRecord&& r) { agg.add(r); });
  if (agg.companies().empty()) throw DataError("no records in " + input);
  Selection s;
  std::vector<HourlySeries> series;
  std::int64_t first = 0;
  bool have_first = false;
  for (const auto& id : select_companies(agg, top, top_devices)) {
    series.push_back(agg.series(id));
    if (!have_first || series.back().start < first) first = series.back().start;
    have_first = true;
  }
  s.boundary = boundary ? parse_date(*boundary) : SplitSpec::end_of_october(utc_year(first)).boundary;
  for (const auto& ser : series) {
    auto prepared = forecast::prepare(std::span(&ser, 1), s.boundary);
    auto& d = prepared.front();
    if (d.train.values.size() < kWindowHours || d.test.empty()) {
      err << "skipping " << ser.company_id << ": not enough data around the split\n";
      continue;
    }
    s.data.push_back(std::move(d));
  }
  if (s.data.empty()) throw DataError("no company has enough data around the split");
  return s;
}

// -- synth -------------------------------------------------------------------

struct SynthArgs {
  std::size_t companies = 350;
  std::size_t days = 365;
  std::string start = "2019-01-01";
  std::size_t devices = 1000;
  std::size_t device_types = 3;
  double anomaly_fraction = 0.05;
  std::string anomaly_kind = "flood";
  std::optional<std::string> fleet_month;
};

void cmd_synth(const Global& g, const SynthArgs& a, std::ostream& out) {
  synth::WorkloadConfig cfg;
  cfg.n_companies = a.companies;
  cfg.duration_days = a.days;
  cfg.start = parse_date(a.start);
  cfg.seed = g.seed;
  cfg.validate();
  if (a.device_types < 1 || a.device_types > 9) throw UsageError("--device-types must be in [1, 9]");
  if (!(a.anomaly_fraction >= 0.0 && a.anomaly_fraction <= 1.0)) {
    throw UsageError("--anomaly-fraction must be in [0, 1]");
  }
  synth::AnomalySpec anomaly;
  anomaly.fraction = a.anomaly_fraction;
  try {
    anomaly.kind = synth::parse_anomaly_kind(a.anomaly_kind);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const std::int64_t fleet_start = a.fleet_month ? devices::parse_month(*a.fleet_month) : cfg.start;

  Outputs files(g.out);
  const auto companies = synth::generate_companies(cfg);
  files.write("traffic.csv", [&](std::ostream& f) {
    write_records_header(f);
    for (const auto& c : companies) synth::emit_company_records(c, [&](TrafficRecord&& r) { write_record(f, r); });
  });
  const auto fleet = synth::generate_device_profiles(a.devices, synth::default_templates(a.device_types), anomaly,
                                                     derive_seed(g.seed, 0xf1ee7));
  files.write("fleet.csv", [&](std::ostream& f) {
    write_records_header(f);
    synth::emit_device_records(fleet, "fleet", fleet_start, [&](TrafficRecord&& r) { write_record(f, r); });
  });
  files.write("truth.csv", [&](std::ostream& f) { synth::write_truth_csv(f, fleet); });
  files.commit();
  out << "synth: " << companies.size() << " companies, " << fleet.size() << " fleet devices\n";
}

// -- eda -----------------------------------------------------------------------

void write_cdf_csv(std::ostream& f, std::span<const CdfPoint> points) {
  f << "fraction,share\n" << std::setprecision(17);
  for (const auto& p : points) f << p.fraction << ',' << p.share << '\n';
}

svg::LineChart cdf_chart(const std::string& title, const std::string& y_label, std::span<const CdfPoint> points) {
  svg::Line line{title, {}, {}};
  for (const auto& p : points) {
    line.x.push_back(p.fraction);
    line.y.push_back(p.share);
  }
  return {title, "fraction of companies (log)", y_label, true, {}, {line}};
}

void cmd_eda(const Global& g, const std::string& input, std::ostream& out) {
  HourlyAggregator agg;
  read_traffic(input, [&](TrafficRecord&& r) { agg.add(r); });
  const auto ids = agg.companies();
  if (ids.empty()) throw DataError("no records in " + input);
  std::vector<double> traffic, device_counts;
  for (const auto& id : ids) {
    traffic.push_back(agg.total_bytes(id));
    device_counts.push_back(static_cast<double>(agg.device_count(id)));
  }
  const auto traffic_cdf = cdf_points(traffic);
  const auto device_cdf = cdf_points(device_counts);

  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return traffic[a] > traffic[b]; });

  Outputs files(g.out);
  files.write("traffic_cdf.csv", [&](std::ostream& f) { write_cdf_csv(f, traffic_cdf); });
  files.write("traffic_cdf.svg",
              [&](std::ostream& f) { svg::write(f, cdf_chart("traffic CDF", "share of traffic", traffic_cdf)); });
  files.write("devices_cdf.csv", [&](std::ostream& f) { write_cdf_csv(f, device_cdf); });
  files.write("devices_cdf.svg",
              [&](std::ostream& f) { svg::write(f, cdf_chart("device count CDF", "share of devices", device_cdf)); });
  files.write("company_totals.csv", [&](std::ostream& f) {
    f << "company_id,bytes,devices\n" << std::setprecision(17);
    for (std::size_t i : order) f << ids[i] << ',' << traffic[i] << ',' << device_counts[i] << '\n';
  });
  files.write("company_totals.svg", [&](std::ostream& f) {
    svg::BarChart chart{"traffic per company", "bytes (log)", true, {}};
    for (std::size_t i : order) chart.bars.push_back({ids[i], traffic[i]});
    svg::write(f, chart);
  });
  files.write("pareto.csv", [&](std::ostream& f) {
    f << "metric,top_fraction,share\n" << std::setprecision(17);
    for (double q : {0.05, 0.07, 0.10, 0.20}) {
      f << "traffic," << q << ',' << pareto_share(traffic, q) << '\n';
      f << "devices," << q << ',' << pareto_share(device_counts, q) << '\n';
    }
  });
  files.commit();
  out << "eda: " << ids.size() << " companies, top-10% traffic share " << format_number(pareto_share(traffic, 0.10))
      << ", top-7% device share " << format_number(pareto_share(device_counts, 0.07)) << '\n';
}

// -- train -----------------------------------------------------------------------

struct ModelArgs {
  std::string input;
  std::size_t top = 33;
  std::size_t top_devices = 5;
  std::optional<std::string> boundary;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  std::size_t stride = 24;
  std::optional<double> lr;
  std::size_t cnn_filters = 64;
  std::size_t conv_lstm_filters = 32;
  std::size_t lstm_units = 32;

  forecast::TrainingOptions training(std::uint64_t seed) const {
    if (batch == 0) throw UsageError("--batch must be positive");
    if (stride == 0) throw UsageError("--stride must be positive");
    forecast::TrainingOptions o;
    o.fit = fit_options(epochs, batch, lr);
    o.stride = stride;
    o.seed = seed;
    o.architecture.cnn_filters = cnn_filters;
    o.architecture.conv_lstm_filters = conv_lstm_filters;
    o.architecture.lstm_units = lstm_units;
    return o;
  }
};

template <typename F>
auto parse_enum(F parse, const std::string& s) {
  try {
    return parse(s);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

void write_model(Outputs& files, const std::string& name, const forecast::TrainedModel& m) {
  files.write(name, [&](std::ostream& f) { f << forecast::to_json(m).dump() << '\n'; });
}

void cmd_train(const Global& g, const ModelArgs& a, const std::string& regime_s, const std::string& arch_s,
               std::ostream& out, std::ostream& err) {
  const auto regime = parse_enum(forecast::parse_regime, regime_s);
  const auto arch = parse_enum(forecast::parse_architecture, arch_s);
  const auto options = a.training(g.seed);
  Outputs files(g.out);
  const Selection sel = load_companies(a.input, a.top, a.top_devices, a.boundary, err);
  std::vector<HourlySeries> train;
  for (const auto& d : sel.data) train.push_back(d.train);

  forecast::MetricsReport report;
  if (regime == forecast::Regime::per_company) {
    const auto models = forecast::train_per_company(train, arch, options);
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto& id = sel.data[i].train.company_id;
      write_model(files, "model-" + id + ".json", models[i]);
      report.rows.push_back(forecast::evaluate(models[i], sel.data[i].test, id));
    }
  } else {
    const auto model = forecast::train_global(train, arch, regime == forecast::Regime::global_normalized, options);
    write_model(files, "model.json", model);
    for (const auto& d : sel.data) report.rows.push_back(forecast::evaluate(model, d.test, d.train.company_id));
  }
  files.write("metrics.csv", [&](std::ostream& f) { report.write_csv(f); });
  files.commit();
  out << "train: " << forecast::to_string(regime) << ' ' << forecast::to_string(arch) << " on " << sel.data.size()
      << " companies, mean MAE " << format_number(report.mean_mae(regime, arch)) << '\n';
}

// -- forecast ------------------------------------------------------------------

struct ForecastArgs {
  std::string checkpoint;
  std::string input;
  std::optional<std::string> company;
  std::optional<std::string> start;
  std::vector<double> z = {1.0, 2.0, 3.0};
  std::size_t samples = 100;
  double p = 0.2;
};

forecast::TrainedModel load_model(const std::string& path) {
  auto in = open_input(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return forecast::model_from_json(j);
}

void cmd_forecast(const Global& g, const ForecastArgs& a, std::ostream& out) {
  for (double z : a.z) {
    if (!(z > 0.0)) throw UsageError("--z values must be positive");
  }
  if (a.samples < 2) throw UsageError("--samples must be at least 2");
  if (!(a.p >= 0.0 && a.p < 1.0)) throw UsageError("--p must be in [0, 1)");
  Outputs files(g.out);
  const auto model = load_model(a.checkpoint);
  std::string company;
  if (a.company) {
    company = *a.company;
  } else if (!model.trained_on.empty()) {
    company = model.trained_on.front();
  } else {
    throw UsageError("--company is required for this checkpoint");
  }
  HourlyAggregator agg;
  read_traffic(a.input, [&](TrafficRecord&& r) {
    if (r.company_id == company) agg.add(r);
  });
  if (agg.companies().empty()) throw DataError("no records for company " + company);
  const HourlySeries series = agg.series(company);

  const std::int64_t start = a.start ? parse_date(*a.start) : series.end();
  if (start % kHourSeconds != 0) throw UsageError("--start must be on an hour boundary");
  const std::int64_t offset = (start - series.start) / kHourSeconds - static_cast<std::int64_t>(kInputHours);
  if (start < series.start || offset < 0 || start > series.end()) {
    throw DataError("not enough history before the forecast start for company " + company);
  }
  const auto first = static_cast<std::size_t>(offset);
  const std::span<const double> recent(series.values.data() + first, kInputHours);

  const auto point = forecast::predict(model, recent, company);
  uncertainty::McOptions mc;
  mc.samples = a.samples;
  mc.dropout = a.p;
  mc.seed = g.seed;
  const auto dist = uncertainty::mc_forecast(model, recent, company, mc);
  std::vector<uncertainty::PredictionInterval> bands;
  for (double z : a.z) bands.push_back(uncertainty::interval(dist, z));

  const std::size_t actual_end = std::min(series.values.size(), first + kWindowHours);
  auto actual_at = [&](std::size_t h) -> std::optional<double> {
    const std::size_t i = first + kInputHours + h;
    if (i < actual_end) return series.values[i];
    return std::nullopt;
  };

  files.write("forecast.csv", [&](std::ostream& f) {
    f << "company_id,hour_start,forecast_bytes\n" << std::setprecision(17);
    for (std::size_t h = 0; h < point.size(); ++h) {
      f << company << ',' << start + static_cast<std::int64_t>(h) * kHourSeconds << ',' << point[h] << '\n';
    }
  });
  for (const auto& band : bands) {
    files.write("band_z" + format_number(band.z) + ".csv",
                [&](std::ostream& f) { uncertainty::write_band_csv(f, company, start, dist, band); });
  }
  files.write("band.csv", [&](std::ostream& f) {
    f << "hour_start,actual,mean";
    for (const auto& band : bands) f << ",lower_z" << format_number(band.z) << ",upper_z" << format_number(band.z);
    f << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < kInputHours; ++i) {
      f << series.hour_start(first + i) << ',' << recent[i] << ',';
      for (std::size_t k = 0; k < bands.size(); ++k) f << ",,";
      f << '\n';
    }
    for (std::size_t h = 0; h < kHorizonHours; ++h) {
      f << start + static_cast<std::int64_t>(h) * kHourSeconds << ',';
      if (auto v = actual_at(h)) f << *v;
      f << ',' << std::max(0.0, dist.mean[h]);
      for (const auto& band : bands) f << ',' << std::max(0.0, band.lower[h]) << ',' << band.upper[h];
      f << '\n';
    }
  });
  files.write("band.svg", [&](std::ostream& f) {
    svg::LineChart chart{"forecast for " + company, "hours from forecast start", "bytes", false, {}, {}};
    std::vector<double> hx;
    for (std::size_t h = 0; h < kHorizonHours; ++h) hx.push_back(static_cast<double>(h));
    for (auto it = bands.rbegin(); it != bands.rend(); ++it) {
      svg::Band b{"z=" + format_number(it->z), hx, {}, it->upper};
      for (double v : it->lower) b.lower.push_back(std::max(0.0, v));
      chart.bands.push_back(std::move(b));
    }
    svg::Line history{"actual", {}, {}};
    for (std::size_t i = 0; i < kInputHours; ++i) {
      history.x.push_back(static_cast<double>(i) - static_cast<double>(kInputHours));
      history.y.push_back(recent[i]);
    }
    for (std::size_t h = 0; h < kHorizonHours; ++h) {
      if (auto v = actual_at(h)) {
        history.x.push_back(static_cast<double>(h));
        history.y.push_back(*v);
      }
    }
    svg::Line mean{"MC mean", hx, {}};
    for (double v : dist.mean) mean.y.push_back(std::max(0.0, v));
    chart.lines = {history, mean};
    svg::write(f, chart);
  });
  files.commit();
  out << "forecast: " << company << " from " << start << ", " << kHorizonHours << " hours\n";
}

// -- evaluate ------------------------------------------------------------------

void cmd_evaluate(const Global& g, const ModelArgs& a, const std::vector<std::string>& regime_names,
                  const std::vector<double>& z, std::size_t samples, double p, std::ostream& out, std::ostream& err) {
  std::vector<forecast::Regime> regimes;
  for (const auto& r : regime_names) regimes.push_back(parse_enum(forecast::parse_regime, r));
  if (regimes.empty()) throw UsageError("--regimes must not be empty");
  for (double v : z) {
    if (!(v > 0.0)) throw UsageError("--z values must be positive");
  }
  if (samples < 2) throw UsageError("--samples must be at least 2");
  if (!(p >= 0.0 && p < 1.0)) throw UsageError("--p must be in [0, 1)");
  const auto options = a.training(g.seed);
  Outputs files(g.out);
  const Selection sel = load_companies(a.input, a.top, a.top_devices, a.boundary, err);

  std::vector<uncertainty::CompanyTest> tests;
  for (const auto& d : sel.data) tests.push_back({d.train.company_id, d.test});
  uncertainty::McOptions mc;
  mc.samples = samples;
  mc.dropout = p;
  mc.seed = g.seed;

  std::vector<std::pair<forecast::Regime, uncertainty::PicpSweep>> sweeps;
  const auto comparison = forecast::compare_architectures(
      sel.data, regimes, options,
      [&](forecast::Regime r, forecast::Architecture arch, std::span<const forecast::TrainedModel> models) {
        if (arch != forecast::Architecture::conv_lstm) return;
        sweeps.emplace_back(r, models.size() == 1 && r != forecast::Regime::per_company
                                   ? uncertainty::picp_sweep(models.front(), tests, z, mc)
                                   : uncertainty::picp_sweep(models, tests, z, mc));
      });

  files.write("metrics.csv", [&](std::ostream& f) { comparison.report.write_csv(f); });
  files.write("comparison.csv", [&](std::ostream& f) { forecast::write_comparison_csv(f, comparison); });
  files.write("comparison.svg", [&](std::ostream& f) {
    svg::BarChart chart{"mean MAE by architecture", "bytes", false, {}};
    for (const auto& row : comparison.table) {
      chart.bars.push_back(
          {forecast::to_string(row.regime) + " " + forecast::to_string(row.architecture), row.mean_mae});
    }
    svg::write(f, chart);
  });
  svg::LineChart picp_chart{"mean PICP", "z", "coverage", false, {}, {}};
  for (const auto& [r, sweep] : sweeps) {
    files.write("picp_" + forecast::to_string(r) + ".csv",
                [&](std::ostream& f) { uncertainty::write_picp_csv(f, sweep); });
    picp_chart.lines.push_back({forecast::to_string(r), sweep.z, sweep.mean});
  }
  picp_chart.lines.push_back({"reference", {1.0, 2.0, 3.0},
                              {uncertainty::kReferencePicp[0], uncertainty::kReferencePicp[1],
                               uncertainty::kReferencePicp[2]}});
  files.write("picp.svg", [&](std::ostream& f) { svg::write(f, picp_chart); });
  files.commit();

  for (forecast::Regime r : regimes) {
    const double conv = comparison.report.mean_mae(r, forecast::Architecture::conv_lstm);
    const double conv_mse = comparison.report.mean_mse(r, forecast::Architecture::conv_lstm);
    out << forecast::to_string(r) << ":";
    for (const auto& ref : forecast::kReferenceGains) {
      const auto base = forecast::parse_architecture(ref.versus);
      const double mae_gain = 1.0 - conv / comparison.report.mean_mae(r, base);
      const double mse_gain = 1.0 - conv_mse / comparison.report.mean_mse(r, base);
      out << " vs " << ref.versus << " MAE gain " << format_number(mae_gain) << " (reference "
          << format_number(ref.mae_gain) << "), MSE gain " << format_number(mse_gain) << " (reference "
          << format_number(ref.mse_gain) << ");";
    }
    out << '\n';
  }
  for (const auto& [r, sweep] : sweeps) {
    out << forecast::to_string(r) << " PICP:";
    for (std::size_t k = 0; k < sweep.z.size(); ++k) {
      out << " z=" << format_number(sweep.z[k]) << ' ' << format_number(sweep.mean[k]);
    }
    out << '\n';
  }
}

// -- devices -------------------------------------------------------------------

struct DevicesArgs {
  std::string input;
  std::optional<std::string> month;
  std::optional<double> eps;
  std::size_t min_points = 5;
  std::size_t epochs = 60;
  std::size_t batch = 32;
  std::optional<double> lr;
  std::optional<std::string> truth;
  std::optional<std::string> company;
};

devices::Truth read_truth(const std::string& path, std::span<const devices::DeviceProfile> profiles) {
  auto in = open_input(path);
  std::string line;
  std::getline(in, line);
  if (line != "device_id,label") throw DataError(path + ": unexpected header");
  std::map<std::string, std::string> labels;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(n, "expected device_id,label");
    labels[line.substr(0, comma)] = line.substr(comma + 1);
  }
  devices::Truth t;
  for (const auto& p : profiles) {
    auto it = labels.find(p.device_id);
    if (it == labels.end()) throw DataError(path + ": no label for device " + p.device_id);
    t.labels.push_back(it->second);
    t.anomalous.push_back(it->second.rfind("anomaly", 0) == 0 ? 1 : 0);
  }
  return t;
}

void cmd_devices(const Global& g, const DevicesArgs& a, std::ostream& out) {
  if (a.min_points < 1) throw UsageError("--min-points must be positive");
  if (a.eps && !(*a.eps > 0.0)) throw UsageError("--eps must be positive");
  if (a.batch == 0) throw UsageError("--batch must be positive");
  Outputs files(g.out);
  auto keep = [&](const TrafficRecord& r) { return !a.company || r.company_id == *a.company; };
  std::int64_t start = 0;
  if (a.month) {
    start = devices::parse_month(*a.month);
  } else {
    std::optional<std::int64_t> first;
    read_traffic(a.input, [&](TrafficRecord&& r) {
      if (keep(r) && (!first || r.timestamp < *first)) first = r.timestamp;
    });
    if (!first) throw DataError("no device records in " + a.input);
    start = *first - *first % kHourSeconds;
  }
  devices::ProfileBuilder builder(start);
  read_traffic(a.input, [&](TrafficRecord&& r) {
    if (keep(r)) builder.add(r);
  });
  const auto profiles = builder.finish();

  devices::PipelineOptions po;
  po.autoencoder.fit = fit_options(a.epochs, a.batch, a.lr);
  po.autoencoder.seed = g.seed;
  po.min_points = a.min_points;
  po.epsilon = a.eps;
  const auto result = devices::run_pipeline(profiles, po);
  std::optional<devices::Truth> truth;
  if (a.truth) truth = read_truth(*a.truth, profiles);
  const auto report = devices::cluster_report(result.clusters, truth ? &*truth : nullptr);

  files.write("latent.csv", [&](std::ostream& f) { devices::write_latent_csv(f, profiles, result.latent); });
  files.write("clusters.csv", [&](std::ostream& f) { devices::write_clusters_csv(f, profiles, result.clusters); });
  files.write("anomalies.csv", [&](std::ostream& f) { devices::write_anomalies_csv(f, profiles, result.clusters); });
  files.write("latent.svg", [&](std::ostream& f) {
    std::vector<svg::ScatterPanel> panels{{"x", "y", {}}, {"x", "z", {}}};
    const std::size_t groups = result.clusters.cluster_count + 1;
    for (auto& panel : panels) {
      panel.groups.resize(groups);
      for (std::size_t c = 0; c < result.clusters.cluster_count; ++c) panel.groups[c].name = "cluster " + std::to_string(c);
      panel.groups.back().name = "noise";
    }
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      const int label = result.clusters.labels[i];
      const std::size_t gi = label == devices::kNoise ? groups - 1 : static_cast<std::size_t>(label);
      const auto& pt = result.latent[i];
      panels[0].groups[gi].x.push_back(pt[0]);
      panels[0].groups[gi].y.push_back(pt[1]);
      panels[1].groups[gi].x.push_back(pt[0]);
      panels[1].groups[gi].y.push_back(pt[2]);
    }
    svg::write(f, "device latent space", panels);
  });
  files.write("summary.csv", [&](std::ostream& f) {
    f << "key,value\n" << std::setprecision(17);
    f << "devices," << profiles.size() << '\n';
    f << "month_start," << start << '\n';
    f << "epsilon," << result.clusters.epsilon << '\n';
    f << "min_points," << result.clusters.min_points << '\n';
    f << "clusters," << report.clusters << '\n';
    f << "noise," << report.noise << '\n';
    f << "initial_loss," << result.autoencoder.initial_loss << '\n';
    f << "final_loss," << (result.autoencoder.history.empty() ? result.autoencoder.initial_loss
                                                              : result.autoencoder.history.back())
      << '\n';
    if (report.purity) f << "purity," << *report.purity << '\n';
    if (report.anomaly_recall) f << "anomaly_recall," << *report.anomaly_recall << '\n';
    if (report.anomaly_precision) f << "anomaly_precision," << *report.anomaly_precision << '\n';
  });
  files.commit();
  out << "devices: " << profiles.size() << " devices, " << report.clusters << " clusters, " << report.noise
      << " noise points\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"IoT traffic analytics: synthesis, forecasting, uncertainty and device clustering", "iotflow"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.require_subcommand(1);

  Global g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--out", g.out, "Existing output directory")->capture_default_str();

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic workload and device fleet");
  synth_cmd->add_option("--companies", sa.companies)->capture_default_str();
  synth_cmd->add_option("--days", sa.days)->capture_default_str();
  synth_cmd->add_option("--start", sa.start, "YYYY-MM-DD or unix seconds")->capture_default_str();
  synth_cmd->add_option("--devices", sa.devices, "Fleet size")->capture_default_str();
  synth_cmd->add_option("--device-types", sa.device_types, "Distinct device templates (1-9)")->capture_default_str();
  synth_cmd->add_option("--anomaly-fraction", sa.anomaly_fraction)->capture_default_str();
  synth_cmd->add_option("--anomaly-kind", sa.anomaly_kind, "silent, flood or pattern_shift")->capture_default_str();
  synth_cmd->add_option("--fleet-month", sa.fleet_month, "YYYY-MM of the fleet records (default: workload start)");

  std::string eda_input;
  auto* eda_cmd = app.add_subcommand("eda", "Traffic and device-count distributions");
  eda_cmd->add_option("--input", eda_input, "Traffic CSV")->required();

  auto add_model_args = [](CLI::App* cmd, ModelArgs& m) {
    cmd->add_option("--input", m.input, "Traffic CSV")->required();
    cmd->add_option("--top", m.top, "Companies chosen by traffic")->capture_default_str();
    cmd->add_option("--top-devices", m.top_devices, "Extra companies chosen by device count")->capture_default_str();
    cmd->add_option("--boundary", m.boundary, "Train/test split (default: 1 November of the first year)");
    cmd->add_option("--epochs", m.epochs)->capture_default_str();
    cmd->add_option("--batch", m.batch)->capture_default_str();
    cmd->add_option("--stride", m.stride, "Hours between training windows")->capture_default_str();
    cmd->add_option("--lr", m.lr, "Adam learning rate");
    cmd->add_option("--cnn-filters", m.cnn_filters)->capture_default_str();
    cmd->add_option("--convlstm-filters", m.conv_lstm_filters)->capture_default_str();
    cmd->add_option("--lstm-units", m.lstm_units)->capture_default_str();
  };

  ModelArgs ta;
  std::string regime = "global-normalized", arch = "convlstm";
  auto* train_cmd = app.add_subcommand("train", "Train forecasting models");
  add_model_args(train_cmd, ta);
  train_cmd->add_option("--regime", regime, "per-company, global-raw or global-normalized")->capture_default_str();
  train_cmd->add_option("--arch", arch, "cnn, lstm or convlstm")->capture_default_str();

  ForecastArgs fa;
  auto* forecast_cmd = app.add_subcommand("forecast", "168-hour forecast with MC-dropout bands");
  forecast_cmd->add_option("--checkpoint", fa.checkpoint)->required();
  forecast_cmd->add_option("--input", fa.input, "Traffic CSV with the company's history")->required();
  forecast_cmd->add_option("--company", fa.company, "Default: first company of the checkpoint");
  forecast_cmd->add_option("--start", fa.start, "First forecast hour (default: end of the history)");
  forecast_cmd->add_option("--z", fa.z, "Interval multipliers")->delimiter(',')->capture_default_str();
  forecast_cmd->add_option("--samples", fa.samples, "MC passes")->capture_default_str();
  forecast_cmd->add_option("--p", fa.p, "MC dropout probability")->capture_default_str();

  ModelArgs ea;
  std::vector<std::string> regimes = {"per-company", "global-normalized"};
  std::vector<double> ez = {1.0, 2.0, 3.0};
  std::size_t e_samples = 100;
  double e_p = 0.2;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Architecture comparison and PICP summary");
  add_model_args(evaluate_cmd, ea);
  evaluate_cmd->add_option("--regimes", regimes)->delimiter(',')->capture_default_str();
  evaluate_cmd->add_option("--z", ez)->delimiter(',')->capture_default_str();
  evaluate_cmd->add_option("--samples", e_samples)->capture_default_str();
  evaluate_cmd->add_option("--p", e_p)->capture_default_str();

  DevicesArgs da;
  auto* devices_cmd = app.add_subcommand("devices", "Autoencoder + DBSCAN device clustering");
  devices_cmd->add_option("--input", da.input, "Device traffic CSV")->required();
  devices_cmd->add_option("--month", da.month, "YYYY-MM (default: from the first record)");
  devices_cmd->add_option("--eps", da.eps, "DBSCAN radius (default: k-distance knee)");
  devices_cmd->add_option("--min-points", da.min_points)->capture_default_str();
  devices_cmd->add_option("--epochs", da.epochs)->capture_default_str();
  devices_cmd->add_option("--batch", da.batch)->capture_default_str();
  devices_cmd->add_option("--lr", da.lr, "Adam learning rate");
  devices_cmd->add_option("--truth", da.truth, "Labels CSV for purity and recall");
  devices_cmd->add_option("--company", da.company, "Only records of this company");

  try {
    app.parse(argc, argv);
    if (synth_cmd->parsed()) {
      cmd_synth(g, sa, out);
    } else if (eda_cmd->parsed()) {
      cmd_eda(g, eda_input, out);
    } else if (train_cmd->parsed()) {
      cmd_train(g, ta, regime, arch, out, err);
    } else if (forecast_cmd->parsed()) {
      cmd_forecast(g, fa, out);
    } else if (evaluate_cmd->parsed()) {
      cmd_evaluate(g, ea, regimes, ez, e_samples, e_p, out, err);
    } else if (devices_cmd->parsed()) {
      cmd_devices(g, da, out);
    }
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace iotflow::cli

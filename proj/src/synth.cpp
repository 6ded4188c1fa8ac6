#include "iotflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "iotflow/error.hpp"
#include "iotflow/random.hpp"

namespace iotflow::synth {

namespace {

enum Stream : std::uint64_t {
  kSizeJitter = 1,
  kSizePermutation,
  kDeviceJitter,
  kDevicePermutation,
  kSeriesBase = 1000,
};

std::vector<double> draw_uniforms(std::size_t n, Rng rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& x : out) x = u(rng);
  return out;
}

std::vector<double> lognormal_strata(const std::vector<double>& uniforms, double sigma, double median,
                                     bool round_to_counts) {
  static const boost::math::normal standard;
  const auto n = static_cast<double>(uniforms.size());
  std::vector<double> out(uniforms.size());
  for (std::size_t i = 0; i < uniforms.size(); ++i) {
    const double p = std::clamp((static_cast<double>(i) + uniforms[i]) / n, 1e-12, 1.0 - 1e-12);
    double v = median * std::exp(sigma * boost::math::quantile(standard, p));
    if (round_to_counts) v = std::max(1.0, std::round(v));
    out[i] = v;
  }
  return out;
}

std::vector<std::size_t> permutation(std::size_t n, Rng rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Lognormal with unit mean and the requested coefficient of variation.
class UnitNoise {
 public:
  explicit UnitNoise(double cv)
      : sigma_(std::sqrt(std::log1p(cv * cv))), dist_(-0.5 * sigma_ * sigma_, sigma_) {}
  double operator()(Rng& rng) { return sigma_ == 0.0 ? 1.0 : dist_(rng); }

 private:
  double sigma_;
  std::lognormal_distribution<double> dist_;
};

double diurnal_factor(double hour_of_day, double peak, double amplitude) {
  return 1.0 + amplitude * std::cos(2.0 * std::numbers::pi * (hour_of_day - peak) / 24.0);
}

bool is_weekend(std::int64_t timestamp) {
  // 1970-01-01 was a Thursday; 0 = Monday.
  const std::int64_t days = timestamp >= 0 ? timestamp / 86400 : (timestamp - 86399) / 86400;
  const std::int64_t weekday = ((days + 3) % 7 + 7) % 7;
  return weekday >= 5;
}

double template_shape(const DeviceTypeTemplate& t, std::size_t hour) {
  switch (t.pattern) {
    case Pattern::flat:
      return 1.0;
    case Pattern::diurnal:
      return diurnal_factor(static_cast<double>(hour % 24), t.peak_hour, 0.8);
    case Pattern::bursty: {
      const std::size_t pos = (hour + t.period_hours - t.phase_hours % t.period_hours) % t.period_hours;
      return pos < t.burst_hours ? 4.0 : 0.25;
    }
  }
  return 1.0;
}

}  // namespace

void WorkloadConfig::validate() const {
  if (n_companies < 1) throw std::invalid_argument("n_companies must be >= 1");
  if (duration_days < 28) throw std::invalid_argument("duration must be >= 28 days");
  const auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(diurnal_amplitude) || !in_unit(weekend_attenuation)) {
    throw std::invalid_argument("diurnal amplitude and weekend attenuation must be in [0, 1]");
  }
  if (!(noise_cv >= 0.0)) throw std::invalid_argument("noise level must be >= 0");
  if (!(median_rate > 0.0) || !(median_devices > 0.0)) {
    throw std::invalid_argument("medians must be positive");
  }
  if (start % kHourSeconds != 0) throw std::invalid_argument("start must be hour aligned");
}

double fit_lognormal_shape(const std::vector<double>& uniforms, double top_fraction,
                           double target_share, bool round_to_counts, double median) {
  if (uniforms.size() < 2) return 1.0;
  const auto share_at = [&](double sigma) {
    return pareto_share(lognormal_strata(uniforms, sigma, median, round_to_counts), top_fraction);
  };
  double lo = 0.0;
  double hi = 12.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (share_at(mid) < target_share ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> generate_company_sizes(const WorkloadConfig& config) {
  config.validate();
  const auto jitter = draw_uniforms(config.n_companies, make_rng(config.seed, kSizeJitter));
  const double sigma = config.size_shape.value_or(fit_lognormal_shape(
      jitter, kTrafficTopFraction, kTrafficTopShare, false, config.median_rate));
  const auto strata = lognormal_strata(jitter, sigma, config.median_rate, false);
  const auto perm = permutation(config.n_companies, make_rng(config.seed, kSizePermutation));
  std::vector<double> rates(config.n_companies);
  for (std::size_t i = 0; i < strata.size(); ++i) rates[perm[i]] = strata[i];
  return rates;
}

std::vector<std::size_t> generate_device_counts(const WorkloadConfig& config) {
  config.validate();
  const auto jitter = draw_uniforms(config.n_companies, make_rng(config.seed, kDeviceJitter));
  const double sigma = config.device_shape.value_or(fit_lognormal_shape(
      jitter, kDeviceTopFraction, kDeviceTopShare, true, config.median_devices));
  const auto strata = lognormal_strata(jitter, sigma, config.median_devices, true);
  const auto perm = permutation(config.n_companies, make_rng(config.seed, kDevicePermutation));
  std::vector<std::size_t> counts(config.n_companies);
  for (std::size_t i = 0; i < strata.size(); ++i) counts[perm[i]] = static_cast<std::size_t>(strata[i]);
  return counts;
}

HourlySeries generate_series(double rate, const WorkloadConfig& config, std::uint64_t stream,
                             std::string company_id) {
  if (!(rate > 0.0)) throw std::invalid_argument("rate must be positive");
  config.validate();
  Rng rng = make_rng(config.seed, kSeriesBase + stream);
  UnitNoise noise(config.noise_cv);
  HourlySeries s{std::move(company_id), config.start, std::vector<double>(config.hours())};
  for (std::size_t h = 0; h < s.values.size(); ++h) {
    const std::int64_t t = s.hour_start(h);
    const double hour_of_day = static_cast<double>((t / kHourSeconds) % 24);
    double v = rate * diurnal_factor(hour_of_day, config.peak_hour, config.diurnal_amplitude);
    if (is_weekend(t)) v *= 1.0 - config.weekend_attenuation;
    const std::size_t day = h / 24;
    if (day < config.day_attenuation.size()) v *= config.day_attenuation[day];
    s.values[h] = std::max(0.0, v * noise(rng));
  }
  return s;
}

std::vector<SyntheticCompany> generate_companies(const WorkloadConfig& config) {
  const auto rates = generate_company_sizes(config);
  const auto devices = generate_device_counts(config);
  std::vector<SyntheticCompany> out(config.n_companies);
  const auto n = static_cast<std::int64_t>(config.n_companies);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    char id[16];
    std::snprintf(id, sizeof id, "c%04zu", k);
    out[k].id = id;
    out[k].rate = rates[k];
    out[k].devices = devices[k];
    out[k].series = generate_series(rates[k], config, k, id);
  }
  return out;
}

void emit_company_records(const SyntheticCompany& company, const RecordSink& sink) {
  const std::size_t n_devices = std::max<std::size_t>(1, company.devices);
  const auto device_id = [&](std::size_t d) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "-d%06zu", d);
    return company.id + buf;
  };
  std::size_t bin = 0;
  for (std::size_t h = 0; h < company.series.values.size(); ++h) {
    const auto hour_bytes = static_cast<std::uint64_t>(std::llround(company.series.values[h]));
    const std::uint64_t quarter = hour_bytes / 4;
    for (std::uint64_t q = 0; q < 4; ++q, ++bin) {
      TrafficRecord r;
      r.timestamp = company.series.hour_start(h) + static_cast<std::int64_t>(q) * kBinSeconds;
      r.company_id = company.id;
      r.device_id = device_id(bin % n_devices);
      r.direction = (bin % 2 == 0) ? Direction::from_device : Direction::to_device;
      r.bytes = q == 3 ? hour_bytes - 3 * quarter : quarter;
      r.packets = (r.bytes + 1023) / 1024;
      sink(std::move(r));
    }
  }
  for (std::size_t d = bin; d < n_devices; ++d) {
    TrafficRecord r;
    r.timestamp = company.series.start;
    r.company_id = company.id;
    r.device_id = device_id(d);
    sink(std::move(r));
  }
}

std::vector<DeviceTypeTemplate> default_templates(std::size_t k) {
  static const std::vector<DeviceTypeTemplate> library = {
      {0, 2.0e4, Pattern::flat, 0.08},
      {1, 5.0e4, Pattern::diurnal, 0.08, 3.0},
      {2, 1.0e4, Pattern::bursty, 0.08, 0.0, 6, 1, 0},
      {3, 8.0e4, Pattern::diurnal, 0.08, 15.0},
      {4, 3.0e4, Pattern::bursty, 0.08, 0.0, 12, 2, 5},
      {5, 6.0e3, Pattern::diurnal, 0.08, 9.0},
      {6, 2.5e4, Pattern::bursty, 0.08, 0.0, 24, 3, 17},
      {7, 4.0e4, Pattern::diurnal, 0.08, 21.0},
      {8, 1.5e4, Pattern::bursty, 0.08, 0.0, 8, 4, 2},
  };
  if (k < 1 || k > library.size()) throw std::invalid_argument("template count must be in [1, 9]");
  return {library.begin(), library.begin() + static_cast<std::ptrdiff_t>(k)};
}

std::vector<SyntheticDevice> generate_device_profiles(std::size_t n_devices,
                                                      const std::vector<DeviceTypeTemplate>& templates,
                                                      const AnomalySpec& anomaly, std::uint64_t seed,
                                                      std::size_t hours) {
  if (templates.empty()) throw std::invalid_argument("no device templates");
  if (n_devices < templates.size()) throw std::invalid_argument("fewer devices than templates");
  if (!(anomaly.fraction >= 0.0 && anomaly.fraction < 0.5)) {
    throw std::invalid_argument("anomaly fraction must be in [0, 0.5)");
  }
  for (const auto& t : templates) {
    if (!(t.base_rate > 0.0)) throw std::invalid_argument("template base rate must be positive");
  }

  const auto n_anomalies = static_cast<std::size_t>(std::llround(anomaly.fraction * static_cast<double>(n_devices)));
  std::vector<char> is_anomaly(n_devices, 0);
  {
    const auto order = permutation(n_devices, make_rng(seed, 1));
    for (std::size_t i = 0; i < n_anomalies; ++i) is_anomaly[order[i]] = 1;
  }

  std::vector<SyntheticDevice> fleet(n_devices);
  std::size_t normal_index = 0;
  for (std::size_t d = 0; d < n_devices; ++d) {
    char id[24];
    std::snprintf(id, sizeof id, "dev%06zu", d);
    SyntheticDevice& dev = fleet[d];
    dev.device_id = id;
    dev.hourly.assign(hours, 0.0);
    Rng rng = make_rng(seed, 100 + d);

    // Anomalies borrow a template's base behavior, then deviate from it.
    const DeviceTypeTemplate& t =
        templates[is_anomaly[d] ? rng() % templates.size() : normal_index++ % templates.size()];
    UnitNoise noise(t.variance);
    for (std::size_t h = 0; h < hours; ++h) dev.hourly[h] = t.base_rate * template_shape(t, h) * noise(rng);

    if (!is_anomaly[d]) {
      dev.label = "type" + std::to_string(t.type_id);
      continue;
    }
    dev.anomalous = true;
    dev.label = "anomaly:" + std::string(to_string(anomaly.kind));
    std::uniform_int_distribution<std::size_t> onset_dist(hours / 14, hours - hours / 7);
    const std::size_t onset = onset_dist(rng);
    switch (anomaly.kind) {
      case AnomalyKind::silent:
        // The device stops reporting at a random hour.
        for (std::size_t h = onset; h < hours; ++h) dev.hourly[h] = 0.0;
        break;
      case AnomalyKind::flood: {
        std::uniform_int_distribution<std::size_t> len_dist(hours / 28, hours / 3);
        std::uniform_real_distribution<double> factor_dist(0.5, 1.5);
        const std::size_t end = std::min(hours, onset + len_dist(rng));
        const double level = anomaly.flood_factor * factor_dist(rng) * t.base_rate;
        for (std::size_t h = onset; h < end; ++h) dev.hourly[h] = level * noise(rng);
        break;
      }
      case AnomalyKind::pattern_shift: {
        // From the onset on, an on/off cycle unrelated to any template.
        std::uniform_int_distribution<std::size_t> period_dist(5, 47);
        const std::size_t period = period_dist(rng);
        const std::size_t on = 1 + rng() % (period - 1);
        for (std::size_t h = onset; h < hours; ++h) {
          dev.hourly[h] = t.base_rate * ((h - onset) % period < on ? 3.0 : 0.1) * noise(rng);
        }
        break;
      }
    }
  }
  return fleet;
}

void emit_device_records(const std::vector<SyntheticDevice>& fleet, const std::string& company_id,
                         std::int64_t start, const RecordSink& sink) {
  if (fleet.empty()) return;
  const std::size_t hours = fleet.front().hourly.size();
  for (std::size_t h = 0; h < hours; ++h) {
    const std::int64_t t = start + static_cast<std::int64_t>(h) * kHourSeconds;
    for (const auto& dev : fleet) {
      const auto bytes = static_cast<std::uint64_t>(std::llround(dev.hourly[h]));
      const std::uint64_t up = bytes * 3 / 5;
      for (const Direction dir : {Direction::from_device, Direction::to_device}) {
        TrafficRecord r;
        r.timestamp = t;
        r.company_id = company_id;
        r.device_id = dev.device_id;
        r.direction = dir;
        r.bytes = dir == Direction::from_device ? up : bytes - up;
        r.packets = (r.bytes + 1023) / 1024;
        sink(std::move(r));
      }
    }
  }
}

void write_truth_csv(std::ostream& out, const std::vector<SyntheticDevice>& fleet) {
  out << "device_id,label\n";
  for (const auto& d : fleet) out << d.device_id << ',' << d.label << '\n';
}

std::string_view to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::silent:
      return "silent";
    case AnomalyKind::flood:
      return "flood";
    case AnomalyKind::pattern_shift:
      return "pattern_shift";
  }
  return "flood";
}

AnomalyKind parse_anomaly_kind(std::string_view s) {
  if (s == "silent") return AnomalyKind::silent;
  if (s == "flood") return AnomalyKind::flood;
  if (s == "pattern_shift" || s == "pattern-shift") return AnomalyKind::pattern_shift;
  throw std::invalid_argument("unknown anomaly kind '" + std::string(s) + "'");
}

}  // namespace iotflow::synth

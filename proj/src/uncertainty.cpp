#include "iotflow/uncertainty.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "iotflow/error.hpp"
#include "iotflow/random.hpp"

namespace iotflow::uncertainty {

namespace {

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double t = sum + x;
    carry += std::fabs(sum) >= std::fabs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + carry; }
};

}  // namespace

std::vector<ForecastDistribution> mc_forecast(const forecast::TrainedModel& model,
                                              std::span<const WindowedSample> windows, const std::string& company_id,
                                              const McOptions& options) {
  if (options.samples < 2) throw std::invalid_argument("mc_forecast needs at least 2 samples");
  if (!(options.dropout >= 0.0 && options.dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (windows.empty()) return {};
  const nn::Tensor x = forecast::model_inputs(model, windows, company_id);
  const std::size_t T = options.samples;
  const std::size_t width = windows.size() * kHorizonHours;
  std::vector<double> draws(T * width);
  std::exception_ptr failure;
  const auto passes = static_cast<std::ptrdiff_t>(T);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < passes; ++t) {
    try {
      Rng rng = make_rng(options.seed, static_cast<std::uint64_t>(t));
      const nn::Context ctx{nn::ExecutionMode::mc_dropout, &rng, options.dropout};
      const nn::Tensor y = model.network.forward(x, ctx);
      const auto scaler = forecast::scaler_for(model, company_id);
      double* row = draws.data() + static_cast<std::size_t>(t) * width;
      for (std::size_t k = 0; k < width; ++k) row[k] = scaler.denormalize(y[k]);
    } catch (...) {
#pragma omp critical(mc_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ForecastDistribution> out(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    auto& d = out[w];
    d.samples = T;
    d.dropout = options.dropout;
    d.mean.resize(kHorizonHours);
    d.std.resize(kHorizonHours);
    for (std::size_t h = 0; h < kHorizonHours; ++h) {
      const std::size_t col = w * kHorizonHours + h;
      // Offsets from the first draw keep the mean exact when all draws agree.
      const double pivot = draws[col];
      CompensatedSum s;
      for (std::size_t t = 0; t < T; ++t) s.add(draws[t * width + col] - pivot);
      const double mean = pivot + s.value() / static_cast<double>(T);
      CompensatedSum v;
      for (std::size_t t = 0; t < T; ++t) {
        const double r = draws[t * width + col] - mean;
        v.add(r * r);
      }
      d.mean[h] = mean;
      d.std[h] = std::sqrt(std::max(0.0, v.value()) / static_cast<double>(T - 1));
    }
  }
  return out;
}

ForecastDistribution mc_forecast(const forecast::TrainedModel& model, std::span<const double> recent,
                                 const std::string& company_id, const McOptions& options) {
  if (recent.size() < kInputHours) {
    throw DataError("insufficient history: need " + std::to_string(kInputHours) + " hours");
  }
  WindowedSample w;
  w.input.assign(recent.end() - static_cast<std::ptrdiff_t>(kInputHours), recent.end());
  return std::move(mc_forecast(model, std::span<const WindowedSample>(&w, 1), company_id, options).front());
}

PredictionInterval interval(const ForecastDistribution& dist, double z) {
  if (!(z > 0.0)) throw std::invalid_argument("z must be positive");
  if (dist.mean.size() != dist.std.size()) throw std::invalid_argument("mean and std lengths differ");
  PredictionInterval p;
  p.z = z;
  p.lower.resize(dist.mean.size());
  p.upper.resize(dist.mean.size());
  for (std::size_t i = 0; i < dist.mean.size(); ++i) {
    p.lower[i] = dist.mean[i] - z * dist.std[i];
    p.upper[i] = dist.mean[i] + z * dist.std[i];
  }
  return p;
}

PicpScore picp(std::span<const double> actuals, const PredictionInterval& interval) {
  if (actuals.size() != interval.lower.size() || actuals.size() != interval.upper.size()) {
    throw std::invalid_argument("picp: actuals and interval lengths differ");
  }
  if (actuals.empty()) throw std::invalid_argument("picp: empty input");
  PicpScore s;
  s.n = actuals.size();
  s.hits.resize(s.n);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < s.n; ++i) {
    s.hits[i] = interval.lower[i] <= actuals[i] && actuals[i] <= interval.upper[i];
    inside += s.hits[i];
  }
  s.value = static_cast<double>(inside) / static_cast<double>(s.n);
  return s;
}

namespace {

std::vector<double> company_coverage(const forecast::TrainedModel& model, const CompanyTest& test,
                                     std::span<const double> z, const McOptions& options) {
  if (test.windows.empty()) throw DataError("empty test set for company " + test.company_id);
  const auto dists = mc_forecast(model, test.windows, test.company_id, options);
  std::vector<double> coverage;
  for (double zk : z) {
    std::size_t inside = 0, n = 0;
    for (std::size_t w = 0; w < dists.size(); ++w) {
      const auto score = picp(test.windows[w].target, interval(dists[w], zk));
      for (auto h : score.hits) inside += h;
      n += score.n;
    }
    coverage.push_back(static_cast<double>(inside) / static_cast<double>(n));
  }
  return coverage;
}

PicpSweep finish(PicpSweep s) {
  s.mean.assign(s.z.size(), 0.0);
  for (const auto& c : s.per_company)
    for (std::size_t k = 0; k < s.z.size(); ++k) s.mean[k] += c[k] / static_cast<double>(s.per_company.size());
  return s;
}

}  // namespace

PicpSweep picp_sweep(const forecast::TrainedModel& model, std::span<const CompanyTest> tests, std::span<const double> z,
                     const McOptions& options) {
  if (tests.empty()) throw DataError("picp_sweep: empty test set");
  PicpSweep s;
  s.z.assign(z.begin(), z.end());
  for (const auto& t : tests) {
    s.companies.push_back(t.company_id);
    s.per_company.push_back(company_coverage(model, t, z, options));
  }
  return finish(std::move(s));
}

PicpSweep picp_sweep(std::span<const forecast::TrainedModel> models, std::span<const CompanyTest> tests,
                     std::span<const double> z, const McOptions& options) {
  if (tests.empty()) throw DataError("picp_sweep: empty test set");
  if (models.size() != tests.size()) throw std::invalid_argument("picp_sweep: one model per company expected");
  PicpSweep s;
  s.z.assign(z.begin(), z.end());
  for (std::size_t i = 0; i < tests.size(); ++i) {
    s.companies.push_back(tests[i].company_id);
    s.per_company.push_back(company_coverage(models[i], tests[i], z, options));
  }
  return finish(std::move(s));
}

void write_band_csv(std::ostream& out, const std::string& company_id, std::int64_t first_hour,
                    const ForecastDistribution& dist, const PredictionInterval& interval) {
  out << "company_id,hour_start,mean,std,lower_z,upper_z\n";
  const auto old = out.precision(17);
  for (std::size_t h = 0; h < dist.mean.size(); ++h) {
    out << company_id << ',' << first_hour + static_cast<std::int64_t>(h) * kHourSeconds << ','
        << std::max(0.0, dist.mean[h]) << ',' << dist.std[h] << ',' << std::max(0.0, interval.lower[h]) << ','
        << interval.upper[h] << '\n';
  }
  out.precision(old);
}

void write_picp_csv(std::ostream& out, const PicpSweep& sweep) {
  out << "z,mean_picp,reference_picp\n";
  const auto old = out.precision(17);
  for (std::size_t k = 0; k < sweep.z.size(); ++k) {
    out << sweep.z[k] << ',' << sweep.mean[k] << ',';
    for (std::size_t r = 0; r < 3; ++r) {
      if (sweep.z[k] == static_cast<double>(r + 1)) {
        out.precision(6);
        out << kReferencePicp[r];
        out.precision(17);
      }
    }
    out << '\n';
  }
  out.precision(old);
}

}  // namespace iotflow::uncertainty

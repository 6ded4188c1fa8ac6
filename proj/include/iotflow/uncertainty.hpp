#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "iotflow/forecast.hpp"

namespace iotflow::uncertainty {

/// Per-step predictive mean and sample standard deviation (divisor T - 1) in bytes.
struct ForecastDistribution {
  std::vector<double> mean;
  std::vector<double> std;
  std::size_t samples = 0;
  double dropout = 0.0;
};

struct PredictionInterval {
  std::vector<double> lower;
  std::vector<double> upper;
  double z = 0.0;
};

struct PicpScore {
  double value = 0.0;
  std::vector<std::uint8_t> hits;
  std::size_t n = 0;
};

struct McOptions {
  std::size_t samples = 100;
  double dropout = 0.2;
  std::uint64_t seed = 0;
};

/// T stochastic passes with dropout live. Pass t draws its masks from its own
/// stream derived from (seed, t), so the result does not depend on how passes
/// are scheduled across threads.
std::vector<ForecastDistribution> mc_forecast(const forecast::TrainedModel& model,
                                              std::span<const WindowedSample> windows, const std::string& company_id,
                                              const McOptions& options);
ForecastDistribution mc_forecast(const forecast::TrainedModel& model, std::span<const double> recent,
                                 const std::string& company_id, const McOptions& options);

/// [mean - z std, mean + z std], unclamped.
PredictionInterval interval(const ForecastDistribution& dist, double z);

/// Fraction of actuals with lower <= actual <= upper.
PicpScore picp(std::span<const double> actuals, const PredictionInterval& interval);

/// Coverage reference points reported for z = 1, 2, 3.
inline constexpr double kReferencePicp[] = {0.50, 0.74, 0.85};

struct PicpSweep {
  std::vector<double> z;
  std::vector<std::string> companies;
  /// per_company[c][k]: coverage of company c at z[k] over all its test steps.
  std::vector<std::vector<double>> per_company;
  std::vector<double> mean;
};

struct CompanyTest {
  std::string company_id;
  std::vector<WindowedSample> windows;
};

PicpSweep picp_sweep(const forecast::TrainedModel& model, std::span<const CompanyTest> tests, std::span<const double> z,
                     const McOptions& options);
/// Per-company models; models[i] serves tests[i].
PicpSweep picp_sweep(std::span<const forecast::TrainedModel> models, std::span<const CompanyTest> tests,
                     std::span<const double> z, const McOptions& options);

/// `company_id,hour_start,mean,std,lower_z,upper_z`. Mean and lower bound are
/// clamped at zero here; traffic cannot be negative.
void write_band_csv(std::ostream& out, const std::string& company_id, std::int64_t first_hour,
                    const ForecastDistribution& dist, const PredictionInterval& interval);
/// `z,mean_picp,reference_picp`; reference is empty where none exists.
void write_picp_csv(std::ostream& out, const PicpSweep& sweep);

}  // namespace iotflow::uncertainty

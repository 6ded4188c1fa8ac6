#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "iotflow/ingest.hpp"

namespace iotflow::synth {

/// Lognormal shape values for which the default knobs reproduce the fleet
/// statistics below are fitted by bisection when left unset.
inline constexpr double kTrafficTopFraction = 0.10;
inline constexpr double kTrafficTopShare = 0.90;
inline constexpr double kDeviceTopFraction = 0.07;
inline constexpr double kDeviceTopShare = 0.90;

struct WorkloadConfig {
  std::size_t n_companies = 350;
  std::size_t duration_days = 365;
  std::int64_t start = 1546300800;  // 2019-01-01T00:00:00Z

  // Lognormal sigma of company sizes / device counts. Unset: fitted so the
  // realized draw hits the top-share targets above.
  std::optional<double> size_shape;
  std::optional<double> device_shape;
  double median_rate = 1.0e5;   // bytes per hour
  double median_devices = 3.0;

  double diurnal_amplitude = 0.5;
  double peak_hour = 14.0;  // UTC hour of the diurnal maximum
  double weekend_attenuation = 0.3;
  double noise_cv = 0.1;
  /// Optional multiplier per day since `start` (holidays, outages). Missing days are 1.
  std::vector<double> day_attenuation;

  std::uint64_t seed = 7;

  void validate() const;
  std::size_t hours() const { return duration_days * 24; }
};

/// Per-company mean hourly rates from the stratified lognormal law.
std::vector<double> generate_company_sizes(const WorkloadConfig& config);

/// Per-company device counts (>= 1) from the same family with its own shape.
std::vector<std::size_t> generate_device_counts(const WorkloadConfig& config);

/// rate * diurnal(hour) * weekly(day) * attenuation(day) * lognormal noise.
/// `stream` selects the noise sub-seed; generation is a pure function of its arguments.
HourlySeries generate_series(double rate, const WorkloadConfig& config, std::uint64_t stream,
                             std::string company_id = "c0");

/// Fits sigma of a stratified lognormal sample so the top `top_fraction`
/// holds `target_share` of the mass. `uniforms` are the per-stratum jitters.
double fit_lognormal_shape(const std::vector<double>& uniforms, double top_fraction,
                           double target_share, bool round_to_counts, double median);

struct SyntheticCompany {
  std::string id;
  double rate = 0.0;
  std::size_t devices = 1;
  HourlySeries series;
};

/// Sizes, device counts and hourly series for every company. Series are
/// generated concurrently from per-company sub-seeds.
std::vector<SyntheticCompany> generate_companies(const WorkloadConfig& config);

/// Emits a company's series as 15-minute records: each hour's (rounded) bytes
/// split across its four bins, alternating direction, rotating over devices.
/// Every device appears at least once. Hourly re-aggregation reproduces the
/// rounded series exactly.
void emit_company_records(const SyntheticCompany& company, const RecordSink& sink);

// -- device fleets -------------------------------------------------------------

enum class Pattern { flat, diurnal, bursty };
enum class AnomalyKind { silent, flood, pattern_shift };

struct DeviceTypeTemplate {
  int type_id = 0;
  double base_rate = 1.0e4;  // bytes per hour
  Pattern pattern = Pattern::flat;
  double variance = 0.1;  // noise coefficient of variation
  double peak_hour = 12.0;        // diurnal
  std::size_t period_hours = 6;   // bursty
  std::size_t burst_hours = 1;    // bursty
  std::size_t phase_hours = 0;    // bursty
};

struct AnomalySpec {
  double fraction = 0.0;
  AnomalyKind kind = AnomalyKind::flood;
  double flood_factor = 5.0;
};

/// Up to 9 mutually distinct shapes (after per-device peak normalization).
std::vector<DeviceTypeTemplate> default_templates(std::size_t k);

struct SyntheticDevice {
  std::string device_id;
  std::vector<double> hourly;
  std::string label;  // "type<k>" or "anomaly:<kind>"; evaluation only
  bool anomalous = false;
};

std::vector<SyntheticDevice> generate_device_profiles(std::size_t n_devices,
                                                      const std::vector<DeviceTypeTemplate>& templates,
                                                      const AnomalySpec& anomaly, std::uint64_t seed,
                                                      std::size_t hours = 672);

/// Two records (one per direction) per device-hour at the hour's first bin.
void emit_device_records(const std::vector<SyntheticDevice>& fleet, const std::string& company_id,
                         std::int64_t start, const RecordSink& sink);

void write_truth_csv(std::ostream& out, const std::vector<SyntheticDevice>& fleet);

std::string_view to_string(AnomalyKind k);
AnomalyKind parse_anomaly_kind(std::string_view s);

}  // namespace iotflow::synth

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "iotflow/ingest.hpp"
#include "iotflow/nn/network.hpp"

namespace iotflow::devices {

/// Four exact weeks of hourly totals.
inline constexpr std::size_t kProfileHours = 672;

struct DeviceProfile {
  std::string device_id;
  std::vector<double> hourly;
};

/// Start of a "YYYY-MM" month in UTC.
std::int64_t parse_month(const std::string& month);

/// Accumulates per-device hourly totals (both directions) over
/// [start, start + hours * 3600). Devices seen only outside the window keep
/// an all-zero profile.
class ProfileBuilder {
 public:
  explicit ProfileBuilder(std::int64_t start, std::size_t hours = kProfileHours);

  void add(const TrafficRecord& r);
  /// Profiles sorted by device id. Throws DataError when the records do not
  /// span the whole window.
  std::vector<DeviceProfile> finish() const;

 private:
  std::int64_t start_;
  std::size_t hours_;
  std::int64_t first_seen_;
  std::int64_t last_seen_;
  std::unordered_map<std::string, std::vector<double>> profiles_;
};

std::vector<DeviceProfile> profile_devices(std::span<const TrafficRecord> records, std::int64_t start,
                                           std::size_t hours = kProfileHours);

/// Row-major [N, hours] matrix with each row divided by its own peak; silent
/// rows stay zero.
nn::Tensor max_normalize(std::span<const DeviceProfile> profiles);

struct AutoencoderSpec {
  std::size_t input = kProfileHours;
  std::size_t hidden1 = 128;
  std::size_t hidden2 = 32;
  static constexpr std::size_t bottleneck = 3;
};

std::vector<nn::LayerSpec> layer_specs(const AutoencoderSpec& spec);

struct AutoencoderOptions {
  AutoencoderSpec spec;
  nn::FitOptions fit = default_fit();
  std::uint64_t seed = 0;

  static nn::FitOptions default_fit() {
    nn::FitOptions f;
    f.epochs = 60;
    f.batch_size = 32;
    return f;
  }
};

struct Autoencoder {
  nn::Network network;
  std::vector<double> history;
  double initial_loss = 0.0;
  /// Layers [0, encoder_layers) map a profile to its latent point.
  static constexpr std::size_t encoder_layers = 3;
};

Autoencoder train_autoencoder(const nn::Tensor& profiles, const AutoencoderOptions& options);

using LatentPoint = std::array<double, 3>;

std::vector<LatentPoint> encode(const Autoencoder& ae, const nn::Tensor& profiles);

inline constexpr int kNoise = -1;

struct ClusterResult {
  /// Cluster index in [0, cluster_count) or kNoise per point.
  std::vector<int> labels;
  std::vector<std::uint8_t> core;
  std::size_t cluster_count = 0;
  double epsilon = 0.0;
  std::size_t min_points = 0;
};

/// Density clustering of N points (row-major, `dims` wide). A point is core
/// when at least `min_points` points, itself included, lie within `epsilon`.
/// Points are visited in index order; a border point reachable from several
/// clusters joins the first one that reaches it.
ClusterResult dbscan(std::span<const double> points, std::size_t dims, double epsilon, std::size_t min_points);

/// Distance from each point to its k-th nearest point (itself counted
/// first), sorted ascending.
std::vector<double> k_distances(std::span<const double> points, std::size_t dims, std::size_t k);

/// Knee of the sorted k-distance curve (largest gap below the chord from the
/// first to the last point).
double suggest_epsilon(std::span<const double> points, std::size_t dims, std::size_t min_points);

/// Indices of the noise points.
std::vector<std::size_t> flag_anomalies(const ClusterResult& result);

struct Truth {
  std::vector<std::string> labels;
  std::vector<std::uint8_t> anomalous;
};

struct ClusterReport {
  std::size_t clusters = 0;
  std::vector<std::size_t> sizes;
  std::size_t noise = 0;
  /// Share of clustered points that carry their cluster's majority label.
  std::optional<double> purity;
  std::optional<double> anomaly_recall;
  std::optional<double> anomaly_precision;
};

ClusterReport cluster_report(const ClusterResult& result, const Truth* truth = nullptr);

struct PipelineOptions {
  AutoencoderOptions autoencoder;
  std::size_t min_points = 5;
  std::optional<double> epsilon;
};

struct PipelineResult {
  Autoencoder autoencoder;
  std::vector<LatentPoint> latent;
  ClusterResult clusters;
};

PipelineResult run_pipeline(std::span<const DeviceProfile> profiles, const PipelineOptions& options);

void write_latent_csv(std::ostream& out, std::span<const DeviceProfile> profiles, std::span<const LatentPoint> latent);
void write_clusters_csv(std::ostream& out, std::span<const DeviceProfile> profiles, const ClusterResult& result);
void write_anomalies_csv(std::ostream& out, std::span<const DeviceProfile> profiles, const ClusterResult& result);

}  // namespace iotflow::devices

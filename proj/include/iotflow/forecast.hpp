#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iotflow/ingest.hpp"
#include "iotflow/nn/network.hpp"

namespace iotflow::forecast {

enum class Architecture { cnn, lstm, conv_lstm };
enum class Regime { per_company, global_raw, global_normalized };

inline constexpr Architecture kArchitectures[] = {Architecture::cnn, Architecture::lstm, Architecture::conv_lstm};

std::string to_string(Architecture a);
std::string to_string(Regime r);
/// Accepts "cnn", "lstm", "convlstm"/"conv-lstm"/"conv_lstm".
Architecture parse_architecture(const std::string& s);
/// Accepts "per-company", "global-raw", "global-normalized" (or underscores).
Regime parse_regime(const std::string& s);

struct ArchitectureOptions {
  std::size_t cnn_filters = 64;
  std::size_t conv_lstm_filters = 32;
  std::size_t kernel = 3;
  std::size_t lstm_units = 32;
  double dropout = 0.2;
};

std::vector<nn::LayerSpec> layer_specs(Architecture arch, const ArchitectureOptions& options = {});
/// Network over [504, 1] inputs with a 168-wide linear head.
nn::Network build(Architecture arch, std::uint64_t seed, const ArchitectureOptions& options = {});

/// Min-max scaler fitted on one company's training range.
struct CompanyScaler {
  std::string company_id;
  double x_min = 0.0;
  double x_max = 0.0;

  static CompanyScaler fit(const HourlySeries& train);
  bool degenerate() const { return !(x_max > x_min); }
  /// (x - x_min) / (x_max - x_min); 0 for a degenerate scaler.
  double normalize(double x) const;
  /// Inverse of normalize; x_min for a degenerate scaler.
  double denormalize(double x) const;

  bool operator==(const CompanyScaler&) const = default;
};

struct TrainingOptions {
  nn::FitOptions fit;
  ArchitectureOptions architecture;
  std::size_t stride = 24;
  std::uint64_t seed = 0;
};

struct TrainedModel {
  Architecture architecture = Architecture::conv_lstm;
  Regime regime = Regime::per_company;
  nn::Network network;
  /// Per-company scalers: the own company for per-company models, every
  /// training company for global-normalized ones, empty for global-raw.
  std::map<std::string, CompanyScaler> scalers;
  /// Global-raw only: one shared unit for all companies (the pooled training
  /// maximum), so relative volumes between companies are kept.
  double raw_unit = 1.0;
  std::vector<std::string> trained_on;
  std::uint64_t fingerprint = 0;
  std::vector<double> history;
};

/// Order-sensitive FNV-1a digest of a company's training windows.
std::uint64_t fingerprint(const std::string& company_id, std::span<const WindowedSample> windows,
                          std::uint64_t seed = 0xcbf29ce484222325ULL);

/// One model per company, each fitted only on that company's windows.
std::vector<TrainedModel> train_per_company(std::span<const HourlySeries> train, Architecture arch,
                                            const TrainingOptions& options);
/// One model on the pooled windows of every company, min-max scaled per
/// company when `normalized`.
TrainedModel train_global(std::span<const HourlySeries> train, Architecture arch, bool normalized,
                          const TrainingOptions& options);

/// 168-hour forecast in bytes from the most recent 504 hours.
std::vector<double> predict(const TrainedModel& model, std::span<const double> recent, const std::string& company_id);
/// Batched predict over many windows of one company.
std::vector<std::vector<double>> predict(const TrainedModel& model, std::span<const WindowedSample> windows,
                                         const std::string& company_id);

/// Network input for `model` built from raw byte histories (scaled as the regime requires).
nn::Tensor model_inputs(const TrainedModel& model, std::span<const WindowedSample> windows,
                        const std::string& company_id);
/// Maps raw network outputs back to clamped bytes.
std::vector<double> to_bytes(const TrainedModel& model, std::span<const double> output, const std::string& company_id);
/// The affine map applied to `company_id`. Throws DataError "no scaler for
/// company" when a scaled model has not seen the company.
CompanyScaler scaler_for(const TrainedModel& model, const std::string& company_id);

/// Windows whose targets start at or after `boundary`; inputs may reach back
/// into the training range.
std::vector<WindowedSample> test_windows(const HourlySeries& full, std::int64_t boundary, std::size_t stride = 168);

struct MetricRow {
  Regime regime = Regime::per_company;
  Architecture architecture = Architecture::conv_lstm;
  std::string company_id;
  double mae = 0.0;
  double mse = 0.0;
};

struct MetricsReport {
  std::vector<MetricRow> rows;

  void write_csv(std::ostream& out) const;
  /// Mean of the per-company values for one (regime, architecture) pair.
  double mean_mae(Regime r, Architecture a) const;
  double mean_mse(Regime r, Architecture a) const;
};

/// MAE/MSE in bytes over every target step of `windows`.
MetricRow evaluate(const TrainedModel& model, std::span<const WindowedSample> windows, const std::string& company_id);

/// A company's full series with its split.
struct CompanyData {
  HourlySeries train;
  std::vector<WindowedSample> test;
};

std::vector<CompanyData> prepare(std::span<const HourlySeries> series, std::int64_t boundary,
                                 std::size_t test_stride = 168);

struct ComparisonRow {
  Regime regime;
  Architecture architecture;
  double mean_mae = 0.0;
  double mean_mse = 0.0;
};

struct ReferenceGain {
  const char* versus;
  double mae_gain;
  double mse_gain;
};

/// Reported relative improvement of the conv-LSTM stack over each baseline.
/// Printed next to results for orientation; never asserted.
inline constexpr ReferenceGain kReferenceGains[] = {{"cnn", 0.16, 0.23}, {"lstm", 0.43, 0.36}};

struct Comparison {
  std::vector<ComparisonRow> table;
  MetricsReport report;
};

/// Receives the models of one (regime, architecture) cell: one per company
/// for per-company training, a single one otherwise.
using ModelVisitor = std::function<void(Regime, Architecture, std::span<const TrainedModel>)>;

/// Trains and evaluates every architecture under every requested regime.
Comparison compare_architectures(std::span<const CompanyData> data, std::span<const Regime> regimes,
                                 const TrainingOptions& options, const ModelVisitor& visit = {});
void write_comparison_csv(std::ostream& out, const Comparison& c);

nlohmann::json to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);

}  // namespace iotflow::forecast

#include "iotflow/devices.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>

#include "iotflow/error.hpp"
#include "iotflow/kernels.hpp"

namespace iotflow::devices {

std::int64_t parse_month(const std::string& month) {
  int y = 0, m = 0;
  char dash = 0;
  if (month.size() != 7 || std::sscanf(month.c_str(), "%4d%c%2d", &y, &dash, &m) != 3 || dash != '-' || m < 1 ||
      m > 12) {
    throw std::invalid_argument("month must look like YYYY-MM, got '" + month + "'");
  }
  return utc_timestamp(y, static_cast<unsigned>(m), 1);
}

ProfileBuilder::ProfileBuilder(std::int64_t start, std::size_t hours)
    : start_(start),
      hours_(hours),
      first_seen_(std::numeric_limits<std::int64_t>::max()),
      last_seen_(std::numeric_limits<std::int64_t>::min()) {
  if (hours == 0) throw std::invalid_argument("profile length must be positive");
}

void ProfileBuilder::add(const TrafficRecord& r) {
  first_seen_ = std::min(first_seen_, r.timestamp);
  last_seen_ = std::max(last_seen_, r.timestamp);
  auto& p = profiles_[r.device_id];
  if (p.empty()) p.assign(hours_, 0.0);
  if (r.timestamp < start_) return;
  const auto h = static_cast<std::size_t>((r.timestamp - start_) / kHourSeconds);
  if (h < hours_) p[h] += static_cast<double>(r.bytes);
}

std::vector<DeviceProfile> ProfileBuilder::finish() const {
  if (profiles_.empty()) throw DataError("no device records");
  const std::int64_t end = start_ + static_cast<std::int64_t>(hours_) * kHourSeconds;
  if (first_seen_ > start_ || last_seen_ < end - kHourSeconds) {
    throw DataError("records do not cover the requested month");
  }
  std::vector<DeviceProfile> out;
  out.reserve(profiles_.size());
  for (const auto& [id, v] : profiles_) out.push_back({id, v});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.device_id < b.device_id; });
  return out;
}

std::vector<DeviceProfile> profile_devices(std::span<const TrafficRecord> records, std::int64_t start,
                                           std::size_t hours) {
  ProfileBuilder b(start, hours);
  for (const auto& r : records) b.add(r);
  return b.finish();
}

nn::Tensor max_normalize(std::span<const DeviceProfile> profiles) {
  if (profiles.empty()) return nn::Tensor({0, kProfileHours});
  const std::size_t d = profiles.front().hourly.size();
  nn::Tensor t({profiles.size(), d});
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& h = profiles[i].hourly;
    if (h.size() != d) throw std::invalid_argument("profiles differ in length");
    const double peak = *std::max_element(h.begin(), h.end());
    for (std::size_t k = 0; k < d; ++k) t[i * d + k] = peak > 0.0 ? h[k] / peak : 0.0;
  }
  return t;
}

std::vector<nn::LayerSpec> layer_specs(const AutoencoderSpec& s) {
  using nn::Activation;
  using nn::DenseSpec;
  return {DenseSpec{s.input, s.hidden1, Activation::relu},  DenseSpec{s.hidden1, s.hidden2, Activation::relu},
          DenseSpec{s.hidden2, s.bottleneck, Activation::linear}, DenseSpec{s.bottleneck, s.hidden2, Activation::relu},
          DenseSpec{s.hidden2, s.hidden1, Activation::relu}, DenseSpec{s.hidden1, s.input, Activation::linear}};
}

Autoencoder train_autoencoder(const nn::Tensor& profiles, const AutoencoderOptions& options) {
  if (profiles.rank() != 2 || profiles.dim(0) < 2) throw DataError("autoencoder needs at least 2 profiles");
  if (profiles.dim(1) != options.spec.input) {
    throw ShapeError("profile length " + std::to_string(profiles.dim(1)) + " does not match autoencoder input " +
                     std::to_string(options.spec.input));
  }
  Autoencoder ae;
  ae.network = nn::Network::build(layer_specs(options.spec), {options.spec.input}, derive_seed(options.seed, 0));
  Rng unused(0);
  ae.initial_loss =
      nn::loss(options.fit.loss, ae.network.forward(profiles, nn::ExecutionMode::infer, unused), profiles);
  nn::FitOptions fo = options.fit;
  fo.seed = derive_seed(options.seed, 1);
  ae.history = nn::fit(ae.network, profiles, profiles, fo);
  return ae;
}

std::vector<LatentPoint> encode(const Autoencoder& ae, const nn::Tensor& profiles) {
  const auto& in = ae.network.input_shape();
  if (profiles.rank() != 2 || profiles.dim(1) != in.at(0)) {
    throw ShapeError("profiles of shape " + nn::to_string(profiles.shape()) + " do not match encoder input " +
                     nn::to_string(in));
  }
  nn::Tensor x = profiles;
  nn::Context ctx;
  ctx.mode = nn::ExecutionMode::infer;
  for (std::size_t i = 0; i < Autoencoder::encoder_layers; ++i) x = ae.network.layer(i).forward(x, ctx, nullptr);
  std::vector<LatentPoint> out(profiles.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {x[i * 3], x[i * 3 + 1], x[i * 3 + 2]};
  return out;
}

ClusterResult dbscan(std::span<const double> points, std::size_t dims, double epsilon, std::size_t min_points) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (min_points < 1) throw std::invalid_argument("minPoints must be at least 1");
  if (dims == 0 || points.size() % dims != 0) throw std::invalid_argument("points do not divide into dims");
  const std::size_t n = points.size() / dims;
  const auto neighbors = kernels::region_queries(points, dims, epsilon);

  constexpr int kUnvisited = -2;
  ClusterResult r;
  r.epsilon = epsilon;
  r.min_points = min_points;
  r.labels.assign(n, kUnvisited);
  r.core.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.core[i] = neighbors[i].size() >= min_points;

  int cluster = 0;
  std::deque<std::uint32_t> frontier;
  for (std::size_t i = 0; i < n; ++i) {
    if (r.labels[i] != kUnvisited) continue;
    if (!r.core[i]) {
      r.labels[i] = kNoise;
      continue;
    }
    r.labels[i] = cluster;
    frontier.assign(1, static_cast<std::uint32_t>(i));
    while (!frontier.empty()) {
      const auto p = frontier.front();
      frontier.pop_front();
      for (auto q : neighbors[p]) {
        if (r.labels[q] != kUnvisited && r.labels[q] != kNoise) continue;
        r.labels[q] = cluster;
        if (r.core[q]) frontier.push_back(q);
      }
    }
    ++cluster;
  }
  r.cluster_count = static_cast<std::size_t>(cluster);
  return r;
}

std::vector<double> k_distances(std::span<const double> points, std::size_t dims, std::size_t k) {
  if (dims == 0 || points.size() % dims != 0) throw std::invalid_argument("points do not divide into dims");
  const std::size_t n = points.size() / dims;
  if (k < 1 || k > n) throw std::invalid_argument("k must be in [1, N]");
  std::vector<double> out(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::vector<double> d(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dims; ++c) {
        const double diff = points[i * dims + c] - points[j * dims + c];
        s += diff * diff;
      }
      d[j] = s;
    }
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
    out[i] = std::sqrt(d[k - 1]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double suggest_epsilon(std::span<const double> points, std::size_t dims, std::size_t min_points) {
  const auto kd = k_distances(points, dims, min_points);
  const double lo = kd.front(), hi = kd.back();
  if (kd.size() < 3 || !(hi > lo)) return hi > 0.0 ? hi : 1.0;
  const double last = static_cast<double>(kd.size() - 1);
  std::size_t best = 0;
  double best_gap = -1.0;
  for (std::size_t i = 0; i < kd.size(); ++i) {
    const double gap = static_cast<double>(i) / last - (kd[i] - lo) / (hi - lo);
    if (gap > best_gap) {
      best_gap = gap;
      best = i;
    }
  }
  return kd[best] > 0.0 ? kd[best] : hi;
}

std::vector<std::size_t> flag_anomalies(const ClusterResult& result) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < result.labels.size(); ++i)
    if (result.labels[i] == kNoise) out.push_back(i);
  return out;
}

ClusterReport cluster_report(const ClusterResult& result, const Truth* truth) {
  ClusterReport rep;
  rep.clusters = result.cluster_count;
  rep.sizes.assign(result.cluster_count, 0);
  for (int l : result.labels) {
    if (l == kNoise) {
      ++rep.noise;
    } else {
      ++rep.sizes.at(static_cast<std::size_t>(l));
    }
  }
  if (!truth) return rep;
  const std::size_t n = result.labels.size();
  if (truth->labels.size() != n || truth->anomalous.size() != n) {
    throw std::invalid_argument("truth does not match the clustered points");
  }
  std::vector<std::map<std::string, std::size_t>> votes(result.cluster_count);
  std::size_t anomalies = 0, flagged = 0, caught = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool noise = result.labels[i] == kNoise;
    if (!noise) ++votes[static_cast<std::size_t>(result.labels[i])][truth->labels[i]];
    anomalies += truth->anomalous[i];
    flagged += noise;
    caught += noise && truth->anomalous[i];
  }
  std::size_t majority = 0, clustered = n - rep.noise;
  for (const auto& v : votes) {
    std::size_t best = 0;
    for (const auto& [label, count] : v) best = std::max(best, count);
    majority += best;
  }
  if (clustered > 0) rep.purity = static_cast<double>(majority) / static_cast<double>(clustered);
  if (anomalies > 0) rep.anomaly_recall = static_cast<double>(caught) / static_cast<double>(anomalies);
  if (flagged > 0) rep.anomaly_precision = static_cast<double>(caught) / static_cast<double>(flagged);
  return rep;
}

PipelineResult run_pipeline(std::span<const DeviceProfile> profiles, const PipelineOptions& options) {
  const nn::Tensor x = max_normalize(profiles);
  PipelineResult r;
  r.autoencoder = train_autoencoder(x, options.autoencoder);
  r.latent = encode(r.autoencoder, x);
  const std::span<const double> flat(r.latent.front().data(), r.latent.size() * 3);
  const double eps = options.epsilon ? *options.epsilon : suggest_epsilon(flat, 3, options.min_points);
  r.clusters = dbscan(flat, 3, eps, options.min_points);
  return r;
}

void write_latent_csv(std::ostream& out, std::span<const DeviceProfile> profiles, std::span<const LatentPoint> latent) {
  if (profiles.size() != latent.size()) throw std::invalid_argument("latent points do not match profiles");
  out << "device_id,x,y,z\n";
  const auto old = out.precision(17);
  for (std::size_t i = 0; i < latent.size(); ++i) {
    out << profiles[i].device_id << ',' << latent[i][0] << ',' << latent[i][1] << ',' << latent[i][2] << '\n';
  }
  out.precision(old);
}

void write_clusters_csv(std::ostream& out, std::span<const DeviceProfile> profiles, const ClusterResult& result) {
  if (profiles.size() != result.labels.size()) throw std::invalid_argument("clusters do not match profiles");
  out << "device_id,cluster_or_NOISE\n";
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    out << profiles[i].device_id << ',';
    if (result.labels[i] == kNoise) {
      out << "NOISE";
    } else {
      out << result.labels[i];
    }
    out << '\n';
  }
}

void write_anomalies_csv(std::ostream& out, std::span<const DeviceProfile> profiles, const ClusterResult& result) {
  out << "device_id\n";
  for (auto i : flag_anomalies(result)) out << profiles[i].device_id << '\n';
}

}  // namespace iotflow::devices

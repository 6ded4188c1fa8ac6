#include "iotflow/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "iotflow/error.hpp"

namespace iotflow {

namespace {

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

template <typename Int>
bool parse_int(std::string_view field, Int& out) {
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Splits on ',' into exactly `n` fields; returns false on any other count.
bool split_fields(std::string_view line, std::span<std::string_view> fields) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (n == fields.size()) return false;
    if (comma == std::string_view::npos) {
      fields[n++] = line.substr(pos);
      break;
    }
    fields[n++] = line.substr(pos, comma - pos);
    pos = comma + 1;
  }
  return n == fields.size();
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void check_totals(std::span<const double> totals) {
  if (totals.empty()) throw DataError("empty totals");
  double sum = 0.0;
  for (double t : totals) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DataError("totals must be finite and non-negative");
    sum += t;
  }
  if (sum <= 0.0) throw DataError("zero mass");
}

}  // namespace

std::string_view to_string(Direction d) {
  return d == Direction::to_device ? "to_device" : "from_device";
}

double HourlySeries::total() const { return std::accumulate(values.begin(), values.end(), 0.0); }

SplitSpec SplitSpec::end_of_october(int year) { return SplitSpec{utc_timestamp(year, 11, 1)}; }

void for_each_record(std::istream& in, const RecordSink& sink) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  ++line_no;
  if (trim_cr(line) != kTrafficHeader) {
    throw ParseError(line_no, "unexpected header, want '" + std::string(kTrafficHeader) + "'");
  }
  std::array<std::string_view, 6> f;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim_cr(line);
    if (row.empty()) continue;
    if (!split_fields(row, f)) throw ParseError(line_no, "expected 6 fields");
    TrafficRecord r;
    if (!parse_int(f[0], r.timestamp)) throw ParseError(line_no, "bad timestamp");
    if (r.timestamp % kBinSeconds != 0) throw ParseError(line_no, "misaligned bin");
    if (f[1].empty() || f[2].empty()) throw ParseError(line_no, "empty identifier");
    r.company_id = f[1];
    r.device_id = f[2];
    if (f[3] == "to_device") {
      r.direction = Direction::to_device;
    } else if (f[3] == "from_device") {
      r.direction = Direction::from_device;
    } else {
      throw ParseError(line_no, "bad direction '" + std::string(f[3]) + "'");
    }
    // from_chars into unsigned rejects a leading '-', so negatives fail here.
    if (!parse_int(f[4], r.bytes)) throw ParseError(line_no, "bad bytes");
    if (!parse_int(f[5], r.packets)) throw ParseError(line_no, "bad packets");
    sink(std::move(r));
  }
}

std::vector<TrafficRecord> parse_records(std::istream& in) {
  std::vector<TrafficRecord> out;
  for_each_record(in, [&](TrafficRecord&& r) { out.push_back(std::move(r)); });
  return out;
}

void write_records_header(std::ostream& out) { out << kTrafficHeader << '\n'; }

void write_record(std::ostream& out, const TrafficRecord& r) {
  out << r.timestamp << ',' << r.company_id << ',' << r.device_id << ',' << to_string(r.direction)
      << ',' << r.bytes << ',' << r.packets << '\n';
}

HourlySeries bin_to_hourly(std::span<const TrafficRecord> records, const std::string& company_id) {
  HourlyAggregator agg;
  for (const auto& r : records) {
    if (r.company_id != company_id) {
      throw DataError("record for company '" + r.company_id + "' passed as '" + company_id + "'");
    }
    agg.add(r);
  }
  return agg.series(company_id);
}

void HourlyAggregator::add(const TrafficRecord& r) {
  auto it = companies_.find(r.company_id);
  if (it == companies_.end()) it = companies_.emplace(r.company_id, Company{}).first;
  Company& c = it->second;
  const std::int64_t hour = floor_div(r.timestamp, kHourSeconds);
  if (c.values.empty()) {
    c.first_hour = hour;
    c.values.push_back(0.0);
  } else if (hour < c.first_hour) {
    c.values.insert(c.values.begin(), static_cast<std::size_t>(c.first_hour - hour), 0.0);
    c.first_hour = hour;
  }
  const auto idx = static_cast<std::size_t>(hour - c.first_hour);
  if (idx >= c.values.size()) c.values.resize(idx + 1, 0.0);
  const auto bytes = static_cast<double>(r.bytes);
  c.values[idx] += bytes;
  c.total += bytes;
  if (!c.devices.contains(r.device_id)) c.devices.insert(r.device_id);
}

std::vector<std::string> HourlyAggregator::companies() const {
  std::vector<std::string> ids;
  ids.reserve(companies_.size());
  for (const auto& [id, _] : companies_) ids.push_back(id);
  return ids;
}

HourlySeries HourlyAggregator::series(const std::string& company_id) const {
  auto it = companies_.find(company_id);
  if (it == companies_.end()) throw DataError("no data for company '" + company_id + "'");
  const Company& c = it->second;
  return HourlySeries{company_id, c.first_hour * kHourSeconds, c.values};
}

std::vector<HourlySeries> HourlyAggregator::all_series() const {
  std::vector<HourlySeries> out;
  out.reserve(companies_.size());
  for (const auto& [id, _] : companies_) out.push_back(series(id));
  return out;
}

double HourlyAggregator::total_bytes(const std::string& company_id) const {
  auto it = companies_.find(company_id);
  return it == companies_.end() ? 0.0 : it->second.total;
}

std::size_t HourlyAggregator::device_count(const std::string& company_id) const {
  auto it = companies_.find(company_id);
  return it == companies_.end() ? 0 : it->second.devices.size();
}

void write_hourly_csv(std::ostream& out, std::span<const HourlySeries> series) {
  out << kHourlyHeader << '\n';
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      out << s.company_id << ',' << s.hour_start(i) << ',' << static_cast<std::uint64_t>(s.values[i])
          << '\n';
    }
  }
}

std::vector<WindowedSample> make_windows(const HourlySeries& series, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("stride must be >= 1");
  const std::size_t n = series.values.size();
  if (n < kWindowHours) {
    throw DataError("insufficient history: company '" + series.company_id + "' has " +
                    std::to_string(n) + " hours, need " + std::to_string(kWindowHours));
  }
  std::vector<WindowedSample> out;
  out.reserve((n - kWindowHours) / stride + 1);
  for (std::size_t o = 0; o + kWindowHours <= n; o += stride) {
    const auto base = series.values.begin() + static_cast<std::ptrdiff_t>(o);
    WindowedSample w;
    w.input.assign(base, base + kInputHours);
    w.target.assign(base + kInputHours, base + kWindowHours);
    w.target_start = series.hour_start(o + kInputHours);
    out.push_back(std::move(w));
  }
  return out;
}

std::pair<HourlySeries, HourlySeries> split_train_test(const HourlySeries& series,
                                                       const SplitSpec& split) {
  if (series.values.empty() || split.boundary <= series.start || split.boundary >= series.end()) {
    throw DataError("degenerate split for company '" + series.company_id + "'");
  }
  // Boundary inside an hour: that hour starts before the boundary, so it trains.
  const std::int64_t offset = split.boundary - series.start;
  const auto cut = static_cast<std::size_t>((offset + kHourSeconds - 1) / kHourSeconds);
  HourlySeries train{series.company_id, series.start,
                     {series.values.begin(), series.values.begin() + static_cast<std::ptrdiff_t>(cut)}};
  HourlySeries test{series.company_id, series.hour_start(cut),
                    {series.values.begin() + static_cast<std::ptrdiff_t>(cut), series.values.end()}};
  return {std::move(train), std::move(test)};
}

std::vector<CdfPoint> cdf_points(std::span<const double> totals) {
  check_totals(totals);
  std::vector<double> sorted(totals.begin(), totals.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double grand = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  const auto n = static_cast<double>(sorted.size());
  std::vector<CdfPoint> out;
  out.reserve(sorted.size());
  double running = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    running += sorted[k];
    out.push_back({static_cast<double>(k + 1) / n, running / grand});
  }
  out.back() = {1.0, 1.0};
  return out;
}

double pareto_share(std::span<const double> totals, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw std::invalid_argument("top_fraction must be in (0, 1]");
  }
  const auto cdf = cdf_points(totals);
  auto k = static_cast<std::size_t>(std::ceil(top_fraction * static_cast<double>(cdf.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, cdf.size());
  return cdf[k - 1].share;
}

std::int64_t utc_timestamp(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const sys_days d = year_month_day{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  return duration_cast<seconds>(d.time_since_epoch()).count();
}

int utc_year(std::int64_t timestamp) {
  using namespace std::chrono;
  const sys_days d = floor<days>(sys_seconds{seconds{timestamp}});
  return static_cast<int>(year_month_day{d}.year());
}

}  // namespace iotflow

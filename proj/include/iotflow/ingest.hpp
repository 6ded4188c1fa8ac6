#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <unordered_set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace iotflow {

inline constexpr std::int64_t kBinSeconds = 900;
inline constexpr std::int64_t kHourSeconds = 3600;
inline constexpr std::size_t kInputHours = 504;    // three weeks of history
inline constexpr std::size_t kHorizonHours = 168;  // one week ahead
inline constexpr std::size_t kWindowHours = kInputHours + kHorizonHours;

inline constexpr std::string_view kTrafficHeader =
    "timestamp,company_id,device_id,direction,bytes,packets";
inline constexpr std::string_view kHourlyHeader = "company_id,hour_start,bytes";

enum class Direction { to_device, from_device };

std::string_view to_string(Direction d);

/// One 15-minute billing bin for one device and one direction.
struct TrafficRecord {
  std::int64_t timestamp = 0;  // unix seconds, multiple of kBinSeconds
  std::string company_id;
  std::string device_id;
  Direction direction = Direction::to_device;
  std::uint64_t bytes = 0;
  std::uint64_t packets = 0;

  bool operator==(const TrafficRecord&) const = default;
};

/// Per-company hourly byte totals. values[i] covers [start + 3600 i, start + 3600 (i+1)).
struct HourlySeries {
  std::string company_id;
  std::int64_t start = 0;
  std::vector<double> values;

  std::int64_t hour_start(std::size_t i) const {
    return start + static_cast<std::int64_t>(i) * kHourSeconds;
  }
  std::int64_t end() const { return hour_start(values.size()); }
  double total() const;
};

struct WindowedSample {
  std::vector<double> input;   // kInputHours values
  std::vector<double> target;  // kHorizonHours values, immediately after input
  std::int64_t target_start = 0;
};

/// Train/test partition at a UTC calendar boundary: train is strictly before
/// `boundary`, test is at or after it.
struct SplitSpec {
  std::int64_t boundary = 0;

  /// Train January through October of `year`, test November and December.
  static SplitSpec end_of_october(int year);
};

struct CdfPoint {
  double fraction = 0.0;  // k / N
  double share = 0.0;     // top-k mass / total mass

  bool operator==(const CdfPoint&) const = default;
};

// -- parsing -----------------------------------------------------------------

using RecordSink = std::function<void(TrafficRecord&&)>;

/// Streams records out of a traffic CSV without materializing the whole file.
/// Throws ParseError (with line number) on a malformed row or a misaligned bin.
void for_each_record(std::istream& in, const RecordSink& sink);

std::vector<TrafficRecord> parse_records(std::istream& in);

void write_records_header(std::ostream& out);
void write_record(std::ostream& out, const TrafficRecord& r);

// -- aggregation -------------------------------------------------------------

/// Hourly sum over both directions of the records of one company. Hours between
/// the first and last observed hour that have no records are zero.
HourlySeries bin_to_hourly(std::span<const TrafficRecord> records, const std::string& company_id);

/// Streaming counterpart of bin_to_hourly over a multi-company stream. Also
/// tracks the distinct devices of each company for the device-count statistics.
class HourlyAggregator {
 public:
  void add(const TrafficRecord& r);

  std::vector<std::string> companies() const;
  HourlySeries series(const std::string& company_id) const;
  std::vector<HourlySeries> all_series() const;

  double total_bytes(const std::string& company_id) const;
  std::size_t device_count(const std::string& company_id) const;

 private:
  struct Company {
    std::int64_t first_hour = 0;  // hour index (timestamp / 3600) of values[0]
    std::vector<double> values;
    std::unordered_set<std::string> devices;
    double total = 0.0;
  };
  std::map<std::string, Company, std::less<>> companies_;
};

void write_hourly_csv(std::ostream& out, std::span<const HourlySeries> series);

// -- supervised windows ------------------------------------------------------

/// One sample per offset 0, stride, 2 stride, ... with offset + 672 <= length.
std::vector<WindowedSample> make_windows(const HourlySeries& series, std::size_t stride = 24);

std::pair<HourlySeries, HourlySeries> split_train_test(const HourlySeries& series,
                                                       const SplitSpec& split);

// -- exploratory statistics --------------------------------------------------

std::vector<CdfPoint> cdf_points(std::span<const double> totals);

/// Share of the grand total held by the ceil(top_fraction N) largest entities.
double pareto_share(std::span<const double> totals, double top_fraction);

// -- calendar helpers (UTC) --------------------------------------------------

std::int64_t utc_timestamp(int year, unsigned month, unsigned day);
int utc_year(std::int64_t timestamp);

}  // namespace iotflow

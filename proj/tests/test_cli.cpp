#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "iotflow/ingest.hpp"
#include "support/cli_runner.hpp"

using namespace cli_support;

namespace {

// One synthetic workload shared by the tests below.
const TempDir& workload() {
  static TempDir dir("cli-data");
  static const bool made = [] {
    const auto r = run(small_synth(dir.str()));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return true;
  }();
  (void)made;
  return dir;
}

std::string traffic() { return workload().file("traffic.csv"); }

bool no_temp_files(const fs::path& dir) {
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".tmp") return false;
  }
  return true;
}

double num(const std::string& s) { return std::stod(s); }

}  // namespace

TEST_CASE("synth writes traffic, fleet and truth deterministically") {
  TempDir a("synth-a"), b("synth-b");
  REQUIRE(run(small_synth(a.str())).code == 0);
  REQUIRE(run(small_synth(b.str())).code == 0);
  const auto fa = snapshot(a.path());
  CHECK(fa.count("traffic.csv") == 1);
  CHECK(fa.count("fleet.csv") == 1);
  CHECK(fa.count("truth.csv") == 1);
  CHECK(fa.size() == 3);
  CHECK(fa == snapshot(b.path()));

  TempDir c("synth-c");
  REQUIRE(run(small_synth(c.str(), "12")).code == 0);
  CHECK(snapshot(c.path()).at("traffic.csv") != fa.at("traffic.csv"));

  const auto truth = read_csv(a.path() / "truth.csv");
  CHECK(truth.size() == 61);
  CHECK(truth.front() == std::vector<std::string>{"device_id", "label"});
}

TEST_CASE("errors map to exit codes and leave no outputs") {
  TempDir dir("errors");
  const auto missing = (dir.path() / "absent").string();
  auto r = run(small_synth(missing));
  CHECK(r.code == iotflow::cli::kExitData);
  CHECK(r.err.find("output directory") != std::string::npos);
  CHECK_FALSE(fs::exists(missing));

  CHECK(run({}).code == iotflow::cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == iotflow::cli::kExitUsage);
  CHECK(run({"synth", "--no-such-flag"}).code == iotflow::cli::kExitUsage);
  CHECK(run({"--help"}).code == iotflow::cli::kExitOk);
  CHECK(run({"--out", dir.str(), "train", "--input", traffic(), "--regime", "sideways"}).code ==
        iotflow::cli::kExitUsage);
  CHECK(run({"--out", dir.str(), "synth", "--device-types", "10"}).code == iotflow::cli::kExitUsage);

  r = run({"--out", dir.str(), "eda", "--input", dir.file("nope.csv")});
  CHECK(r.code == iotflow::cli::kExitData);

  {
    std::ofstream bad(dir.file("bad.csv"));
    bad << iotflow::kTrafficHeader << "\n1546300800,c0,d0,to_device,12,1\n1546300801,c0,d0,to_device,12,1\n";
  }
  r = run({"--out", dir.str(), "eda", "--input", dir.file("bad.csv")});
  CHECK(r.code == iotflow::cli::kExitData);
  CHECK(r.err.find("line 3") != std::string::npos);

  // Fails after the checkpoint is read: nothing may be left behind.
  TempDir model("errors-model");
  REQUIRE(run(concat({"--out", model.str(), "train", "--input", traffic(), "--top", "2", "--top-devices", "0"},
                     tiny_model()))
              .code == 0);
  TempDir out("errors-out");
  r = run({"--out", out.str(), "forecast", "--checkpoint", model.file("model.json"), "--input", traffic(),
           "--company", "unknown"});
  CHECK(r.code == iotflow::cli::kExitData);
  CHECK(fs::is_empty(out.path()));

  {
    std::ofstream junk(dir.file("junk.json"));
    junk << "{\"format\": \"iotflow-model\"";
  }
  r = run({"--out", out.str(), "forecast", "--checkpoint", dir.file("junk.json"), "--input", traffic()});
  CHECK(r.code == iotflow::cli::kExitData);
  CHECK(fs::is_empty(out.path()));
}

TEST_CASE("eda CDFs end at (1, 1) and pareto shares match a recomputation") {
  TempDir dir("eda");
  const auto r = run({"--out", dir.str(), "eda", "--input", traffic()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (const char* f : {"traffic_cdf.csv", "traffic_cdf.svg", "devices_cdf.csv", "devices_cdf.svg", "pareto.csv"}) {
    CHECK_MESSAGE(fs::exists(dir.path() / f), f);
  }
  for (const char* f : {"traffic_cdf.csv", "devices_cdf.csv"}) {
    const auto rows = read_csv(dir.path() / f);
    REQUIRE(rows.size() == 6);
    CHECK(num(rows.back()[0]) == 1.0);
    CHECK(num(rows.back()[1]) == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Independent totals straight from the records.
  std::ifstream in(traffic());
  std::map<std::string, double> bytes;
  std::map<std::string, std::set<std::string>> devs;
  iotflow::for_each_record(in, [&](iotflow::TrafficRecord&& rec) {
    bytes[rec.company_id] += static_cast<double>(rec.bytes);
    devs[rec.company_id].insert(rec.device_id);
  });
  auto top_share = [](std::vector<double> v, double q) {
    std::sort(v.rbegin(), v.rend());
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
           std::accumulate(v.begin(), v.end(), 0.0);
  };
  std::vector<double> tb, dc;
  for (const auto& [id, b] : bytes) {
    tb.push_back(b);
    dc.push_back(static_cast<double>(devs[id].size()));
  }
  const auto rows = read_csv(dir.path() / "pareto.csv");
  REQUIRE(rows.size() == 9);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double q = num(rows[i][1]);
    const double expected = rows[i][0] == "traffic" ? top_share(tb, q) : top_share(dc, q);
    CHECK(num(rows[i][2]) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("train writes one checkpoint per company or one global checkpoint") {
  TempDir per("train-per");
  auto r = run(concat({"--out", per.str(), "train", "--input", traffic(), "--regime", "per-company", "--arch", "cnn",
                       "--top", "3", "--top-devices", "0"},
                      tiny_model()));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::size_t checkpoints = 0;
  for (const auto& e : fs::directory_iterator(per.path())) {
    const auto name = e.path().filename().string();
    if (name.rfind("model-", 0) == 0 && e.path().extension() == ".json") ++checkpoints;
  }
  CHECK(checkpoints == 3);
  CHECK(read_csv(per.path() / "metrics.csv").size() == 4);
  CHECK(no_temp_files(per.path()));

  TempDir global("train-global");
  const auto args = concat({"--out", global.str(), "train", "--input", traffic(), "--regime", "global-normalized",
                            "--arch", "convlstm", "--top", "3", "--top-devices", "0"},
                           tiny_model());
  r = run(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::ifstream in(global.path() / "model.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("version").is_number_integer());
  CHECK(j.at("meta").at("regime") == "global-normalized");
  CHECK(j.at("meta").at("scalers").size() == 3);
  const auto first = snapshot(global.path());
  REQUIRE(run(args).code == 0);
  CHECK(snapshot(global.path()) == first);
}

TEST_CASE("forecast emits 168 rows and zero spread without dropout") {
  TempDir model("fc-model");
  REQUIRE(run(concat({"--out", model.str(), "train", "--input", traffic(), "--top", "2", "--top-devices", "0"},
                     tiny_model()))
              .code == 0);
  const std::vector<std::string> base = {"forecast", "--checkpoint", model.file("model.json"), "--input", traffic(),
                                         "--start", "2019-11-15", "--samples", "10"};
  TempDir a("fc-a"), b("fc-b"), z("fc-p0");
  auto r = run(concat({"--out", a.str()}, base));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  REQUIRE(run(concat({"--out", b.str()}, base)).code == 0);
  CHECK(snapshot(a.path()) == snapshot(b.path()));

  const auto fc = read_csv(a.path() / "forecast.csv");
  CHECK(fc.size() == 169);
  CHECK(fc.front() == std::vector<std::string>{"company_id", "hour_start", "forecast_bytes"});
  for (const char* f : {"band_z1.csv", "band_z2.csv", "band_z3.csv", "band.csv", "band.svg"}) {
    CHECK_MESSAGE(fs::exists(a.path() / f), f);
  }
  const auto band = read_csv(a.path() / "band.csv");
  CHECK(band.size() == 1 + 504 + 168);
  CHECK_FALSE(band.back()[1].empty());  // actuals exist for a mid-series start

  const auto z1 = read_csv(a.path() / "band_z1.csv");
  const auto z3 = read_csv(a.path() / "band_z3.csv");
  REQUIRE(z1.size() == 169);
  for (std::size_t i = 1; i < z1.size(); ++i) {
    CHECK(num(z3[i][4]) <= num(z1[i][4]));
    CHECK(num(z3[i][5]) >= num(z1[i][5]));
  }

  r = run(concat({"--out", z.str()}, concat(base, {"--p", "0"})));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto p0 = read_csv(z.path() / "band_z2.csv");
  REQUIRE(p0.size() == 169);
  for (std::size_t i = 1; i < p0.size(); ++i) CHECK(num(p0[i][3]) == 0.0);
}

TEST_CASE("evaluate produces the comparison table and monotone PICP") {
  TempDir a("eval-a"), b("eval-b");
  const auto args = concat({"evaluate", "--input", traffic(), "--top", "3", "--top-devices", "0", "--samples", "8"},
                           tiny_model());
  auto r = run(concat({"--out", a.str()}, args));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("reference") != std::string::npos);
  REQUIRE(run(concat({"--out", b.str()}, args)).code == 0);
  CHECK(snapshot(a.path()) == snapshot(b.path()));

  const auto table = read_csv(a.path() / "comparison.csv");
  REQUIRE(table.size() == 7);  // header + 2 regimes x 3 architectures
  const auto metrics = read_csv(a.path() / "metrics.csv");
  for (std::size_t i = 1; i < table.size(); ++i) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 1; k < metrics.size(); ++k) {
      if (metrics[k][0] == table[i][0] && metrics[k][1] == table[i][1]) {
        sum += num(metrics[k][3]);
        ++n;
      }
    }
    REQUIRE(n == 3);
    CHECK(num(table[i][2]) == doctest::Approx(sum / 3.0).epsilon(1e-12));
  }
  for (const char* f : {"picp_per-company.csv", "picp_global-normalized.csv"}) {
    const auto rows = read_csv(a.path() / f);
    REQUIRE(rows.size() == 4);
    CHECK(num(rows[1][1]) <= num(rows[2][1]));
    CHECK(num(rows[2][1]) <= num(rows[3][1]));
  }
  CHECK(fs::exists(a.path() / "comparison.svg"));
  CHECK(fs::exists(a.path() / "picp.svg"));
}

TEST_CASE("devices clusters the fleet and lists noise points as anomalies") {
  TempDir a("dev-a"), b("dev-b");
  const std::vector<std::string> args = {"devices", "--input", workload().file("fleet.csv"), "--truth",
                                         workload().file("truth.csv"), "--epochs", "3", "--batch", "16"};
  auto r = run(concat({"--out", a.str()}, args));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  REQUIRE(run(concat({"--out", b.str()}, args)).code == 0);
  CHECK(snapshot(a.path()) == snapshot(b.path()));

  const auto clusters = read_csv(a.path() / "clusters.csv");
  const auto anomalies = read_csv(a.path() / "anomalies.csv");
  CHECK(clusters.size() == 61);
  std::vector<std::string> noise;
  for (std::size_t i = 1; i < clusters.size(); ++i) {
    if (clusters[i][1] == "NOISE") noise.push_back(clusters[i][0]);
  }
  std::vector<std::string> listed;
  for (std::size_t i = 1; i < anomalies.size(); ++i) listed.push_back(anomalies[i][0]);
  CHECK(listed == noise);
  CHECK(read_csv(a.path() / "latent.csv").size() == 61);
  const auto summary = snapshot(a.path()).at("summary.csv");
  CHECK(summary.find("anomaly_recall,") != std::string::npos);
  CHECK(fs::exists(a.path() / "latent.svg"));

  TempDir bad("dev-bad");
  r = run({"--out", bad.str(), "devices", "--input", workload().file("fleet.csv"), "--month", "2018-01"});
  CHECK(r.code == iotflow::cli::kExitData);
  CHECK(fs::is_empty(bad.path()));
}

TEST_CASE("JSON config supplies values and flags override them") {
  TempDir dir("config"), flags("config-flags"), override_dir("config-override");
  {
    std::ofstream cfg(dir.file("run.json"));
    cfg << R"({"seed": 11, "synth": {"companies": 3, "days": 122, "start": "2019-09-01", "devices": 60,
              "device-types": 3}})";
  }
  auto r = run({"--config", dir.file("run.json"), "--out", flags.str(), "synth"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  TempDir plain("config-plain");
  REQUIRE(run({"--seed", "11", "--out", plain.str(), "synth", "--companies", "3", "--days", "122", "--start",
               "2019-09-01", "--devices", "60", "--device-types", "3"})
              .code == 0);
  CHECK(snapshot(flags.path()) == snapshot(plain.path()));

  r = run({"--config", dir.file("run.json"), "--out", override_dir.str(), "synth", "--companies", "5"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(snapshot(override_dir.path()) == snapshot(workload().path()));

  {
    std::ofstream cfg(dir.file("broken.json"));
    cfg << "{seed: 1";
  }
  CHECK(run({"--config", dir.file("broken.json"), "--out", dir.str(), "synth"}).code == iotflow::cli::kExitUsage);
}

#include "doctest.h"

#include "mmamba/bench.hpp"
#include "mmamba/csv.hpp"

#include <cmath>
#include <filesystem>

using namespace mmamba;

TEST_CASE("ladder doubles from min to max") {
  CHECK(bench_ladder(64, 4096) == std::vector<Index>{64, 128, 256, 512, 1024, 2048, 4096});
  CHECK(bench_ladder(3, 20) == std::vector<Index>{3, 6, 12});
  CHECK(bench_ladder(5, 5) == std::vector<Index>{5});
  CHECK_THROWS_AS(bench_ladder(0, 8), std::invalid_argument);
  CHECK_THROWS_AS(bench_ladder(16, 8), std::invalid_argument);
}

TEST_CASE("log-log slope recovers power laws") {
  const std::vector<double> x = {64, 128, 256, 512, 1024};
  for (double p : {0.0, 1.0, 1.5, 2.0}) {
    std::vector<double> y;
    for (double v : x) y.push_back(3e-4 * std::pow(v, p));
    CHECK(loglog_slope(x, y) == doctest::Approx(p).epsilon(1e-12));
  }
  // a x + b x^2 sits between 1 and 2.
  std::vector<double> y;
  for (double v : x) y.push_back(v + 1e-2 * v * v);
  const double s = loglog_slope(x, y);
  CHECK(s > 1.0);
  CHECK(s < 2.0);
  CHECK_THROWS_AS(loglog_slope(std::vector<double>{1.0}, std::vector<double>{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(loglog_slope(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(loglog_slope(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("peak estimates: linear for the scan, quadratic for attention") {
  CHECK(htm_peak_bytes(2048, 32, 16) == doctest::Approx(2.0 * htm_peak_bytes(1024, 32, 16)));
  // Width 32, state 16: 9 * 32 + ceil(32/16) + 32 doubles per step.
  CHECK(htm_peak_bytes(100, 32, 16) == 8.0 * 100 * (9 * 32 + 2 + 32));
  CHECK(attention_peak_bytes(100, 32) == 8.0 * (100 * 15 * 32 + 2 * 100 * 100));
  // Doubling T leaves 4 T^2 extra doubles beyond the linear part.
  const double t = 4096;
  CHECK(attention_peak_bytes(8192, 32) - 2.0 * attention_peak_bytes(4096, 32) == 8.0 * 4.0 * t * t);
}

TEST_CASE("monotone check flags a drop within one impl only") {
  std::vector<BenchRecord> r = {{"a", 64, 1.0, 0, 0}, {"a", 128, 2.0, 0, 0}, {"b", 64, 5.0, 0, 0}, {"b", 128, 5.0, 0, 0}};
  CHECK(bench_monotone(r));
  r[1].median_s = 0.5;
  CHECK_FALSE(bench_monotone(r));
}

TEST_CASE("short bench run produces a full table") {
  BenchOptions o;
  o.width = 8;
  o.min_t = 8;
  o.max_t = 32;
  o.min_sample_s = 1e-4;
  const auto records = run_bench(o);
  REQUIRE(records.size() == 6);
  for (const auto& r : records) {
    CHECK((r.impl == "htm_scan" || r.impl == "attention_baseline"));
    CHECK(r.median_s > 0.0);
    CHECK(r.peak_bytes > 0.0);
    CHECK(std::isfinite(r.slope));
  }
  CHECK(records[0].slope == records[2].slope);

  const auto path = (std::filesystem::temp_directory_path() / "mmamba_bench_test.csv").string();
  write_bench_csv(path, records);
  const CsvTable t = load_csv(path);
  CHECK(t.header == std::vector<std::string>{"impl", "T", "median_s", "slope", "peak_bytes"});
  REQUIRE(t.rows.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(t.number(i, "median_s") == records[i].median_s);

  o.repeats = 4;
  CHECK_THROWS_AS(run_bench(o), std::invalid_argument);
}

#include "mmamba/bench.hpp"

#include "mmamba/blocks.hpp"
#include "mmamba/csv.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

namespace mmamba {

namespace {

constexpr Index kBenchState = 16;
constexpr Index kBenchConv = 4;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Median seconds per call; calls per sample double until a sample is long
// enough for the clock to resolve it.
template <class F>
double median_time(F&& forward, const BenchOptions& options) {
  if (options.repeats < 5) throw std::invalid_argument("bench needs at least 5 repeats");
  forward();  // warm-up
  long calls = 1;
  for (;;) {
    const auto t0 = std::chrono::steady_clock::now();
    for (long i = 0; i < calls; ++i) forward();
    if (seconds_since(t0) >= options.min_sample_s || calls >= (1L << 20)) break;
    calls *= 2;
  }
  std::vector<double> samples;
  for (int r = 0; r < options.repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    for (long i = 0; i < calls; ++i) forward();
    samples.push_back(seconds_since(t0) / static_cast<double>(calls));
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  return n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

Tensor bench_input(Index T, Index width, Rng& rng) { return randn({T, 1, width}, rng); }

}  // namespace

std::vector<Index> bench_ladder(Index min_t, Index max_t) {
  if (min_t < 1 || max_t < min_t) throw std::invalid_argument("bench ladder needs 1 <= min_t <= max_t");
  std::vector<Index> ts;
  for (Index t = min_t; t <= max_t; t *= 2) ts.push_back(t);
  return ts;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("slope needs matching series of length >= 2");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("slope needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw std::invalid_argument("slope needs two distinct x values");
  return sxy / sxx;
}

double htm_peak_bytes(Index T, Index width, Index state) {
  // input, norm, in_proj pair, x-path, gate, conv, silu, step sizes and
  // x_proj rows of width ceil(E/16) + 2N.
  const double E = static_cast<double>(width);
  const double row = 2.0 * E + 2.0 * E + 5.0 * E + static_cast<double>(default_dt_rank(width) + 2 * state);
  return 8.0 * static_cast<double>(T) * row;
}

double attention_peak_bytes(Index T, Index width) {
  // input, norm, q, k, v, context, output, 4x hidden pair, plus logits and
  // probabilities of the single head.
  const double t = static_cast<double>(T);
  return 8.0 * (t * 15.0 * static_cast<double>(width) + 2.0 * t * t);
}

std::vector<BenchRecord> run_bench(const BenchOptions& options, std::ostream* log) {
  const auto ladder = bench_ladder(options.min_t, options.max_t);
  ParamSet params;
  Rng rng(options.seed);
  Init init(params, rng);
  const HTMBlock htm =
      HTMBlock::make(init.sub("htm"), "layer", {options.width, options.width, kBenchState, kBenchConv}, 1);
  const TransformerBlock attn = TransformerBlock::make(init.sub("attn"), "block", options.width, 1);

  NoGradGuard no_grad;
  std::vector<BenchRecord> records;
  for (const std::string impl : {"htm_scan", "attention_baseline"}) {
    std::vector<double> ts, times;
    const std::size_t first = records.size();
    for (Index T : ladder) {
      const Tensor x = bench_input(T, options.width, rng);
      BenchRecord r;
      r.impl = impl;
      r.T = T;
      if (impl == "htm_scan") {
        r.median_s = median_time([&] { (void)htm(x); }, options);
        r.peak_bytes = htm_peak_bytes(T, options.width, kBenchState);
      } else {
        r.median_s = median_time([&] { (void)attn(x); }, options);
        r.peak_bytes = attention_peak_bytes(T, options.width);
      }
      if (log) *log << impl << " T=" << T << " median_s=" << csv_number(r.median_s) << "\n";
      ts.push_back(static_cast<double>(T));
      times.push_back(r.median_s);
      records.push_back(r);
    }
    const double slope = ladder.size() >= 2 ? loglog_slope(ts, times) : 0.0;
    for (std::size_t i = first; i < records.size(); ++i) records[i].slope = slope;
    if (log) *log << impl << " slope=" << csv_number(slope) << "\n";
  }
  return records;
}

bool bench_monotone(std::span<const BenchRecord> records) {
  std::map<std::string, std::vector<const BenchRecord*>> by_impl;
  for (const auto& r : records) by_impl[r.impl].push_back(&r);
  for (auto& [impl, rs] : by_impl) {
    std::sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->T < b->T; });
    for (std::size_t i = 1; i < rs.size(); ++i) {
      if (rs[i]->median_s < rs[i - 1]->median_s) return false;
    }
  }
  return true;
}

void write_bench_csv(const std::string& path, std::span<const BenchRecord> records) {
  CsvTable table;
  table.header = {"impl", "T", "median_s", "slope", "peak_bytes"};
  for (const auto& r : records) {
    table.rows.push_back({r.impl, std::to_string(r.T), csv_number(r.median_s), csv_number(r.slope),
                          csv_number(r.peak_bytes)});
  }
  save_csv(path, table);
}

}  // namespace mmamba

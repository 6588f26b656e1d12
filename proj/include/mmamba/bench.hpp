#pragma once

// Forward-time scaling of one HTM layer against one transformer block.

#include "mmamba/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mmamba {

struct BenchOptions {
  Index width = 32;
  Index min_t = 64;
  Index max_t = 4096;  // ladder doubles from min_t up to max_t
  int repeats = 5;
  double min_sample_s = 2e-3;  // calls per sample double until one sample takes this long
  std::uint64_t seed = 0;
};

struct BenchRecord {
  std::string impl;  // htm_scan | attention_baseline
  Index T = 0;
  double median_s = 0.0;  // per forward call
  double slope = 0.0;     // log-log fit over the whole ladder of this impl
  double peak_bytes = 0.0;
};

/// Geometric ladder min_t, 2 min_t, ... <= max_t. Throws on min_t < 1 or max_t < min_t.
std::vector<Index> bench_ladder(Index min_t, Index max_t);

/// Least-squares slope of log(y) against log(x). Throws unless there are at
/// least two distinct positive x and every y is positive.
double loglog_slope(std::span<const double> x, std::span<const double> y);

/// Largest simultaneously live activation footprint of one forward call,
/// batch 1, counted in bytes of doubles.
double htm_peak_bytes(Index T, Index width, Index state);
double attention_peak_bytes(Index T, Index width);

/// Times htm_scan (HTM block, one scan, expand 1, state 16) and
/// attention_baseline (pre-norm transformer block, one head) on [T,1,width]
/// inputs without gradient recording. Repeats run serially.
std::vector<BenchRecord> run_bench(const BenchOptions& options, std::ostream* log = nullptr);

/// True when the median time of each impl never drops as T doubles.
bool bench_monotone(std::span<const BenchRecord> records);

void write_bench_csv(const std::string& path, std::span<const BenchRecord> records);

}  // namespace mmamba

// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace nlroi {

struct BenchSize {
  std::size_t n = 0, d = 0, d_f = 0, d_g = 0, h = 0, w = 0;

  friend bool operator==(const BenchSize&, const BenchSize&) = default;
};

struct BenchRecord {
  BenchSize size;
  std::size_t reps = 0;
  double forward_ms = 0.0;   // median
  double backward_ms = 0.0;  // median
};

inline constexpr std::size_t kBenchWarmup = 2;

// Times nlroi_forward / nlroi_backward for each grid entry (d_mid = d_f, default flags),
// sequentially, after kBenchWarmup untimed runs. Records come back in grid order.
// Throws ConfigError if reps < 5, ResourceError if an entry cannot be allocated.
std::vector<BenchRecord> run_bench(std::span<const BenchSize> grid, std::size_t reps,
                                   std::uint64_t seed);

// Least-squares slope of log(forward_ms) against log(n). Needs >= 4 distinct n
// (InsufficientDataError otherwise).
double fit_scaling_exponent(std::span<const BenchRecord> records);

std::string bench_csv_header();
std::string bench_csv_row(const BenchRecord& r);
void write_bench_csv(std::ostream& os, std::span<const BenchRecord> records);

// The N sweep used for the quadratic-cost check: N in {64, ..., 1024}, small fixed sizes.
std::vector<BenchSize> default_scaling_grid();

}  // namespace nlroi

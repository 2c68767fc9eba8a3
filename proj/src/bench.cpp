// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlroi/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <new>
#include <set>

#include "nlroi/errors.hpp"
#include "nlroi/nlroi.hpp"
#include "nlroi/prng.hpp"

namespace nlroi {

namespace {

std::string describe(const BenchSize& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "(n=%zu, d=%zu, d_f=%zu, d_g=%zu, h=%zu, w=%zu)", s.n, s.d,
                s.d_f, s.d_g, s.h, s.w);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <typename F>
double time_ms(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

BenchRecord bench_one(const BenchSize& size, std::size_t reps, Prng& prng) {
  NlRoiConfig cfg;
  cfg.d = size.d;
  cfg.d_f = size.d_f;
  cfg.d_mid = size.d_f;
  cfg.d_g = size.d_g;
  cfg.h = size.h;
  cfg.w = size.w;
  cfg.validate();

  const NlRoiParams params = init_params(cfg, prng);
  Tensor x(cfg.input_shape(size.n));
  for (double& v : x.data()) v = prng.uniform(-1.0, 1.0);
  Tensor dout(cfg.output_shape(size.n));
  for (double& v : dout.data()) v = prng.uniform(-1.0, 1.0);

  const ForwardResult fwd = nlroi_forward(x, params, cfg);
  std::vector<double> fwd_ms, bwd_ms;
  for (std::size_t r = 0; r < kBenchWarmup + reps; ++r) {
    const double f = time_ms([&] { (void)nlroi_forward(x, params, cfg); });
    const double b = time_ms([&] { (void)nlroi_backward(fwd.cache, params, dout); });
    if (r >= kBenchWarmup) {
      fwd_ms.push_back(f);
      bwd_ms.push_back(b);
    }
  }
  return BenchRecord{size, reps, median(fwd_ms), median(bwd_ms)};
}

}  // namespace

std::vector<BenchRecord> run_bench(std::span<const BenchSize> grid, std::size_t reps,
                                   std::uint64_t seed) {
  if (reps < 5) throw ConfigError("bench needs at least 5 repetitions");
  Prng prng(seed);
  std::vector<BenchRecord> out;
  out.reserve(grid.size());
  for (const BenchSize& size : grid) {
    try {
      out.push_back(bench_one(size, reps, prng));
    } catch (const std::bad_alloc&) {
      throw ResourceError("out of memory benchmarking " + describe(size));
    } catch (const std::length_error&) {
      throw ResourceError("allocation too large benchmarking " + describe(size));
    }
  }
  return out;
}

double fit_scaling_exponent(std::span<const BenchRecord> records) {
  std::set<std::size_t> distinct;
  for (const auto& r : records) distinct.insert(r.size.n);
  if (distinct.size() < 4) {
    throw InsufficientDataError("scaling fit needs at least 4 distinct N, got " +
                                std::to_string(distinct.size()));
  }
  double sx = 0, sy = 0;
  for (const auto& r : records) {
    if (!(r.forward_ms > 0.0)) throw InsufficientDataError("non-positive forward time");
    sx += std::log(static_cast<double>(r.size.n));
    sy += std::log(r.forward_ms);
  }
  const double k = static_cast<double>(records.size());
  const double mx = sx / k, my = sy / k;
  double sxy = 0, sxx = 0;
  for (const auto& r : records) {
    const double dx = std::log(static_cast<double>(r.size.n)) - mx;
    sxy += dx * (std::log(r.forward_ms) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::string bench_csv_header() { return "n,d,d_f,d_g,h,w,reps,forward_ms,backward_ms"; }

std::string bench_csv_row(const BenchRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%zu,%zu,%zu,%.3f,%.3f", r.size.n, r.size.d,
                r.size.d_f, r.size.d_g, r.size.h, r.size.w, r.reps, r.forward_ms, r.backward_ms);
  return buf;
}

void write_bench_csv(std::ostream& os, std::span<const BenchRecord> records) {
  os << bench_csv_header() << '\n';
  for (const auto& r : records) os << bench_csv_row(r) << '\n';
}

std::vector<BenchSize> default_scaling_grid() {
  std::vector<BenchSize> grid;
  for (std::size_t n : {64, 128, 256, 512, 1024}) grid.push_back({n, 8, 2, 2, 2, 2});
  return grid;
}

}  // namespace nlroi

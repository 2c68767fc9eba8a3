// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

// Direct evaluation of y_i = (1 / C_i) * sum_j f(x_i, x_j) g(x_j), C_i = sum_j f(x_i, x_j),
// one RoI at a time with explicit loops. Nothing here calls into ops.cpp.

#include <algorithm>
#include <cmath>
#include <vector>

#include "nlroi/errors.hpp"
#include "nlroi/nlroi.hpp"

namespace nlroi {

namespace {

// 1x1 projection of RoI `n` to `cout` channels, flattened (c, y, x).
std::vector<double> project(const Tensor& x, std::size_t n, const Tensor& w, const Tensor& b,
                            const NlRoiConfig& cfg) {
  const std::size_t cout = w.dim(0), hw = cfg.h * cfg.w;
  std::vector<double> out(cout * hw);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t p = 0; p < hw; ++p) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cfg.d; ++c) acc += w[o * cfg.d + c] * x[(n * cfg.d + c) * hw + p];
      out[o * hw + p] = acc + b[o];
    }
  }
  return out;
}

// g(x_n): 1x1 conv, ReLU, zero-padded 3x3 conv, spatial mean.
std::vector<double> embed_one(const Tensor& x, std::size_t n, const NlRoiParams& params,
                              const NlRoiConfig& cfg) {
  const long h = static_cast<long>(cfg.h), w = static_cast<long>(cfg.w);
  std::vector<double> mid = project(x, n, params.w_g1, params.b_g1, cfg);
  for (double& v : mid) v = std::max(v, 0.0);
  std::vector<double> out(cfg.d_g);
  for (std::size_t o = 0; o < cfg.d_g; ++o) {
    double total = 0.0;
    for (long y = 0; y < h; ++y) {
      for (long xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cfg.d_mid; ++c) {
          for (long ky = 0; ky < 3; ++ky) {
            for (long kx = 0; kx < 3; ++kx) {
              const long sy = y + ky - 1, sx = xx + kx - 1;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              acc += params.w_g2.at({o, c, static_cast<std::size_t>(ky),
                                     static_cast<std::size_t>(kx)}) *
                     mid[(c * cfg.h + static_cast<std::size_t>(sy)) * cfg.w +
                         static_cast<std::size_t>(sx)];
            }
          }
        }
        total += acc + params.b_g2[o];
      }
    }
    out[o] = total / static_cast<double>(h * w);
  }
  return out;
}

}  // namespace

Tensor nlroi_reference(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg) {
  cfg.validate();
  if (x.rank() != 4 || x.dim(1) != cfg.d || x.dim(2) != cfg.h || x.dim(3) != cfg.w) {
    throw DimensionError("nlroi_reference: feature blob " + shape_str(x.shape()) +
                         " does not match config");
  }
  params.check(cfg);
  const std::size_t n = x.dim(0), hw = cfg.h * cfg.w;
  if (n == 1 && !cfg.attend_to_self) {
    throw DegenerateAttentionError("nlroi_reference: a single RoI cannot skip itself");
  }
  const bool skip_self = !cfg.attend_to_self && cfg.diagonal_mode == DiagonalMode::kMaskOut;
  const bool zero_self = !cfg.attend_to_self && cfg.diagonal_mode == DiagonalMode::kLiteralZero;
  const double scale = cfg.scale();

  std::vector<std::vector<double>> phi(n), psi(n), g(n);
  for (std::size_t j = 0; j < n; ++j) {
    phi[j] = project(x, j, params.w_phi, params.b_phi, cfg);
    psi[j] = project(x, j, params.w_psi, params.b_psi, cfg);
    g[j] = embed_one(x, j, params, cfg);
  }

  Tensor out(cfg.output_shape(n));
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -HUGE_VAL;
    for (std::size_t j = 0; j < n; ++j) {
      if (skip_self && j == i) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < phi[i].size(); ++k) dot += phi[i][k] * psi[j][k];
      score[j] = (zero_self && j == i) ? 0.0 : dot / scale;
      best = std::max(best, score[j]);
    }
    double norm = 0.0;  // C(X)_i, up to the common factor exp(-best)
    std::vector<double> y(cfg.d_g, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (skip_self && j == i) continue;
      const double f = std::exp(score[j] - best);
      norm += f;
      for (std::size_t c = 0; c < cfg.d_g; ++c) y[c] += f * g[j][c];
    }
    for (std::size_t c = 0; c < cfg.d; ++c)
      for (std::size_t p = 0; p < hw; ++p)
        out[(i * cfg.out_channels() + c) * hw + p] = x[(i * cfg.d + c) * hw + p];
    for (std::size_t c = 0; c < cfg.d_g; ++c)
      for (std::size_t p = 0; p < hw; ++p)
        out[(i * cfg.out_channels() + cfg.d + c) * hw + p] = y[c] / norm;
  }
  return out;
}

}  // namespace nlroi

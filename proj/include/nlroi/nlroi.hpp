// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

// Non-local RoI operator.
//
// Given N aligned RoI features X of shape (N, D, H, W), every RoI i receives
//
//   y_i = sum_j softmax_j( <phi(x_i), psi(x_j)> / scale ) * g(x_j)
//
// where phi and psi are 1x1 convolutions to D_f channels (flattened to D_f*H*W before the
// dot product) and g is 1x1 conv -> ReLU -> 3x3 conv -> global average pool, producing a
// D_g vector per RoI. y_i is tiled over H x W and appended after the input channels, so the
// output has shape (N, D + D_g, H, W).

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nlroi/prng.hpp"
#include "nlroi/tensor.hpp"

namespace nlroi {

enum class Scaling {
  kPerChannel,   // sqrt(D_f)
  kFullFlatten,  // sqrt(D_f * H * W)
};

// How attend_to_self = false is realized. kMaskOut removes the diagonal from the softmax
// (zero weight, rows renormalized). kLiteralZero overwrites diagonal scores with 0 before
// an unmasked softmax; debugging aid only.
enum class DiagonalMode { kMaskOut, kLiteralZero };

struct NlRoiConfig {
  std::size_t d = 16;
  std::size_t d_f = 4;
  std::size_t d_mid = 4;
  std::size_t d_g = 4;
  std::size_t h = 3;
  std::size_t w = 3;
  bool attend_to_self = true;
  Scaling scaling = Scaling::kPerChannel;
  DiagonalMode diagonal_mode = DiagonalMode::kMaskOut;

  // Bottleneck defaults: D_f = D_g = D / 4 (at least 1), D_mid = D_f.
  static NlRoiConfig with_defaults(std::size_t d, std::size_t h, std::size_t w);

  // Throws ConfigError. d_g may be 0 (nothing appended); every other size must be >= 1 and
  // d_f, d_mid must not exceed d.
  void validate() const;

  double scale() const;
  std::size_t flat_len() const { return d_f * h * w; }
  std::size_t out_channels() const { return d + d_g; }
  Shape input_shape(std::size_t n) const { return {n, d, h, w}; }
  Shape output_shape(std::size_t n) const { return {n, d + d_g, h, w}; }

  friend bool operator==(const NlRoiConfig&, const NlRoiConfig&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct NlRoiParams {
  Tensor w_phi;  // (D_f, D)
  Tensor b_phi;  // (D_f)
  Tensor w_psi;  // (D_f, D)
  Tensor b_psi;  // (D_f)
  Tensor w_g1;   // (D_mid, D)
  Tensor b_g1;   // (D_mid)
  Tensor w_g2;   // (D_g, D_mid, 3, 3)
  Tensor b_g2;   // (D_g)

  static NlRoiParams zeros(const NlRoiConfig& cfg);

  // Throws DimensionError if any tensor disagrees with `cfg`.
  void check(const NlRoiConfig& cfg) const;

  // Fixed order: w_phi, b_phi, w_psi, b_psi, w_g1, b_g1, w_g2, b_g2.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  static const std::vector<std::string>& names();

  std::vector<NamedTensor> to_named(const std::string& prefix = "") const;
  // Picks `prefix + name` for each of the eight tensors out of `named`; checks shapes.
  static NlRoiParams from_named(const std::vector<NamedTensor>& named, const NlRoiConfig& cfg,
                                const std::string& prefix = "");

  friend bool operator==(const NlRoiParams&, const NlRoiParams&) = default;
};

// Uniform in [-s, s], s = sqrt(6 / fan_in), fan_in = input channels x kernel area. Biases 0.
NlRoiParams init_params(const NlRoiConfig& cfg, Prng& prng);

struct ForwardCache {
  NlRoiConfig config;
  Tensor x;           // (N, D, H, W)
  Tensor phi_flat;    // (N, D_f*H*W)
  Tensor psi_flat;    // (N, D_f*H*W); without b_psi unless the diagonal is literal-zero
  Tensor scores;      // (N, N), pre-softmax; equals relation_scores up to a per-row constant
  Tensor attention;   // (N, N), row-stochastic
  Tensor g_pre;       // (N, D_mid, H, W), before ReLU
  Tensor g_act;       // (N, D_mid, H, W), after ReLU
  Tensor embedded;    // (N, D_g), g(x_j) per row
  Tensor aggregated;  // (N, D_g), y_i per row
};

struct ForwardResult {
  Tensor output;  // (N, D + D_g, H, W)
  ForwardCache cache;
};

struct NlRoiGrads {
  Tensor dx;
  NlRoiParams dparams;
};

// <flatten(phi(x_i)), flatten(psi(x_j))> before division by the scale.
Tensor unscaled_scores(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg);

// S[i, j]: score of target RoI i attending to RoI j.
Tensor relation_scores(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg);

Tensor attention_weights(const Tensor& scores, bool attend_to_self,
                         DiagonalMode mode = DiagonalMode::kMaskOut);

// (N, D_g): row n is g(x_n).
Tensor embed_g(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg);

// Y = A * G with correctly rounded sums over j, so relabeling RoIs relabels Y bit for bit.
Tensor aggregate(const Tensor& attention, const Tensor& embedded);

ForwardResult nlroi_forward(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg);

// Plain nested-loop evaluation of the weighted sum with its explicit normalizer; shares no
// code with nlroi_forward. Used as the oracle.
Tensor nlroi_reference(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg);

NlRoiGrads nlroi_backward(const ForwardCache& cache, const NlRoiParams& params,
                          const Tensor& dout);

}  // namespace nlroi

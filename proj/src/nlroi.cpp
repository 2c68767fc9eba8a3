// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlroi/nlroi.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "nlroi/errors.hpp"
#include "nlroi/ops.hpp"

namespace nlroi {

namespace {

void check_input(const Tensor& x, const NlRoiConfig& cfg) {
  if (x.rank() != 4 || x.dim(1) != cfg.d || x.dim(2) != cfg.h || x.dim(3) != cfg.w) {
    throw DimensionError("feature blob " + shape_str(x.shape()) + " does not match config (N, " +
                         std::to_string(cfg.d) + ", " + std::to_string(cfg.h) + ", " +
                         std::to_string(cfg.w) + ")");
  }
}

void check_attendable(std::size_t n, const NlRoiConfig& cfg) {
  if (n == 1 && !cfg.attend_to_self) {
    throw DegenerateAttentionError(
        "a single RoI cannot be aggregated when attending to itself is disabled");
  }
}

// psi's bias shifts every score in row i by the same amount, <phi_i, b_psi>, which the row
// softmax cancels. Leaving it out keeps the attention bitwise independent of b_psi. Only a
// literal-zero diagonal breaks the cancellation.
bool psi_bias_cancels(const NlRoiConfig& cfg) {
  return cfg.attend_to_self || cfg.diagonal_mode == DiagonalMode::kMaskOut;
}

Tensor flatten_rows(Tensor t) {
  const std::size_t n = t.dim(0);
  const std::size_t len = n == 0 ? 0 : t.size() / n;
  return std::move(t).reshaped({n, len});
}

Tensor scaled_scores(const Tensor& phi_flat, const Tensor& psi_flat, double scale) {
  Tensor s = matmul(phi_flat, transpose(psi_flat));
  for (double& v : s.data()) v /= scale;
  return s;
}

}  // namespace

// --- config / params -------------------------------------------------------------------

NlRoiConfig NlRoiConfig::with_defaults(std::size_t d, std::size_t h, std::size_t w) {
  NlRoiConfig cfg;
  cfg.d = d;
  cfg.d_f = std::max<std::size_t>(1, d / 4);
  cfg.d_mid = cfg.d_f;
  cfg.d_g = std::max<std::size_t>(1, d / 4);
  cfg.h = h;
  cfg.w = w;
  return cfg;
}

void NlRoiConfig::validate() const {
  if (d < 1 || d_f < 1 || d_mid < 1 || h < 1 || w < 1) {
    throw ConfigError("channel and spatial sizes must be >= 1");
  }
  if (d_f > d) throw ConfigError("d_f must not exceed d");
  if (d_mid > d) throw ConfigError("d_mid must not exceed d");
}

double NlRoiConfig::scale() const {
  return scaling == Scaling::kPerChannel ? std::sqrt(static_cast<double>(d_f))
                                         : std::sqrt(static_cast<double>(d_f * h * w));
}

NlRoiParams NlRoiParams::zeros(const NlRoiConfig& cfg) {
  return NlRoiParams{Tensor({cfg.d_f, cfg.d}),    Tensor({cfg.d_f}),
                     Tensor({cfg.d_f, cfg.d}),    Tensor({cfg.d_f}),
                     Tensor({cfg.d_mid, cfg.d}),  Tensor({cfg.d_mid}),
                     Tensor({cfg.d_g, cfg.d_mid, 3, 3}), Tensor({cfg.d_g})};
}

void NlRoiParams::check(const NlRoiConfig& cfg) const {
  const NlRoiParams ref = zeros(cfg);
  const auto mine = tensors();
  const auto want = ref.tensors();
  for (std::size_t i = 0; i < mine.size(); ++i) {
    expect_shape(*mine[i], want[i]->shape(), names()[i].c_str());
  }
}

std::vector<Tensor*> NlRoiParams::tensors() {
  return {&w_phi, &b_phi, &w_psi, &b_psi, &w_g1, &b_g1, &w_g2, &b_g2};
}

std::vector<const Tensor*> NlRoiParams::tensors() const {
  return {&w_phi, &b_phi, &w_psi, &b_psi, &w_g1, &b_g1, &w_g2, &b_g2};
}

const std::vector<std::string>& NlRoiParams::names() {
  static const std::vector<std::string> kNames = {"w_phi", "b_phi", "w_psi", "b_psi",
                                                  "w_g1",  "b_g1",  "w_g2",  "b_g2"};
  return kNames;
}

std::vector<NamedTensor> NlRoiParams::to_named(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  const auto ts = tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) out.push_back({prefix + names()[i], *ts[i]});
  return out;
}

NlRoiParams NlRoiParams::from_named(const std::vector<NamedTensor>& named,
                                    const NlRoiConfig& cfg, const std::string& prefix) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& nt : named) by_name[nt.name] = &nt.tensor;
  NlRoiParams p;
  auto slots = p.tensors();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto it = by_name.find(prefix + names()[i]);
    if (it == by_name.end()) throw FormatError("missing tensor '" + prefix + names()[i] + "'");
    *slots[i] = *it->second;
  }
  p.check(cfg);
  return p;
}

NlRoiParams init_params(const NlRoiConfig& cfg, Prng& prng) {
  cfg.validate();
  NlRoiParams p = NlRoiParams::zeros(cfg);
  auto fill = [&prng](Tensor& t, std::size_t fan_in) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = prng.uniform(-s, s);
  };
  fill(p.w_phi, cfg.d);
  fill(p.w_psi, cfg.d);
  fill(p.w_g1, cfg.d);
  fill(p.w_g2, cfg.d_mid * 9);
  return p;
}

// --- operator stages -------------------------------------------------------------------

Tensor unscaled_scores(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg) {
  check_input(x, cfg);
  params.check(cfg);
  const Tensor phi = flatten_rows(conv2d_1x1(x, params.w_phi, params.b_phi));
  const Tensor psi = flatten_rows(conv2d_1x1(x, params.w_psi, params.b_psi));
  return matmul(phi, transpose(psi));
}

Tensor relation_scores(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg) {
  Tensor s = unscaled_scores(x, params, cfg);
  const double scale = cfg.scale();
  for (double& v : s.data()) v /= scale;
  return s;
}

Tensor attention_weights(const Tensor& scores, bool attend_to_self, DiagonalMode mode) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw DimensionError("attention_weights: score matrix must be square, got " +
                         shape_str(scores.shape()));
  }
  if (!attend_to_self && scores.dim(0) == 1) {
    throw DegenerateAttentionError(
        "attention_weights: a single RoI has nothing to attend to once its diagonal is masked");
  }
  if (attend_to_self) return softmax_rows(scores, false);
  if (mode == DiagonalMode::kMaskOut) return softmax_rows(scores, true);
  Tensor zeroed = scores;
  const std::size_t n = scores.dim(0);
  for (std::size_t i = 0; i < n; ++i) zeroed[i * n + i] = 0.0;
  return softmax_rows(zeroed, false);
}

Tensor embed_g(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg) {
  check_input(x, cfg);
  params.check(cfg);
  return global_avg_pool(
      conv2d_3x3_same(relu(conv2d_1x1(x, params.w_g1, params.b_g1)), params.w_g2, params.b_g2));
}

Tensor aggregate(const Tensor& attention, const Tensor& embedded) {
  if (attention.rank() != 2 || embedded.rank() != 2 || attention.dim(1) != embedded.dim(0)) {
    throw DimensionError("aggregate: incompatible shapes " + shape_str(attention.shape()) +
                         " and " + shape_str(embedded.shape()));
  }
  const std::size_t n = attention.dim(0), m = attention.dim(1), c = embedded.dim(1);
  Tensor y({n, c});
  ExactAccumulator acc;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      acc.clear();
      for (std::size_t j = 0; j < m; ++j) acc.add(attention[i * m + j] * embedded[j * c + k]);
      y[i * c + k] = acc.result();
    }
  }
  return y;
}

ForwardResult nlroi_forward(const Tensor& x, const NlRoiParams& params, const NlRoiConfig& cfg) {
  cfg.validate();
  check_input(x, cfg);
  params.check(cfg);
  const std::size_t n = x.dim(0);
  check_attendable(n, cfg);

  ForwardResult r;
  ForwardCache& c = r.cache;
  c.config = cfg;
  c.x = x;
  c.phi_flat = flatten_rows(conv2d_1x1(x, params.w_phi, params.b_phi));
  c.psi_flat = flatten_rows(conv2d_1x1(
      x, params.w_psi, psi_bias_cancels(cfg) ? Tensor({cfg.d_f}) : params.b_psi));
  c.scores = scaled_scores(c.phi_flat, c.psi_flat, cfg.scale());
  c.attention = n == 0 ? Tensor(Shape{0, 0}) : attention_weights(c.scores, cfg.attend_to_self,
                                                            cfg.diagonal_mode);
  c.g_pre = conv2d_1x1(x, params.w_g1, params.b_g1);
  c.g_act = relu(c.g_pre);
  c.embedded = global_avg_pool(conv2d_3x3_same(c.g_act, params.w_g2, params.b_g2));
  c.aggregated = aggregate(c.attention, c.embedded);
  r.output = concat_channels(x, tile_spatial(c.aggregated, cfg.h, cfg.w));
  return r;
}

NlRoiGrads nlroi_backward(const ForwardCache& c, const NlRoiParams& params, const Tensor& dout) {
  const NlRoiConfig& cfg = c.config;
  const std::size_t n = c.x.dim(0);
  expect_shape(dout, cfg.output_shape(n), "nlroi_backward upstream");
  params.check(cfg);

  NlRoiGrads g{Tensor(c.x.shape()), NlRoiParams::zeros(cfg)};
  if (n == 0) return g;

  auto split = concat_channels_vjp(cfg.d, dout);
  const Tensor d_agg = tile_spatial_vjp(split.dt);  // (N, D_g)

  // Y = A G
  auto agg = matmul_vjp(c.attention, c.embedded, d_agg);
  Tensor d_scores = softmax_rows_vjp(c.attention, agg.da);
  if (!cfg.attend_to_self && cfg.diagonal_mode == DiagonalMode::kLiteralZero) {
    for (std::size_t i = 0; i < n; ++i) d_scores[i * n + i] = 0.0;
  }
  const double scale = cfg.scale();
  for (double& v : d_scores.data()) v /= scale;

  // S = Phi Psi^T
  const Tensor d_phi = matmul(d_scores, c.psi_flat);
  const Tensor d_psi = matmul(transpose(d_scores), c.phi_flat);
  const Shape proj_shape{n, cfg.d_f, cfg.h, cfg.w};
  auto phi_g = conv2d_1x1_vjp(c.x, params.w_phi, d_phi.reshaped(proj_shape));
  auto psi_g = conv2d_1x1_vjp(c.x, params.w_psi, d_psi.reshaped(proj_shape));

  // g branch
  const Tensor d_conv2 =
      global_avg_pool_vjp({n, cfg.d_g, cfg.h, cfg.w}, agg.db);
  auto g2 = conv2d_3x3_same_vjp(c.g_act, params.w_g2, d_conv2);
  const Tensor d_pre = relu_vjp(c.g_pre, g2.dx);
  auto g1 = conv2d_1x1_vjp(c.x, params.w_g1, d_pre);

  for (std::size_t i = 0; i < g.dx.size(); ++i) {
    g.dx[i] = split.dx[i] + phi_g.dx[i] + psi_g.dx[i] + g1.dx[i];
  }
  g.dparams.w_phi = std::move(phi_g.dw);
  g.dparams.b_phi = std::move(phi_g.db);
  g.dparams.w_psi = std::move(psi_g.dw);
  g.dparams.b_psi = psi_bias_cancels(cfg) ? Tensor({cfg.d_f}) : std::move(psi_g.db);
  g.dparams.w_g1 = std::move(g1.dw);
  g.dparams.b_g1 = std::move(g1.db);
  g.dparams.w_g2 = std::move(g2.dw);
  g.dparams.b_g2 = std::move(g2.db);
  return g;
}

}  // namespace nlroi

// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlroi/oracle.hpp"

#include "nlroi/prng.hpp"

namespace nlroi {

namespace {

std::size_t draw(Prng& prng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(prng.below(hi - lo + 1));
}

}  // namespace

OracleCase make_oracle_case(const NlRoiConfig& cfg, std::size_t n, std::uint64_t seed) {
  cfg.validate();
  Prng prng(derive_seed(seed, 1));
  OracleCase c{cfg, n, Tensor(cfg.input_shape(n)), init_params(cfg, prng)};
  for (Tensor* b : {&c.params.b_phi, &c.params.b_psi, &c.params.b_g1, &c.params.b_g2})
    for (double& v : b->data()) v = prng.uniform(-0.5, 0.5);
  for (double& v : c.x.data()) v = prng.normal();
  return c;
}

OracleCase random_oracle_case(std::uint64_t seed) {
  Prng prng(derive_seed(seed, 0));
  NlRoiConfig cfg;
  const std::size_t n = draw(prng, 1, 16);
  cfg.d = draw(prng, 4, 16);
  cfg.h = draw(prng, 1, 5);
  cfg.w = draw(prng, 1, 5);
  cfg.d_f = draw(prng, 1, cfg.d);
  cfg.d_mid = draw(prng, 1, cfg.d);
  cfg.d_g = draw(prng, 1, 8);
  cfg.scaling = prng.below(2) ? Scaling::kFullFlatten : Scaling::kPerChannel;
  const bool masked = prng.below(2) == 1;
  cfg.attend_to_self = !(masked && n >= 2);
  return make_oracle_case(cfg, n, seed);
}

double oracle_diff(const OracleCase& c) {
  const Tensor fast = nlroi_forward(c.x, c.params, c.config).output;
  const Tensor slow = nlroi_reference(c.x, c.params, c.config);
  return max_abs_diff(fast, slow);
}

}  // namespace nlroi

// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "nlroi/nlroi.hpp"
#include "nlroi/tensor.hpp"

namespace nlroi {

struct OracleCase {
  NlRoiConfig config;
  std::size_t n = 0;
  Tensor x;
  NlRoiParams params;
};

// Seeded input X ~ N(0, 1) and parameters with nonzero biases for a fixed configuration.
OracleCase make_oracle_case(const NlRoiConfig& cfg, std::size_t n, std::uint64_t seed);

// Draws the configuration too: N in [1, 16], D in [4, 16], H, W in [1, 5], D_f, D_mid in
// [1, D], D_g in [1, 8], either scaling mode, and masking only when N >= 2.
OracleCase random_oracle_case(std::uint64_t seed);

// max |nlroi_forward - nlroi_reference| over the output.
double oracle_diff(const OracleCase& c);

}  // namespace nlroi

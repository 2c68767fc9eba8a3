// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "nlroi/nlroi.hpp"
#include "nlroi/toy_task.hpp"

namespace nlroi {

// Typed contents of a `key = value` run configuration. Missing keys keep these defaults;
// d_f, d_g and d_mid default to D/4, D/4 and d_f when only d is given.
struct RunConfig {
  std::size_t n = 8;
  NlRoiConfig op;  // d=16, d_f=d_mid=d_g=4, h=w=3, attend_to_self, per_channel
  std::size_t k_classes = 4;
  std::uint64_t seed = 0;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  long steps = 3000;
  std::size_t scenes_per_step = 8;

  ToyTask task() const;
  TrainHyper hyper() const;
};

// `#` starts a comment, blank lines are skipped, whitespace around `=` is ignored.
// Booleans are exactly `true`/`false`; scaling is `per_channel`/`full_flatten`.
// Unknown or repeated keys, malformed lines and out-of-range values throw ParseError.
RunConfig parse_config(std::string_view text);

RunConfig load_config(const std::string& path);

}  // namespace nlroi

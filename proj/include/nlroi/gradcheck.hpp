// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nlroi/nlroi.hpp"
#include "nlroi/ops.hpp"
#include "nlroi/tensor.hpp"

namespace nlroi {

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-6;

using ScalarLoss = std::function<double(const Tensor&)>;

// Central differences (L(x + h e_k) - L(x - h e_k)) / 2h for every coordinate k.
// Throws NumericalError if the loss is not finite at a probe point.
Tensor finite_diff(const ScalarLoss& loss, const Tensor& x, double step);

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

struct TensorCheck {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradReport {
  std::vector<TensorCheck> tensors;
  std::vector<double> projection;  // the random loss direction, for the record
  double tolerance = 0.0;
  bool pass = false;

  double max_rel_err() const;
  // Human-readable table followed by the `GRADCHECK pass=... max_rel_err=...` line.
  void print(std::ostream& os) const;
  std::string summary_line() const;
};

TensorCheck compare_gradients(const std::string& name, const Tensor& analytic,
                              const Tensor& numeric);

// Random inputs for `op` (shapes up to `max_shape`-sized), loss = <r, op(inputs)> with a
// seeded projection r; checks vjp against finite differences for every input.
GradReport check_op_gradients(OpId op, std::uint64_t seed, double step = kGradCheckStep,
                              double tol = kGradCheckTolerance);

// Random X (n RoIs) and params from `seed`; loss = <r, nlroi_forward(X)>; checks dX and
// all eight parameter gradients.
GradReport check_all_gradients(const NlRoiConfig& cfg, std::size_t n, std::uint64_t seed,
                               double step = kGradCheckStep, double tol = kGradCheckTolerance);

}  // namespace nlroi

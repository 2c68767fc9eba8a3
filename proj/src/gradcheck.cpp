// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlroi/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "nlroi/errors.hpp"
#include "nlroi/prng.hpp"

namespace nlroi {

namespace {

Tensor random_tensor(Shape shape, Prng& prng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = prng.uniform(lo, hi);
  return t;
}

std::vector<double> random_projection(std::size_t n, Prng& prng) {
  std::vector<double> r(n);
  for (double& v : r) v = prng.normal();
  return r;
}

// <out, r>, correctly rounded: each product is split into its rounded value and exact
// residual before summation, so the loss adds no rounding noise of its own.
double project(const Tensor& out, std::span<const double> r) {
  ExactAccumulator acc;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = out[i] * r[i];
    acc.add(p);
    acc.add(std::fma(out[i], r[i], -p));
  }
  return acc.result();
}

std::string fmt_double(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

Tensor finite_diff(const ScalarLoss& loss, const Tensor& x, double step) {
  if (!(step > 0.0)) throw NumericalError("finite_diff: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + step;
    const double up = loss(probe);
    probe[k] = orig - step;
    const double down = loss(probe);
    probe[k] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff: non-finite loss probing coordinate " +
                           std::to_string(k));
    }
    grad[k] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

TensorCheck compare_gradients(const std::string& name, const Tensor& analytic,
                              const Tensor& numeric) {
  expect_shape(numeric, analytic.shape(), "compare_gradients");
  TensorCheck c;
  c.name = name;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double e = relative_error(analytic[i], numeric[i]);
    if (i == 0 || e > c.max_rel_err) {
      c.max_rel_err = e;
      c.worst_index = i;
      c.analytic_at_worst = analytic[i];
      c.numeric_at_worst = numeric[i];
    }
  }
  return c;
}

double GradReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& t : tensors) m = std::max(m, t.max_rel_err);
  return m;
}

std::string GradReport::summary_line() const {
  return std::string("GRADCHECK pass=") + (pass ? "true" : "false") +
         " max_rel_err=" + fmt_double("%.3e", max_rel_err());
}

void GradReport::print(std::ostream& os) const {
  os << "tensor      max_rel_err  worst_idx  analytic          numeric\n";
  for (const auto& t : tensors) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s  %.3e    %-9zu  %+.9e  %+.9e\n", t.name.c_str(),
                  t.max_rel_err, t.worst_index, t.analytic_at_worst, t.numeric_at_worst);
    os << line;
  }
  os << summary_line() << '\n';
}

namespace {

GradReport finish(std::vector<TensorCheck> checks, std::vector<double> projection, double tol) {
  GradReport r;
  r.tensors = std::move(checks);
  r.projection = std::move(projection);
  r.tolerance = tol;
  r.pass = std::all_of(r.tensors.begin(), r.tensors.end(),
                       [tol](const TensorCheck& t) { return t.max_rel_err < tol; });
  return r;
}

}  // namespace

GradReport check_op_gradients(OpId op, std::uint64_t seed, double step, double tol) {
  Prng prng(seed);
  // Sizes drawn per seed, bounded by (3, 4, 5, 5).
  auto pick = [&prng](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(prng.below(hi - lo + 1));
  };
  const std::size_t n = pick(1, 3), c = pick(1, 4), h = pick(1, 5), w = pick(1, 5);

  std::vector<Tensor> inputs;
  std::vector<std::string> names;
  OpOptions opts;
  switch (op) {
    case OpId::kMatmul: {
      const std::size_t m = pick(1, 5), k = pick(1, 5), p = pick(1, 5);
      inputs = {random_tensor({m, k}, prng), random_tensor({k, p}, prng)};
      names = {"A", "B"};
      break;
    }
    case OpId::kConv2d1x1: {
      const std::size_t cout = pick(1, 4);
      inputs = {random_tensor({n, c, h, w}, prng), random_tensor({cout, c}, prng),
                random_tensor({cout}, prng)};
      names = {"X", "W", "b"};
      break;
    }
    case OpId::kConv2d3x3: {
      const std::size_t cout = pick(1, 4);
      inputs = {random_tensor({n, c, h, w}, prng), random_tensor({cout, c, 3, 3}, prng),
                random_tensor({cout}, prng)};
      names = {"X", "W", "b"};
      break;
    }
    case OpId::kSoftmaxRows: {
      const std::size_t m = pick(2, 5);
      opts.mask_diagonal = (seed % 2) == 1;
      inputs = {random_tensor({m, m}, prng, -3.0, 3.0)};
      names = {"S"};
      break;
    }
    case OpId::kRelu:
    case OpId::kGlobalAvgPool:
      inputs = {random_tensor({n, c, h, w}, prng)};
      names = {"X"};
      break;
    case OpId::kTileSpatial:
      opts.tile_h = h;
      opts.tile_w = w;
      inputs = {random_tensor({n, c}, prng)};
      names = {"V"};
      break;
    case OpId::kConcatChannels:
      inputs = {random_tensor({n, c, h, w}, prng), random_tensor({n, pick(1, 4), h, w}, prng)};
      names = {"X", "T"};
      break;
  }

  const Tensor out = apply_op(op, inputs, opts);
  std::vector<double> r = random_projection(out.size(), prng);
  const auto grads = vjp(op, inputs, Tensor(out.shape(), r), opts);

  std::vector<TensorCheck> checks;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<Tensor> probe_inputs = inputs;
    auto loss = [&](const Tensor& v) {
      probe_inputs[k] = v;
      return project(apply_op(op, probe_inputs, opts), r);
    };
    checks.push_back(compare_gradients(std::string(op_name(op)) + "." + names[k], grads[k],
                                       finite_diff(loss, inputs[k], step)));
  }
  return finish(std::move(checks), std::move(r), tol);
}

GradReport check_all_gradients(const NlRoiConfig& cfg, std::size_t n, std::uint64_t seed,
                               double step, double tol) {
  cfg.validate();
  Prng prng(seed);
  NlRoiParams params = init_params(cfg, prng);
  // Nonzero biases so their gradients are probed away from the initial point.
  for (Tensor* b : {&params.b_phi, &params.b_psi, &params.b_g1, &params.b_g2})
    for (double& v : b->data()) v = prng.uniform(-0.5, 0.5);
  const Tensor x = random_tensor(cfg.input_shape(n), prng);

  const ForwardResult fwd = nlroi_forward(x, params, cfg);
  std::vector<double> r = random_projection(fwd.output.size(), prng);
  const NlRoiGrads grads = nlroi_backward(fwd.cache, params, Tensor(fwd.output.shape(), r));

  std::vector<TensorCheck> checks;
  checks.push_back(compare_gradients(
      "X", grads.dx,
      finite_diff([&](const Tensor& v) { return project(nlroi_forward(v, params, cfg).output, r); },
                  x, step)));

  const auto names = NlRoiParams::names();
  const auto analytic = grads.dparams.tensors();
  for (std::size_t k = 0; k < names.size(); ++k) {
    NlRoiParams probe = params;
    Tensor* slot = probe.tensors()[k];
    auto loss = [&](const Tensor& v) {
      *slot = v;
      return project(nlroi_forward(x, probe, cfg).output, r);
    };
    checks.push_back(
        compare_gradients(names[k], *analytic[k], finite_diff(loss, *params.tensors()[k], step)));
  }
  return finish(std::move(checks), std::move(r), tol);
}

}  // namespace nlroi

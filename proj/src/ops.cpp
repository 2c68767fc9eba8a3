// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlroi/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nlroi/errors.hpp"

namespace nlroi {

namespace {

void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
  }
}

void expect_count(std::span<const Tensor> v, std::size_t n, OpId op) {
  if (v.size() != n) {
    throw DimensionError(std::string(op_name(op)) + ": expected " + std::to_string(n) +
                         " saved tensors, got " + std::to_string(v.size()));
  }
}

}  // namespace

// --- exact summation ---------------------------------------------------------------------

void ExactAccumulator::add(double x) {
  std::size_t i = 0;
  for (double y : partials_) {
    if (std::abs(x) < std::abs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials_[i++] = lo;
    x = hi;
  }
  partials_.resize(i);
  partials_.push_back(x);
}

double ExactAccumulator::result() const {
  std::size_t n = partials_.size();
  if (n == 0) return 0.0;
  double hi = partials_[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials_[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  // Round-half-even correction when the remaining partials push past a tie.
  if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

double exact_sum(std::span<const double> values) {
  ExactAccumulator acc;
  for (double v : values) acc.add(v);
  return acc.result();
}

// --- forward ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  auto cd = c.data();
  auto ad = a.data();
  auto bd = b.data();
  // i-p-j order: each c[i,j] still accumulates p = 0, 1, ... in sequence.
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = cd.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  expect_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

Tensor conv2d_1x1(const Tensor& x, const Tensor& w, const Tensor& b) {
  expect_rank(x, 4, "conv2d_1x1 input");
  expect_rank(w, 2, "conv2d_1x1 weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::size_t cout = w.dim(0);
  if (w.dim(1) != cin) {
    throw DimensionError("conv2d_1x1: weight " + shape_str(w.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  expect_shape(b, {cout}, "conv2d_1x1 bias");
  Tensor out({n, cout, x.dim(2), x.dim(3)});
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* dst = out.data().data() + (ni * cout + o) * hw;
      for (std::size_t c = 0; c < cin; ++c) {
        const double wc = w[o * cin + c];
        const double* src = x.data().data() + (ni * cin + c) * hw;
        for (std::size_t p = 0; p < hw; ++p) dst[p] += wc * src[p];
      }
      for (std::size_t p = 0; p < hw; ++p) dst[p] += b[o];
    }
  }
  return out;
}

Tensor conv2d_3x3_same(const Tensor& x, const Tensor& w, const Tensor& b) {
  expect_rank(x, 4, "conv2d_3x3 input");
  expect_rank(w, 4, "conv2d_3x3 weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0);
  if (w.dim(1) != cin || w.dim(2) != 3 || w.dim(3) != 3) {
    throw DimensionError("conv2d_3x3: weight " + shape_str(w.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  expect_shape(b, {cout}, "conv2d_3x3 bias");
  if (h == 0 || wd == 0) throw DimensionError("conv2d_3x3: empty spatial size");
  Tensor out({n, cout, h, wd});
  const std::size_t hw = h * wd;
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* dst = out.data().data() + (ni * cout + o) * hw;
      for (std::size_t c = 0; c < cin; ++c) {
        const double* src = x.data().data() + (ni * cin + c) * hw;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const double wk = w[((o * cin + c) * 3 + ky) * 3 + kx];
            // Output rows/cols whose tap (y + ky - 1, x + kx - 1) is in bounds.
            const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? h - 1 : h;
            const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? wd - 1 : wd;
            for (std::size_t y = y0; y < y1; ++y) {
              const double* srow = src + (y + ky - 1) * wd;
              double* drow = dst + y * wd;
              for (std::size_t xx = x0; xx < x1; ++xx) drow[xx] += wk * srow[xx + kx - 1];
            }
          }
        }
      }
      for (std::size_t p = 0; p < hw; ++p) dst[p] += b[o];
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& s, bool mask_diagonal) {
  expect_rank(s, 2, "softmax_rows");
  const std::size_t rows = s.dim(0), cols = s.dim(1);
  if (mask_diagonal && rows != cols) {
    throw DimensionError("softmax_rows: diagonal mask needs a square matrix, got " +
                         shape_str(s.shape()));
  }
  if (rows == 0) return Tensor(s.shape());
  if (cols == 0 || (mask_diagonal && cols < 2)) {
    throw DegenerateAttentionError("softmax_rows: a row of shape " + shape_str(s.shape()) +
                                   " has no unmasked entries");
  }
  Tensor out(s.shape());
  ExactAccumulator acc;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* src = s.data().data() + i * cols;
    double* dst = out.data().data() + i * cols;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j)
      if (!(mask_diagonal && j == i)) m = std::max(m, src[j]);
    acc.clear();
    for (std::size_t j = 0; j < cols; ++j) {
      if (mask_diagonal && j == i) continue;
      dst[j] = std::exp(src[j] - m);
      acc.add(dst[j]);
    }
    const double z = acc.result();
    for (std::size_t j = 0; j < cols; ++j) dst[j] /= z;
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  expect_rank(x, 4, "global_avg_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (hw == 0) throw DimensionError("global_avg_pool: zero spatial size " + shape_str(x.shape()));
  Tensor out({n, c});
  // Mean taken about the first element, so a constant map averages to itself exactly.
  for (std::size_t i = 0; i < n * c; ++i) {
    const double pivot = x[i * hw];
    double acc = 0.0;
    for (std::size_t p = 0; p < hw; ++p) acc += x[i * hw + p] - pivot;
    out[i] = pivot + acc / static_cast<double>(hw);
  }
  return out;
}

Tensor tile_spatial(const Tensor& v, std::size_t h, std::size_t w) {
  expect_rank(v, 2, "tile_spatial");
  if (h == 0 || w == 0) throw DimensionError("tile_spatial: spatial size must be >= 1");
  const std::size_t hw = h * w;
  Tensor out({v.dim(0), v.dim(1), h, w});
  for (std::size_t i = 0; i < v.size(); ++i)
    std::fill_n(out.data().data() + i * hw, hw, v[i]);
  return out;
}

Tensor concat_channels(const Tensor& x, const Tensor& t) {
  expect_rank(x, 4, "concat_channels input");
  expect_rank(t, 4, "concat_channels appended");
  if (x.dim(0) != t.dim(0) || x.dim(2) != t.dim(2) || x.dim(3) != t.dim(3)) {
    throw DimensionError("concat_channels: N/H/W mismatch between " + shape_str(x.shape()) +
                         " and " + shape_str(t.shape()));
  }
  const std::size_t n = x.dim(0), dx = x.dim(1), dt = t.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out({n, dx + dt, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = out.data().data() + i * (dx + dt) * hw;
    std::copy_n(x.data().data() + i * dx * hw, dx * hw, dst);
    std::copy_n(t.data().data() + i * dt * hw, dt * hw, dst + dx * hw);
  }
  return out;
}

// --- vector-Jacobian products -----------------------------------------------------------

MatmulGrads matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& dc) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul_vjp: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  expect_shape(dc, {a.dim(0), b.dim(1)}, "matmul_vjp upstream");
  return {matmul(dc, transpose(b)), matmul(transpose(a), dc)};
}

ConvGrads conv2d_1x1_vjp(const Tensor& x, const Tensor& w, const Tensor& dout) {
  expect_rank(x, 4, "conv2d_1x1_vjp input");
  expect_rank(w, 2, "conv2d_1x1_vjp weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::size_t cout = w.dim(0);
  if (w.dim(1) != cin) throw DimensionError("conv2d_1x1_vjp: channel mismatch");
  expect_shape(dout, {n, cout, x.dim(2), x.dim(3)}, "conv2d_1x1_vjp upstream");
  ConvGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({cout})};
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t o = 0; o < cout; ++o) {
      const double* go = dout.data().data() + (ni * cout + o) * hw;
      for (std::size_t c = 0; c < cin; ++c) {
        const double* src = x.data().data() + (ni * cin + c) * hw;
        double* dxc = g.dx.data().data() + (ni * cin + c) * hw;
        const double wc = w[o * cin + c];
        double acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) {
          acc += go[p] * src[p];
          dxc[p] += wc * go[p];
        }
        g.dw[o * cin + c] += acc;
      }
      double acc = 0.0;
      for (std::size_t p = 0; p < hw; ++p) acc += go[p];
      g.db[o] += acc;
    }
  }
  return g;
}

ConvGrads conv2d_3x3_same_vjp(const Tensor& x, const Tensor& w, const Tensor& dout) {
  expect_rank(x, 4, "conv2d_3x3_vjp input");
  expect_rank(w, 4, "conv2d_3x3_vjp weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0);
  if (w.dim(1) != cin || w.dim(2) != 3 || w.dim(3) != 3)
    throw DimensionError("conv2d_3x3_vjp: weight does not match input");
  expect_shape(dout, {n, cout, h, wd}, "conv2d_3x3_vjp upstream");
  ConvGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({cout})};
  const std::size_t hw = h * wd;
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t o = 0; o < cout; ++o) {
      const double* go = dout.data().data() + (ni * cout + o) * hw;
      for (std::size_t c = 0; c < cin; ++c) {
        const double* src = x.data().data() + (ni * cin + c) * hw;
        double* dxc = g.dx.data().data() + (ni * cin + c) * hw;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const std::size_t widx = ((o * cin + c) * 3 + ky) * 3 + kx;
            const double wk = w[widx];
            const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? h - 1 : h;
            const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? wd - 1 : wd;
            double acc = 0.0;
            for (std::size_t y = y0; y < y1; ++y) {
              const std::size_t row = (y + ky - 1) * wd;
              for (std::size_t xx = x0; xx < x1; ++xx) {
                const std::size_t tap = row + xx + kx - 1;
                acc += go[y * wd + xx] * src[tap];
                dxc[tap] += wk * go[y * wd + xx];
              }
            }
            g.dw[widx] += acc;
          }
        }
      }
      double acc = 0.0;
      for (std::size_t p = 0; p < hw; ++p) acc += go[p];
      g.db[o] += acc;
    }
  }
  return g;
}

Tensor softmax_rows_vjp(const Tensor& out, const Tensor& dout) {
  expect_rank(out, 2, "softmax_rows_vjp");
  expect_shape(dout, out.shape(), "softmax_rows_vjp upstream");
  const std::size_t rows = out.dim(0), cols = out.dim(1);
  Tensor ds(out.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* a = out.data().data() + i * cols;
    const double* g = dout.data().data() + i * cols;
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += a[j] * g[j];
    for (std::size_t j = 0; j < cols; ++j) ds[i * cols + j] = a[j] * (g[j] - dot);
  }
  return ds;
}

Tensor relu_vjp(const Tensor& x, const Tensor& dout) {
  expect_shape(dout, x.shape(), "relu_vjp upstream");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dout[i] : 0.0;
  return dx;
}

Tensor global_avg_pool_vjp(const Shape& input_shape, const Tensor& dout) {
  if (input_shape.size() != 4) throw DimensionError("global_avg_pool_vjp: input must be rank 4");
  const std::size_t hw = input_shape[2] * input_shape[3];
  if (hw == 0) throw DimensionError("global_avg_pool_vjp: zero spatial size");
  expect_shape(dout, {input_shape[0], input_shape[1]}, "global_avg_pool_vjp upstream");
  Tensor dx(input_shape);
  for (std::size_t i = 0; i < dout.size(); ++i)
    std::fill_n(dx.data().data() + i * hw, hw, dout[i] / static_cast<double>(hw));
  return dx;
}

Tensor tile_spatial_vjp(const Tensor& dout) {
  expect_rank(dout, 4, "tile_spatial_vjp");
  const std::size_t hw = dout.dim(2) * dout.dim(3);
  Tensor dv({dout.dim(0), dout.dim(1)});
  for (std::size_t i = 0; i < dv.size(); ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < hw; ++p) acc += dout[i * hw + p];
    dv[i] = acc;
  }
  return dv;
}

ConcatGrads concat_channels_vjp(std::size_t x_channels, const Tensor& dout) {
  expect_rank(dout, 4, "concat_channels_vjp");
  const std::size_t n = dout.dim(0), total = dout.dim(1), h = dout.dim(2), w = dout.dim(3);
  if (x_channels > total) throw DimensionError("concat_channels_vjp: split beyond channel count");
  const std::size_t dt = total - x_channels, hw = h * w;
  ConcatGrads g{Tensor({n, x_channels, h, w}), Tensor({n, dt, h, w})};
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = dout.data().data() + i * total * hw;
    std::copy_n(src, x_channels * hw, g.dx.data().data() + i * x_channels * hw);
    std::copy_n(src + x_channels * hw, dt * hw, g.dt.data().data() + i * dt * hw);
  }
  return g;
}

// --- dispatch --------------------------------------------------------------------------

const char* op_name(OpId op) {
  switch (op) {
    case OpId::kMatmul: return "matmul";
    case OpId::kConv2d1x1: return "conv2d_1x1";
    case OpId::kConv2d3x3: return "conv2d_3x3_same";
    case OpId::kSoftmaxRows: return "softmax_rows";
    case OpId::kRelu: return "relu";
    case OpId::kGlobalAvgPool: return "global_avg_pool";
    case OpId::kTileSpatial: return "tile_spatial";
    case OpId::kConcatChannels: return "concat_channels";
  }
  return "unknown";
}

Tensor apply_op(OpId op, std::span<const Tensor> in, const OpOptions& opts) {
  switch (op) {
    case OpId::kMatmul: expect_count(in, 2, op); return matmul(in[0], in[1]);
    case OpId::kConv2d1x1: expect_count(in, 3, op); return conv2d_1x1(in[0], in[1], in[2]);
    case OpId::kConv2d3x3: expect_count(in, 3, op); return conv2d_3x3_same(in[0], in[1], in[2]);
    case OpId::kSoftmaxRows: expect_count(in, 1, op); return softmax_rows(in[0], opts.mask_diagonal);
    case OpId::kRelu: expect_count(in, 1, op); return relu(in[0]);
    case OpId::kGlobalAvgPool: expect_count(in, 1, op); return global_avg_pool(in[0]);
    case OpId::kTileSpatial:
      expect_count(in, 1, op);
      return tile_spatial(in[0], opts.tile_h, opts.tile_w);
    case OpId::kConcatChannels: expect_count(in, 2, op); return concat_channels(in[0], in[1]);
  }
  throw Error("apply_op: unknown op");
}

std::vector<Tensor> vjp(OpId op, std::span<const Tensor> saved, const Tensor& upstream,
                        const OpOptions& opts) {
  switch (op) {
    case OpId::kMatmul: {
      expect_count(saved, 2, op);
      auto g = matmul_vjp(saved[0], saved[1], upstream);
      return {std::move(g.da), std::move(g.db)};
    }
    case OpId::kConv2d1x1:
    case OpId::kConv2d3x3: {
      expect_count(saved, 3, op);
      expect_shape(saved[2], {saved[1].dim(0)}, "conv bias");
      auto g = op == OpId::kConv2d1x1 ? conv2d_1x1_vjp(saved[0], saved[1], upstream)
                                      : conv2d_3x3_same_vjp(saved[0], saved[1], upstream);
      return {std::move(g.dx), std::move(g.dw), std::move(g.db)};
    }
    case OpId::kSoftmaxRows: {
      expect_count(saved, 1, op);
      return {softmax_rows_vjp(softmax_rows(saved[0], opts.mask_diagonal), upstream)};
    }
    case OpId::kRelu: expect_count(saved, 1, op); return {relu_vjp(saved[0], upstream)};
    case OpId::kGlobalAvgPool:
      expect_count(saved, 1, op);
      return {global_avg_pool_vjp(saved[0].shape(), upstream)};
    case OpId::kTileSpatial:
      expect_count(saved, 1, op);
      expect_shape(upstream, {saved[0].dim(0), saved[0].dim(1), opts.tile_h, opts.tile_w},
                   "tile_spatial_vjp upstream");
      return {tile_spatial_vjp(upstream)};
    case OpId::kConcatChannels: {
      expect_count(saved, 2, op);
      const auto& x = saved[0];
      const auto& t = saved[1];
      expect_shape(upstream, {x.dim(0), x.dim(1) + t.dim(1), x.dim(2), x.dim(3)},
                   "concat_channels_vjp upstream");
      auto g = concat_channels_vjp(x.dim(1), upstream);
      return {std::move(g.dx), std::move(g.dt)};
    }
  }
  throw Error("vjp: unknown op");
}

}  // namespace nlroi

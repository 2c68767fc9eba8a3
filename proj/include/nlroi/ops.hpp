// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

// Primitive tensor operations and their vector-Jacobian products.
//
// Layouts follow NCHW. Every reduction over a feature/channel/kernel index is summed in
// ascending index order starting from 0.0, with any bias added last, so results are
// reproducible bit for bit. Row sums inside softmax_rows are correctly rounded (see
// exact_sum) and therefore independent of the column order.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nlroi/tensor.hpp"

namespace nlroi {

// Correctly rounded sum of `values` (Shewchuk / fsum). The result depends only on the
// multiset of inputs, not on their order.
double exact_sum(std::span<const double> values);

// Streaming form of exact_sum. Reusable through clear().
class ExactAccumulator {
 public:
  void add(double x);
  double result() const;
  void clear() noexcept { partials_.clear(); }

 private:
  std::vector<double> partials_;
};

// --- forward ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor conv2d_1x1(const Tensor& x, const Tensor& w, const Tensor& b);

// Stride 1, zero padding 1 on every border, so H and W are preserved.
Tensor conv2d_3x3_same(const Tensor& x, const Tensor& w, const Tensor& b);

// Row-wise softmax with max subtraction. With mask_diagonal the diagonal gets exactly zero
// probability and each row renormalizes over the remaining entries.
Tensor softmax_rows(const Tensor& s, bool mask_diagonal);

Tensor relu(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);
Tensor tile_spatial(const Tensor& v, std::size_t h, std::size_t w);
Tensor concat_channels(const Tensor& x, const Tensor& t);

// --- vector-Jacobian products -----------------------------------------------------------

struct MatmulGrads {
  Tensor da;
  Tensor db;
};
MatmulGrads matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& dc);

struct ConvGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};
ConvGrads conv2d_1x1_vjp(const Tensor& x, const Tensor& w, const Tensor& dout);
ConvGrads conv2d_3x3_same_vjp(const Tensor& x, const Tensor& w, const Tensor& dout);

// Takes the softmax *output*. Masked diagonal entries have zero output, hence zero gradient.
Tensor softmax_rows_vjp(const Tensor& out, const Tensor& dout);

// Subgradient at exactly 0 is 0.
Tensor relu_vjp(const Tensor& x, const Tensor& dout);

Tensor global_avg_pool_vjp(const Shape& input_shape, const Tensor& dout);
Tensor tile_spatial_vjp(const Tensor& dout);

struct ConcatGrads {
  Tensor dx;
  Tensor dt;
};
ConcatGrads concat_channels_vjp(std::size_t x_channels, const Tensor& dout);

// Uniform dispatch over the primitives, used by the gradient checker.
enum class OpId {
  kMatmul,        // saved: {A, B}            grads: {dA, dB}
  kConv2d1x1,     // saved: {X, W, b}         grads: {dX, dW, db}
  kConv2d3x3,     // saved: {X, W, b}         grads: {dX, dW, db}
  kSoftmaxRows,   // saved: {S}               grads: {dS}
  kRelu,          // saved: {X}               grads: {dX}
  kGlobalAvgPool, // saved: {X}               grads: {dX}
  kTileSpatial,   // saved: {V}               grads: {dV}
  kConcatChannels // saved: {X, T}            grads: {dX, dT}
};

const char* op_name(OpId op);

struct OpOptions {
  bool mask_diagonal = false;  // softmax_rows
  std::size_t tile_h = 1;      // tile_spatial
  std::size_t tile_w = 1;
};

// Forward of `op` on `inputs` (the same tensors vjp expects as `saved`).
Tensor apply_op(OpId op, std::span<const Tensor> inputs, const OpOptions& opts = {});

std::vector<Tensor> vjp(OpId op, std::span<const Tensor> saved, const Tensor& upstream,
                        const OpOptions& opts = {});

}  // namespace nlroi

#pragma once

#include <vector>

#include "kdlab/tensor.hpp"

// Differentiable operations. Every op returns a fresh tensor and records a
// backward rule when any input requires a gradient. Binary elementwise ops
// accept equal shapes or a single-element operand on either side.
namespace kdlab::num {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);

// Reductions to a one-element tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse_mean(const Tensor& a, const Tensor& b);

// Sums over the last axis: [..., K] -> [...] (a rank-1 input gives [1]).
Tensor sum_last(const Tensor& x);

// Temperature softmax along the last axis, max-subtracted.
Tensor softmax_t(const Tensor& logits, double temperature);
Tensor log_softmax_t(const Tensor& logits, double temperature);

// input [C_in,H,W], kernel [C_out,C_in,k,k] -> [C_out,H',W'].
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pad);
// x [C,H,W] + bias [C] broadcast over the spatial axes.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
// Nearest-neighbour 2x upsampling of [C,H,W].
Tensor upsample2x(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
// [R,C] -> [C,R].
Tensor transpose2d(const Tensor& x);
// Concatenates along axis 0; trailing extents must agree.
Tensor concat0(const std::vector<Tensor>& parts);

}  // namespace kdlab::num

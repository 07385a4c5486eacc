#pragma once

#include <span>
#include <vector>

#include "recattn/tensor.hpp"

// Differentiable operations. Each op computes its value eagerly and, when the
// tape is recording and any input requires a gradient, records a backward rule
// that accumulates into the inputs' gradient buffers.
namespace recattn::ops {

inline constexpr double kLogEps = 1e-7;

// Linear algebra on 2-D tensors.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);

/// Softmax normalized along the first index: out[i][j] = exp(x[i][j]) / sum_i exp(x[i][j]).
/// Every column of the result sums to one. Stabilized by the per-column maximum.
Tensor softmax_over_rows(Tape& tape, const Tensor& x);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

/// Cross-correlation of a C_in x H x W input with C_out x C_in x k x k filters.
/// Padding is dilation * (k - 1) / 2 on every side.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride = 1, std::size_t dilation = 1);

/// Concatenates C_i x H x W tensors along the channel axis.
Tensor concat_channels(Tape& tape, std::span<const Tensor> parts);

/// Bilinear upsampling of C x h x w by an integer factor, half-pixel centers
/// (no corner alignment), edge-clamped.
Tensor upsample_bilinear(Tape& tape, const Tensor& x, std::size_t factor);

// Elementwise. Binary ops require equal shapes, or a single-element operand
// that is broadcast.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

/// scale * x + shift with constant scale and shift.
Tensor affine(Tape& tape, const Tensor& x, double scale, double shift);
Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
/// log(sigmoid(x)), computed without forming sigmoid(x).
Tensor log_sigmoid(Tape& tape, const Tensor& x);
/// log(x + eps)
Tensor log_eps(Tape& tape, const Tensor& x, double eps = kLogEps);

// Reductions to a scalar.
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

}  // namespace recattn::ops

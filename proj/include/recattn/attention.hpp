#pragma once

#include "recattn/network.hpp"
#include "recattn/params.hpp"
#include "recattn/tensor.hpp"

// Reciprocal attention between the foreground and background feature maps.
//
// Given F, B in C x h x w, four 1x1 projections give F1, B1 (C channels, the
// values) and F2, B2 (d channels, the scores). With N = h * w positions:
//
//   X[i][j]  = exp(B2_i . F2_j) / sum_i exp(B2_i . F2_j)     (columns sum to 1)
//   B+_j     = alpha * sum_i X[j][i] F1_i + B_j              (F1 * X^T)
//   F+_j     = beta  * sum_i X[j][i] B1_i + F_j              (B1 * X^T)
//
// alpha and beta start at zero, so the module is the identity at init.
namespace recattn::attention {

/// X from the d x N score projections. Raw score S[i][j] pairs background
/// position i with foreground position j.
Tensor attention_weights(Tape& tape, const Tensor& f2, const Tensor& b2);

/// B + alpha * reshape(F1 * X^T). `f1` is C x N, `background` C x h x w.
Tensor update_background(Tape& tape, const Tensor& background, const Tensor& f1,
                         const Tensor& weights, const Tensor& alpha);

/// F + beta * reshape(B1 * X^T).
Tensor update_foreground(Tape& tape, const Tensor& foreground, const Tensor& b1,
                         const Tensor& weights, const Tensor& beta);

struct RamOutput {
  Tensor foreground;
  Tensor background;
  Tensor weights;  ///< undefined when mode is kOff
};

RamOutput ram_forward(Tape& tape, const Tensor& foreground, const Tensor& background,
                      const NetworkParams& params, RamMode mode = RamMode::kFull);

}  // namespace recattn::attention

#pragma once

#include <utility>

#include "recattn/tensor.hpp"

namespace recattn::losses {

/// Foreground mask and its complement, both 1 x H x W with values in {0, 1}.
struct GroundTruth {
  Tensor foreground;
  Tensor background;

  /// Builds G_F = mask and G_B = 1 - mask. Throws on non-binary values.
  static GroundTruth from_mask(const Tensor& mask);
  void validate() const;
};

/// Scalar values of one loss evaluation.
struct LossReport {
  double ce_fg = 0.0;
  double ce_bg = 0.0;
  double kl_complement = 0.0;
  double kl_overlap = 0.0;
  double total = 0.0;
};

/// Differentiable loss terms. Background terms are undefined for the
/// single-branch model.
struct LossTerms {
  Tensor ce_fg;
  Tensor ce_bg;
  Tensor kl_complement;
  Tensor kl_overlap;
  Tensor total;

  LossReport report() const;
};

/// Pixel-averaged binary cross entropy of sigmoid(logits) against `target`,
/// evaluated in log-sigmoid form so saturated logits stay finite.
Tensor binary_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& target);

std::pair<Tensor, Tensor> cross_entropy_pair(Tape& tape, const Tensor& fg_logits,
                                             const Tensor& bg_logits, const GroundTruth& gt);

/// Cooperative terms with p = sigmoid(fg), q = sigmoid(bg), per pixel:
///   complement: KL(Bern(p) || Bern(1 - q))
///   overlap:    -log((1 - p*q + eps) / (1 + eps))
/// Both Bernoulli parameters in the complement term are smoothed as
/// (x + eps) / (1 + 2 eps), which keeps the logs finite and the divergence
/// nonnegative. Both terms are pixel means and are zero exactly when
/// p == 1 - q and p*q == 0 respectively.
std::pair<Tensor, Tensor> cooperative_loss(Tape& tape, const Tensor& fg_logits,
                                           const Tensor& bg_logits);

/// L = ce_fg + ce_bg + lambda * (kl_complement + kl_overlap). Undefined terms
/// are skipped.
Tensor total_loss(Tape& tape, const LossTerms& terms, double lambda);

/// All terms for one prediction pair. Pass an undefined bg_logits for the
/// single-branch model (only ce_fg contributes). The cooperative terms are
/// always evaluated for two branches so they can be logged; lambda only
/// weights them in the total.
LossTerms compute_losses(Tape& tape, const Tensor& fg_logits, const Tensor& bg_logits,
                         const GroundTruth& gt, double lambda);

}  // namespace recattn::losses

#include "recattn/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "recattn/ops.hpp"

namespace recattn::losses {
namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_binary(const Tensor& t, const char* what) {
  for (double v : t.data()) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument(std::string(what) + ": values must be 0 or 1");
  }
}

double value_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

}  // namespace

GroundTruth GroundTruth::from_mask(const Tensor& mask) {
  require_binary(mask, "ground truth");
  std::vector<double> inverted(mask.numel());
  auto m = mask.data();
  for (std::size_t i = 0; i < inverted.size(); ++i) inverted[i] = 1.0 - m[i];
  return {mask.clone(), Tensor(mask.shape(), std::move(inverted))};
}

void GroundTruth::validate() const {
  require_same(foreground, background, "ground truth");
  require_binary(foreground, "ground truth");
  auto f = foreground.data();
  auto b = background.data();
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (b[i] != 1.0 - f[i]) throw std::invalid_argument("ground truth: G_B must equal 1 - G_F");
  }
}

LossReport LossTerms::report() const {
  return {value_or_zero(ce_fg), value_or_zero(ce_bg), value_or_zero(kl_complement),
          value_or_zero(kl_overlap), value_or_zero(total)};
}

Tensor binary_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& target) {
  require_same(logits, target, "binary_cross_entropy");
  require_binary(target, "binary_cross_entropy");
  const Tensor log_p = ops::log_sigmoid(tape, logits);
  const Tensor log_not_p = ops::log_sigmoid(tape, ops::affine(tape, logits, -1.0, 0.0));
  const Tensor inverse = ops::affine(tape, target, -1.0, 1.0);
  const Tensor ll = ops::add(tape, ops::mul(tape, target, log_p), ops::mul(tape, inverse, log_not_p));
  return ops::affine(tape, ops::mean(tape, ll), -1.0, 0.0);
}

std::pair<Tensor, Tensor> cross_entropy_pair(Tape& tape, const Tensor& fg_logits,
                                             const Tensor& bg_logits, const GroundTruth& gt) {
  return {binary_cross_entropy(tape, fg_logits, gt.foreground),
          binary_cross_entropy(tape, bg_logits, gt.background)};
}

std::pair<Tensor, Tensor> cooperative_loss(Tape& tape, const Tensor& fg_logits,
                                           const Tensor& bg_logits) {
  require_same(fg_logits, bg_logits, "cooperative_loss");
  constexpr double eps = ops::kLogEps;
  constexpr double norm = 1.0 + 2.0 * eps;

  const Tensor p = ops::sigmoid(tape, fg_logits);
  const Tensor q = ops::sigmoid(tape, bg_logits);

  // Smoothed Bernoulli parameters: P ~ p, R ~ 1 - q, and their complements.
  const Tensor big_p = ops::affine(tape, p, 1.0 / norm, eps / norm);
  const Tensor not_p = ops::affine(tape, p, -1.0 / norm, (1.0 + eps) / norm);
  const Tensor big_r = ops::affine(tape, q, -1.0 / norm, (1.0 + eps) / norm);
  const Tensor not_r = ops::affine(tape, q, 1.0 / norm, eps / norm);

  auto log = [&](const Tensor& t) { return ops::log_eps(tape, t, 0.0); };
  const Tensor first = ops::mul(tape, big_p, ops::sub(tape, log(big_p), log(big_r)));
  const Tensor second = ops::mul(tape, not_p, ops::sub(tape, log(not_p), log(not_r)));
  const Tensor complement = ops::mean(tape, ops::add(tape, first, second));

  const Tensor overlap_mass = ops::mul(tape, p, q);
  const Tensor keep = ops::log_eps(tape, ops::affine(tape, overlap_mass, -1.0, 1.0), eps);
  const Tensor overlap = ops::affine(tape, ops::mean(tape, keep), -1.0, std::log1p(eps));
  return {complement, overlap};
}

Tensor total_loss(Tape& tape, const LossTerms& terms, double lambda) {
  Tensor total = terms.ce_fg;
  if (terms.ce_bg.defined()) total = ops::add(tape, total, terms.ce_bg);
  if (terms.kl_complement.defined() && terms.kl_overlap.defined()) {
    const Tensor kl = ops::add(tape, terms.kl_complement, terms.kl_overlap);
    total = ops::add(tape, total, ops::affine(tape, kl, lambda, 0.0));
  }
  return total;
}

LossTerms compute_losses(Tape& tape, const Tensor& fg_logits, const Tensor& bg_logits,
                         const GroundTruth& gt, double lambda) {
  LossTerms terms;
  if (!bg_logits.defined()) {
    terms.ce_fg = binary_cross_entropy(tape, fg_logits, gt.foreground);
    terms.total = terms.ce_fg;
    return terms;
  }
  std::tie(terms.ce_fg, terms.ce_bg) = cross_entropy_pair(tape, fg_logits, bg_logits, gt);
  std::tie(terms.kl_complement, terms.kl_overlap) = cooperative_loss(tape, fg_logits, bg_logits);
  terms.total = total_loss(tape, terms, lambda);
  return terms;
}

}  // namespace recattn::losses

#include "recattn/attention.hpp"

#include "recattn/ops.hpp"

namespace recattn::attention {
namespace {

Tensor flatten_positions(Tape& tape, const Tensor& x) {
  return ops::reshape(tape, x, {x.dim(0), x.dim(1) * x.dim(2)});
}

Tensor project(Tape& tape, const Tensor& x, const NetworkParams& params, const std::string& name) {
  const Tensor y = ops::conv2d(tape, x, params.at("ram." + name + ".weight"),
                               params.at("ram." + name + ".bias"));
  return flatten_positions(tape, y);
}

Tensor residual_update(Tape& tape, const Tensor& base, const Tensor& values, const Tensor& weights,
                       const Tensor& gate, const char* what) {
  if (base.rank() != 3 || values.rank() != 2 || weights.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected C x h x w base, C x N values, N x N weights");
  }
  const std::size_t c = base.dim(0), n = base.dim(1) * base.dim(2);
  if (values.dim(0) != c || values.dim(1) != n || weights.dim(0) != n || weights.dim(1) != n) {
    throw ShapeError(std::string(what) + ": inconsistent shapes " + to_string(base.shape()) + ", " +
                     to_string(values.shape()) + ", " + to_string(weights.shape()));
  }
  if (gate.numel() != 1) throw ShapeError(std::string(what) + ": gate must be a scalar");
  const Tensor context = ops::matmul(tape, values, ops::transpose(tape, weights));
  const Tensor scaled = ops::mul(tape, ops::reshape(tape, context, base.shape()), gate);
  return ops::add(tape, scaled, base);
}

}  // namespace

Tensor attention_weights(Tape& tape, const Tensor& f2, const Tensor& b2) {
  if (f2.rank() != 2 || b2.rank() != 2 || f2.shape() != b2.shape()) {
    throw ShapeError("attention_weights: F2 " + to_string(f2.shape()) + " and B2 " +
                     to_string(b2.shape()) + " must both be d x N");
  }
  const Tensor scores = ops::matmul(tape, ops::transpose(tape, b2), f2);
  return ops::softmax_over_rows(tape, scores);
}

Tensor update_background(Tape& tape, const Tensor& background, const Tensor& f1,
                         const Tensor& weights, const Tensor& alpha) {
  return residual_update(tape, background, f1, weights, alpha, "update_background");
}

Tensor update_foreground(Tape& tape, const Tensor& foreground, const Tensor& b1,
                         const Tensor& weights, const Tensor& beta) {
  return residual_update(tape, foreground, b1, weights, beta, "update_foreground");
}

RamOutput ram_forward(Tape& tape, const Tensor& foreground, const Tensor& background,
                      const NetworkParams& params, RamMode mode) {
  if (foreground.shape() != background.shape()) {
    throw ShapeError("ram_forward: F " + to_string(foreground.shape()) + " and B " +
                     to_string(background.shape()) + " differ");
  }
  if (mode == RamMode::kOff) return {foreground, background, Tensor()};

  const Tensor f2 = project(tape, foreground, params, "f2");
  const Tensor b2 = project(tape, background, params, "b2");
  const Tensor x = attention_weights(tape, f2, b2);

  RamOutput out{foreground, background, x};
  if (mode == RamMode::kFull || mode == RamMode::kBackgroundOnly) {
    const Tensor f1 = project(tape, foreground, params, "f1");
    out.background = update_background(tape, background, f1, x, params.at("ram.alpha"));
  }
  if (mode == RamMode::kFull || mode == RamMode::kForegroundOnly) {
    const Tensor b1 = project(tape, background, params, "b1");
    out.foreground = update_foreground(tape, foreground, b1, x, params.at("ram.beta"));
  }
  return out;
}

}  // namespace recattn::attention

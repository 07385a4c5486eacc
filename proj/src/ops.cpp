#include "recattn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace recattn::ops {
namespace {

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + to_string(x.shape()));
  }
}

void require_finite(const Tensor& x, const char* op) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw std::domain_error(std::string(op) + ": non-finite input");
  }
}

void accumulate(const Tensor& t, std::span<const double> g) {
  auto dst = t.mutable_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Tensor make_output(Tape& tape, Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs) {
  return Tensor(std::move(shape), std::move(values), tape.needs_grad(inputs));
}

enum class Binary { kAdd, kSub, kMul };

Tensor binary(Tape& tape, const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  // A single-element operand broadcasts; when both are single-element the
  // result takes a's shape.
  const bool a_scalar = a.numel() == 1 && b.numel() != 1;
  const bool b_scalar = b.numel() == 1 && !a_scalar && a.shape() != b.shape();
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw ShapeError(std::string(name) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const Tensor& big = a_scalar ? b : a;
  const std::size_t n = big.numel();
  auto ad = a.data();
  auto bd = b.data();
  auto av = [&](std::size_t i) { return a_scalar ? ad[0] : ad[i]; };
  auto bv = [&](std::size_t i) { return b_scalar ? bd[0] : bd[i]; };

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case Binary::kAdd: out[i] = av(i) + bv(i); break;
      case Binary::kSub: out[i] = av(i) - bv(i); break;
      case Binary::kMul: out[i] = av(i) * bv(i); break;
    }
  }
  Tensor y = make_output(tape, big.shape(), std::move(out), {&a, &b});
  if (y.requires_grad()) {
    tape.record(name, y, [a, b, kind, a_scalar, b_scalar](std::span<const double> g) mutable {
      const std::size_t n = g.size();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        auto bd = b.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double d = kind == Binary::kMul ? g[i] * (b_scalar ? bd[0] : bd[i]) : g[i];
          ga[a_scalar ? 0 : i] += d;
        }
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        auto ad = a.data();
        for (std::size_t i = 0; i < n; ++i) {
          double d = g[i];
          if (kind == Binary::kSub) d = -d;
          if (kind == Binary::kMul) d *= a_scalar ? ad[0] : ad[i];
          gb[b_scalar ? 0 : i] += d;
        }
      }
    });
  }
  return y;
}

// Elementwise unary op given value and derivative-from-(input, output).
template <typename Fwd, typename Deriv>
Tensor unary(Tape& tape, const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  Tensor y = make_output(tape, x.shape(), std::move(out), {&x});
  if (y.requires_grad()) {
    tape.record(name, y, [x, y, deriv](std::span<const double> g) mutable {
      auto gx = x.mutable_grad();
      auto xd = x.data();
      auto yd = y.data();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xd[i], yd[i]);
    });
  }
  return y;
}

double lerp_clamped(double a, double b, double t) {
  const double v = a + t * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;
};

AxisTaps bilinear_taps(std::size_t in, std::size_t factor) {
  AxisTaps taps;
  const std::size_t out = in * factor;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.frac.resize(out);
  const double scale = 1.0 / static_cast<double>(factor);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    taps.lo[o] = lo;
    taps.hi[o] = lo + (lo < in - 1 ? 1 : 0);
    taps.frac[o] = src - static_cast<double>(lo);
  }
  return taps;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  detail::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  Tensor y = make_output(tape, {m, n}, std::move(out), {&a, &b});
  if (y.requires_grad()) {
    tape.record("matmul", y, [a, b, m, n, k](std::span<const double> g) mutable {
      if (a.requires_grad()) {
        detail::gemm_nt(m, k, n, g.data(), b.data().data(), a.mutable_grad().data());
      }
      if (b.requires_grad()) {
        detail::gemm_tn(k, n, m, a.data().data(), g.data(), b.mutable_grad().data());
      }
    });
  }
  return y;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xd = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
  Tensor y = make_output(tape, {c, r}, std::move(out), {&x});
  if (y.requires_grad()) {
    tape.record("transpose", y, [x, r, c](std::span<const double> g) mutable {
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    });
  }
  return y;
}

Tensor softmax_over_rows(Tape& tape, const Tensor& x) {
  require_rank(x, 2, "softmax_over_rows");
  require_finite(x, "softmax_over_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xd = x.data();
  std::vector<double> out(r * c);
  for (std::size_t j = 0; j < c; ++j) {
    double mx = xd[j];
    for (std::size_t i = 1; i < r; ++i) mx = std::max(mx, xd[i * c + j]);
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      out[i * c + j] = std::exp(xd[i * c + j] - mx);
      total += out[i * c + j];
    }
    for (std::size_t i = 0; i < r; ++i) out[i * c + j] /= total;
  }
  Tensor y = make_output(tape, {r, c}, std::move(out), {&x});
  if (y.requires_grad()) {
    tape.record("softmax_over_rows", y, [x, y, r, c](std::span<const double> g) mutable {
      auto gx = x.mutable_grad();
      auto yd = y.data();
      for (std::size_t j = 0; j < c; ++j) {
        double dot = 0.0;
        for (std::size_t i = 0; i < r; ++i) dot += yd[i * c + j] * g[i * c + j];
        for (std::size_t i = 0; i < r; ++i) gx[i * c + j] += yd[i * c + j] * (g[i * c + j] - dot);
      }
    });
  }
  return y;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (recattn::numel(shape) != x.numel()) {
    throw ShapeError("reshape: element count differs, " + to_string(x.shape()) + " -> " +
                     to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  Tensor y = make_output(tape, std::move(shape), std::move(out), {&x});
  if (y.requires_grad()) {
    tape.record("reshape", y, [x](std::span<const double> g) mutable { accumulate(x, g); });
  }
  return y;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride, std::size_t dilation) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  require_rank(b, 1, "conv2d");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw ShapeError("conv2d: channel mismatch, input " + to_string(x.shape()) + " vs filters " +
                     to_string(w.shape()));
  }
  if (w.dim(3) != k || k % 2 == 0) {
    throw ShapeError("conv2d: filters must be square with odd size, got " + to_string(w.shape()));
  }
  if (b.dim(0) != cout) {
    throw ShapeError("conv2d: bias " + to_string(b.shape()) + " does not match filters " +
                     to_string(w.shape()));
  }
  if (stride < 1 || dilation < 1) throw std::invalid_argument("conv2d: stride and dilation must be >= 1");
  const std::size_t pad = dilation * (k - 1) / 2;
  const std::size_t span = dilation * (k - 1) + 1;
  if (h + 2 * pad < span || wd + 2 * pad < span) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(span) +
                     " larger than padded input " + to_string(x.shape()));
  }
  const std::size_t oh = (h + 2 * pad - span) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - span) / stride + 1;
  const std::size_t rows = cin * k * k;
  const std::size_t cols = oh * ow;

  // im2col; -1 marks a padded tap.
  auto index = std::make_shared<std::vector<std::ptrdiff_t>>(rows * cols, -1);
  auto xd = x.data();
  std::vector<double> patches(rows * cols, 0.0);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::size_t r = (c * k + ky) * k + kx;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky * dilation) -
                          static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx * dilation) -
                            static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
            const auto src = (static_cast<std::ptrdiff_t>(c * h) + iy) *
                                 static_cast<std::ptrdiff_t>(wd) + ix;
            (*index)[r * cols + oy * ow + ox] = src;
            patches[r * cols + oy * ow + ox] = xd[static_cast<std::size_t>(src)];
          }
        }
      }
    }
  }

  std::vector<double> out(cout * cols);
  auto bd = b.data();
  for (std::size_t co = 0; co < cout; ++co)
    std::fill(out.begin() + co * cols, out.begin() + (co + 1) * cols, bd[co]);
  detail::gemm_nn(cout, cols, rows, w.data().data(), patches.data(), out.data());

  Tensor y = make_output(tape, {cout, oh, ow}, std::move(out), {&x, &w, &b});
  if (y.requires_grad()) {
    auto shared_patches = std::make_shared<std::vector<double>>(std::move(patches));
    tape.record("conv2d", y,
                [x, w, b, index, shared_patches, cout, rows, cols](std::span<const double> g) mutable {
                  if (w.requires_grad()) {
                    detail::gemm_nt(cout, rows, cols, g.data(), shared_patches->data(),
                                    w.mutable_grad().data());
                  }
                  if (b.requires_grad()) {
                    auto gb = b.mutable_grad();
                    for (std::size_t co = 0; co < cout; ++co) {
                      double acc = 0.0;
                      for (std::size_t p = 0; p < cols; ++p) acc += g[co * cols + p];
                      gb[co] += acc;
                    }
                  }
                  if (x.requires_grad()) {
                    std::vector<double> dpatch(rows * cols, 0.0);
                    detail::gemm_tn(rows, cols, cout, w.data().data(), g.data(), dpatch.data());
                    auto gx = x.mutable_grad();
                    for (std::size_t i = 0; i < dpatch.size(); ++i) {
                      const auto src = (*index)[i];
                      if (src >= 0) gx[static_cast<std::size_t>(src)] += dpatch[i];
                    }
                  }
                });
  }
  return y;
}

Tensor concat_channels(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& p : parts) require_rank(p, 3, "concat_channels");
  const std::size_t h = parts[0].dim(1), w = parts[0].dim(2);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.dim(1) != h || p.dim(2) != w) {
      throw ShapeError("concat_channels: spatial mismatch " + to_string(parts[0].shape()) +
                       " vs " + to_string(p.shape()));
    }
    channels += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(channels * h * w);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor y(Shape{channels, h, w}, std::move(out), tape.needs_grad(parts));
  if (y.requires_grad()) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record("concat_channels", y, [inputs](std::span<const double> g) mutable {
      std::size_t offset = 0;
      for (auto& p : inputs) {
        if (p.requires_grad()) accumulate(p, g.subspan(offset, p.numel()));
        offset += p.numel();
      }
    });
  }
  return y;
}

Tensor upsample_bilinear(Tape& tape, const Tensor& x, std::size_t factor) {
  require_rank(x, 3, "upsample_bilinear");
  if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h * factor, ow = w * factor;
  auto ty = std::make_shared<AxisTaps>(bilinear_taps(h, factor));
  auto tx = std::make_shared<AxisTaps>(bilinear_taps(w, factor));
  auto xd = x.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = xd.data() + ch * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const double* r0 = src + ty->lo[oy] * w;
      const double* r1 = src + ty->hi[oy] * w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double top = lerp_clamped(r0[tx->lo[ox]], r0[tx->hi[ox]], tx->frac[ox]);
        const double bot = lerp_clamped(r1[tx->lo[ox]], r1[tx->hi[ox]], tx->frac[ox]);
        out[(ch * oh + oy) * ow + ox] = lerp_clamped(top, bot, ty->frac[oy]);
      }
    }
  }
  Tensor y = make_output(tape, {c, oh, ow}, std::move(out), {&x});
  if (y.requires_grad()) {
    tape.record("upsample_bilinear", y, [x, ty, tx, c, h, w, oh, ow](std::span<const double> g) mutable {
      auto gx = x.mutable_grad();
      for (std::size_t ch = 0; ch < c; ++ch) {
        double* dst = gx.data() + ch * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const double fy = ty->frac[oy];
          double* r0 = dst + ty->lo[oy] * w;
          double* r1 = dst + ty->hi[oy] * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double gv = g[(ch * oh + oy) * ow + ox];
            const double fx = tx->frac[ox];
            r0[tx->lo[ox]] += gv * (1 - fy) * (1 - fx);
            r0[tx->hi[ox]] += gv * (1 - fy) * fx;
            r1[tx->lo[ox]] += gv * fy * (1 - fx);
            r1[tx->hi[ox]] += gv * fy * fx;
          }
        }
      }
    });
  }
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(tape, a, b, Binary::kAdd, "add");
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(tape, a, b, Binary::kSub, "sub");
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(tape, a, b, Binary::kMul, "mul");
}

Tensor affine(Tape& tape, const Tensor& x, double scale, double shift) {
  return unary(
      tape, x, "affine", [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Tensor relu(Tape& tape, const Tensor& x) {
  if (auto* log = tape.kink_log()) {
    for (double v : x.data()) log->push_back(v > 0.0);
  }
  return unary(
      tape, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double s) { return s * (1.0 - s); });
}

Tensor log_sigmoid(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, "log_sigmoid",
      [](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        if (v >= 0.0) {
          const double e = std::exp(-v);
          return e / (1.0 + e);
        }
        return 1.0 / (1.0 + std::exp(v));
      });
}

Tensor log_eps(Tape& tape, const Tensor& x, double eps) {
  for (double v : x.data()) {
    // NaN passes through so the caller's finiteness check can report it.
    if (v + eps <= 0.0) throw std::domain_error("log_eps: argument must exceed -eps");
  }
  return unary(
      tape, x, "log_eps", [eps](double v) { return std::log(v + eps); },
      [eps](double v, double) { return 1.0 / (v + eps); });
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = make_output(tape, {}, {acc}, {&x});
  if (y.requires_grad()) {
    tape.record("sum", y, [x](std::span<const double> g) mutable {
      auto gx = x.mutable_grad();
      for (auto& v : gx) v += g[0];
    });
  }
  return y;
}

Tensor mean(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  Tensor y = make_output(tape, {}, {acc / n}, {&x});
  if (y.requires_grad()) {
    tape.record("mean", y, [x, n](std::span<const double> g) mutable {
      auto gx = x.mutable_grad();
      for (auto& v : gx) v += g[0] / n;
    });
  }
  return y;
}

}  // namespace recattn::ops

#include "recattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace recattn::metrics {
namespace {

void check_pair(const Image& sal, const Image& gt) {
  if (sal.channels != 1 || gt.channels != 1) {
    throw std::invalid_argument("metrics: saliency and ground truth must be single-channel");
  }
  if (sal.height != gt.height || sal.width != gt.width) {
    throw std::invalid_argument("metrics: size mismatch " + std::to_string(sal.height) + "x" +
                                std::to_string(sal.width) + " vs " + std::to_string(gt.height) +
                                "x" + std::to_string(gt.width));
  }
  if (sal.pixels() == 0) throw std::invalid_argument("metrics: empty map");
  for (double v : gt.values) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("metrics: ground truth must be binary");
  }
}

std::vector<bool> foreground_of(const Image& gt) {
  std::vector<bool> fg(gt.values.size());
  for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = gt.values[i] == 1.0;
  return fg;
}

FScore score(double tp, double fp, double fn) {
  FScore s;
  s.degenerate = tp + fn == 0.0;
  s.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  s.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  s.f = s.degenerate ? 0.0 : f_beta(s.precision, s.recall);
  return s;
}

// Normalized 1-D Gaussian taps; their outer product is the 2-D window.
std::array<double, kWeightWindow> gaussian_taps() {
  std::array<double, kWeightWindow> taps{};
  const int half = kWeightWindow / 2;
  double total = 0.0;
  for (int i = -half; i <= half; ++i) {
    taps[i + half] = std::exp(-(i * i) / (2.0 * kWeightSigma * kWeightSigma));
    total += taps[i + half];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

// Zero-padded "same" correlation with the separable window.
std::vector<double> gaussian_filter(const std::vector<double>& in, std::size_t h, std::size_t w) {
  const auto taps = gaussian_taps();
  const auto half = static_cast<std::ptrdiff_t>(kWeightWindow / 2);
  const auto sh = static_cast<std::ptrdiff_t>(h), sw = static_cast<std::ptrdiff_t>(w);
  std::vector<double> rows(in.size(), 0.0), out(in.size(), 0.0);
  for (std::ptrdiff_t r = 0; r < sh; ++r) {
    for (std::ptrdiff_t c = 0; c < sw; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const auto cc = c + k;
        if (cc >= 0 && cc < sw) acc += taps[k + half] * in[r * sw + cc];
      }
      rows[r * sw + c] = acc;
    }
  }
  for (std::ptrdiff_t r = 0; r < sh; ++r) {
    for (std::ptrdiff_t c = 0; c < sw; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const auto rr = r + k;
        if (rr >= 0 && rr < sh) acc += taps[k + half] * rows[rr * sw + c];
      }
      out[r * sw + c] = acc;
    }
  }
  return out;
}

}  // namespace

double f_beta(double precision, double recall) {
  const double denom = kBetaSquared * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + kBetaSquared) * precision * recall / denom;
}

double mae(const Image& sal, const Image& gt) {
  check_pair(sal, gt);
  double acc = 0.0;
  for (std::size_t i = 0; i < sal.values.size(); ++i) acc += std::abs(sal.values[i] - gt.values[i]);
  return acc / static_cast<double>(sal.values.size());
}

FScore f_measure_binary(const std::vector<bool>& prediction, const Image& gt) {
  if (prediction.size() != gt.values.size()) throw std::invalid_argument("f_measure_binary: size mismatch");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const bool truth = gt.values[i] == 1.0;
    if (prediction[i] && truth) ++tp;
    else if (prediction[i]) ++fp;
    else if (truth) ++fn;
  }
  return score(tp, fp, fn);
}

FScore f_measure_at(const Image& sal, const Image& gt, int threshold) {
  check_pair(sal, gt);
  if (threshold < 0 || threshold > 255) throw std::invalid_argument("threshold must be in [0, 255]");
  std::vector<bool> pred(sal.values.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = quantize(sal.values[i]) >= threshold;
  return f_measure_binary(pred, gt);
}

double adaptive_threshold(const Image& sal) {
  double acc = 0.0;
  for (double v : sal.values) acc += v;
  const double mean = acc / static_cast<double>(sal.values.size());
  return std::min(2.0 * mean, 1.0);
}

FScore f_adaptive(const Image& sal, const Image& gt) {
  check_pair(sal, gt);
  const double t = adaptive_threshold(sal);
  std::vector<bool> pred(sal.values.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = sal.values[i] >= t;
  return f_measure_binary(pred, gt);
}

Curve f_curve(const Image& sal, const Image& gt) {
  check_pair(sal, gt);
  std::array<double, kThresholds> fg_hist{}, bg_hist{};
  for (std::size_t i = 0; i < sal.values.size(); ++i) {
    const auto q = quantize(sal.values[i]);
    (gt.values[i] == 1.0 ? fg_hist : bg_hist)[q] += 1.0;
  }
  double positives = 0;
  for (double v : fg_hist) positives += v;

  Curve curve;
  double tp = 0, fp = 0;
  for (int t = kThresholds - 1; t >= 0; --t) {
    tp += fg_hist[t];
    fp += bg_hist[t];
    const FScore s = score(tp, fp, positives - tp);
    curve.precision[t] = s.precision;
    curve.recall[t] = s.recall;
    curve.f[t] = s.f;
    curve.degenerate = s.degenerate;
  }
  return curve;
}

DistanceField distance_to_foreground(const std::vector<bool>& foreground, std::size_t height,
                                     std::size_t width) {
  constexpr auto kNone = std::numeric_limits<std::size_t>::max();
  DistanceField field;
  field.distance.assign(height * width, std::numeric_limits<double>::infinity());
  field.nearest.assign(height * width, kNone);

  // Per column: nearest foreground row for every row; ties prefer the upper one.
  std::vector<std::size_t> column_row(height * width, kNone);
  for (std::size_t c = 0; c < width; ++c) {
    std::size_t last = kNone;
    for (std::size_t r = 0; r < height; ++r) {
      if (foreground[r * width + c]) last = r;
      column_row[r * width + c] = last;
    }
    std::size_t next = kNone;
    for (std::size_t r = height; r-- > 0;) {
      if (foreground[r * width + c]) next = r;
      auto& best = column_row[r * width + c];
      if (next != kNone && (best == kNone || next - r < r - best)) best = next;
    }
  }

  // Per row: minimize (dx^2 + dy^2, index) over the column candidates.
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double best_d2 = std::numeric_limits<double>::infinity();
      std::size_t best_idx = kNone;
      for (std::size_t cc = 0; cc < width; ++cc) {
        const std::size_t rr = column_row[r * width + cc];
        if (rr == kNone) continue;
        const double dx = static_cast<double>(cc) - static_cast<double>(c);
        const double dy = static_cast<double>(rr) - static_cast<double>(r);
        const double d2 = dx * dx + dy * dy;
        const std::size_t idx = rr * width + cc;
        if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
          best_d2 = d2;
          best_idx = idx;
        }
      }
      field.distance[r * width + c] = std::sqrt(best_d2);
      field.nearest[r * width + c] = best_idx;
    }
  }
  return field;
}

FScore f_weighted(const Image& sal, const Image& gt) {
  check_pair(sal, gt);
  const std::size_t h = gt.height, w = gt.width, n = gt.pixels();
  const auto fg = foreground_of(gt);
  const auto positives = static_cast<double>(std::count(fg.begin(), fg.end(), true));
  FScore s;
  if (positives == 0.0) {
    s.degenerate = true;
    return s;
  }

  std::vector<double> error(n);
  for (std::size_t i = 0; i < n; ++i) error[i] = std::abs(sal.values[i] - gt.values[i]);

  const auto field = distance_to_foreground(fg, h, w);
  // Background errors are replaced by the error at their nearest foreground
  // pixel before smoothing, so the filter sees consistent values at edges.
  std::vector<double> edge_error(n);
  for (std::size_t i = 0; i < n; ++i) edge_error[i] = fg[i] ? error[i] : error[field.nearest[i]];
  const auto smoothed = gaussian_filter(edge_error, h, w);

  double fg_weighted_error = 0.0, bg_weighted_error = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (fg[i]) {
      fg_weighted_error += std::min(error[i], smoothed[i]);
    } else {
      const double importance = 2.0 - std::exp(kDistanceDecay * field.distance[i]);
      bg_weighted_error += error[i] * importance;
    }
  }
  const double tp = positives - fg_weighted_error;
  const double fp = bg_weighted_error;
  s.recall = 1.0 - fg_weighted_error / positives;
  s.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  s.f = f_beta(s.precision, s.recall);
  return s;
}

MetricsReport evaluate(const Image& sal, const Image& gt) {
  MetricsReport report;
  report.mae = mae(sal, gt);
  const FScore adaptive = f_adaptive(sal, gt);
  report.f_adaptive = adaptive.f;
  report.f_weighted = f_weighted(sal, gt).f;
  const Curve curve = f_curve(sal, gt);
  report.f_curve = curve.f;
  report.precision = curve.precision;
  report.recall = curve.recall;
  report.degenerate = adaptive.degenerate;
  return report;
}

void Aggregate::add(const MetricsReport& report) {
  ++count_;
  mae_ += report.mae;
  if (report.degenerate) {
    ++degenerate_;
    return;
  }
  f_adaptive_ += report.f_adaptive;
  f_weighted_ += report.f_weighted;
  for (int t = 0; t < kThresholds; ++t) {
    precision_[t] += report.precision[t];
    recall_[t] += report.recall[t];
  }
}

MetricsReport Aggregate::result() const {
  MetricsReport out;
  if (count_ == 0) return out;
  out.mae = mae_ / static_cast<double>(count_);
  const std::size_t valid = count_ - degenerate_;
  out.degenerate = valid == 0;
  if (valid == 0) return out;
  const auto n = static_cast<double>(valid);
  out.f_adaptive = f_adaptive_ / n;
  out.f_weighted = f_weighted_ / n;
  for (int t = 0; t < kThresholds; ++t) {
    out.precision[t] = precision_[t] / n;
    out.recall[t] = recall_[t] / n;
    out.f_curve[t] = f_beta(out.precision[t], out.recall[t]);
  }
  return out;
}

}  // namespace recattn::metrics

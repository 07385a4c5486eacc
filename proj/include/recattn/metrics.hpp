#pragma once

#include <array>
#include <vector>

#include "recattn/image.hpp"

// Saliency evaluation: MAE, F-measure over 256 thresholds, adaptive F-measure
// and weighted F-measure. Saliency maps are single-channel Images in [0, 1];
// ground truth maps are binary (any value >= 0.5 counts as foreground).
namespace recattn::metrics {

inline constexpr double kBetaSquared = 0.3;
inline constexpr int kThresholds = 256;

/// Weighted F-measure constants: 7x7 Gaussian, sigma 5, and the decay rate of
/// background error importance with distance to the foreground.
inline constexpr int kWeightWindow = 7;
inline constexpr double kWeightSigma = 5.0;
inline constexpr double kDistanceDecay = -0.13862943611198906;  // ln(0.5) / 5

struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  /// Set when the ground truth has no foreground pixel; f is reported as 0.
  bool degenerate = false;
};

/// (1 + b2) P R / (b2 P + R), 0 when both are 0.
double f_beta(double precision, double recall);

double mae(const Image& sal, const Image& gt);

/// Precision/recall/F of an explicit binary prediction.
FScore f_measure_binary(const std::vector<bool>& prediction, const Image& gt);

/// Binarizes with round(255 * sal) >= threshold, threshold in [0, 255].
FScore f_measure_at(const Image& sal, const Image& gt, int threshold);

/// min(2 * mean(sal), 1), in the [0, 1] value domain.
double adaptive_threshold(const Image& sal);
/// Binarizes with sal >= adaptive_threshold(sal).
FScore f_adaptive(const Image& sal, const Image& gt);

/// Weighted F-measure with Gaussian-smoothed errors inside the foreground and
/// distance-dependent error importance outside it.
FScore f_weighted(const Image& sal, const Image& gt);

struct Curve {
  std::array<double, kThresholds> precision{};
  std::array<double, kThresholds> recall{};
  std::array<double, kThresholds> f{};
  bool degenerate = false;
};

/// F-measure at every threshold 0..255 from one pass over a 256-bin histogram.
Curve f_curve(const Image& sal, const Image& gt);

/// Exact Euclidean distance from every pixel to the nearest foreground pixel
/// and the row-major index of that pixel. Ties go to the smallest index.
struct DistanceField {
  std::vector<double> distance;
  std::vector<std::size_t> nearest;
};
DistanceField distance_to_foreground(const std::vector<bool>& foreground, std::size_t height,
                                     std::size_t width);

struct MetricsReport {
  double mae = 0.0;
  double f_adaptive = 0.0;
  double f_weighted = 0.0;
  std::array<double, kThresholds> f_curve{};
  std::array<double, kThresholds> precision{};
  std::array<double, kThresholds> recall{};
  bool degenerate = false;
};

MetricsReport evaluate(const Image& sal, const Image& gt);

/// Dataset aggregation: MAE over all images; adaptive and weighted F over
/// non-degenerate images; the curve from per-threshold mean precision and
/// recall (non-degenerate images).
class Aggregate {
 public:
  void add(const MetricsReport& report);
  std::size_t count() const { return count_; }
  std::size_t degenerate_count() const { return degenerate_; }
  MetricsReport result() const;

 private:
  std::size_t count_ = 0;
  std::size_t degenerate_ = 0;
  double mae_ = 0.0;
  double f_adaptive_ = 0.0;
  double f_weighted_ = 0.0;
  std::array<double, kThresholds> precision_{};
  std::array<double, kThresholds> recall_{};
};

}  // namespace recattn::metrics

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "recattn/dataset.hpp"
#include "recattn/losses.hpp"
#include "recattn/network.hpp"
#include "recattn/params.hpp"

namespace recattn::train {

struct TrainConfig {
  double base_lr = 0.005;
  double head_lr_multiplier = 10.0;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double poly_power = 0.9;
  std::size_t max_iters = 2000;
  std::size_t batch_size = 2;
  double lambda_coop = 1.0;
  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 500;
  std::size_t log_interval = 10;
  bool flip = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// base_lr * (1 - iter / max_iters)^poly_power for 0 <= iter <= max_iters.
double poly_lr(std::size_t iter, const TrainConfig& config);

/// Parameters outside the backbone ("backbone." prefix) train at
/// head_lr_multiplier times the scheduled rate.
double lr_multiplier(const std::string& name, const TrainConfig& config);

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * p
///   p <- p - lr * multiplier(p) * v
/// Gradients are cleared after every step.
class SgdMomentum {
 public:
  explicit SgdMomentum(const TrainConfig& config) : config_(config) {}

  void step(NetworkParams& params, double lr);
  const std::map<std::string, std::vector<double>>& velocity() const { return velocity_; }
  std::size_t iteration() const { return iteration_; }

 private:
  TrainConfig config_;
  std::map<std::string, std::vector<double>> velocity_;
  std::size_t iteration_ = 0;
};

struct LogRow {
  std::size_t iter = 0;
  losses::LossReport loss;
  double lr = 0.0;
};

std::string csv_header();
std::string csv_row(const LogRow& row);

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t iter, std::optional<losses::LossReport> last_finite);
  std::size_t iteration() const { return iter_; }
  const std::optional<losses::LossReport>& last_finite() const { return last_; }

 private:
  std::size_t iter_;
  std::optional<losses::LossReport> last_;
};

struct TrainResult {
  NetworkParams params;
  std::vector<LogRow> log;  ///< rows at every log_interval and the last iteration
};

/// Resizes the sample to the network input size (masks re-binarized).
data::Sample prepare_sample(const data::Sample& sample, const BackboneConfig& config);

/// Mean loss of one mini-batch with gradients accumulated into params.
losses::LossReport accumulate_batch(const std::vector<data::Sample>& batch, NetworkParams& params,
                                    const BackboneConfig& backbone, const ModelVariant& variant,
                                    double lambda);

/// End-to-end training. Deterministic given config.seed. When out_dir is set,
/// writes loss.csv, checkpoint_XXXXXX.bin every checkpoint_interval
/// iterations and checkpoint_final.bin.
TrainResult train(const std::vector<data::Sample>& dataset, const BackboneConfig& backbone,
                  const ModelVariant& variant, const TrainConfig& config,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  std::optional<NetworkParams> initial = std::nullopt);

}  // namespace recattn::train

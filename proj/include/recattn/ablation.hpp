#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recattn/config.hpp"
#include "recattn/dataset.hpp"
#include "recattn/fusion.hpp"
#include "recattn/metrics.hpp"
#include "recattn/network.hpp"

namespace recattn::ablation {

/// One trained configuration of the ablation study.
struct Setting {
  std::string name;  ///< row label, e.g. "Backbone+Two Branches"
  std::string slug;  ///< checkpoint subdirectory
  ModelVariant variant;
  bool coop_loss = true;
  FusionKind fusion = FusionKind::kSubtract;
};

/// The six model rows in table order: Backbone+Foreground, Backbone+Two
/// Branches, Background-RAM, Foreground-RAM, RecNet w/o cooperative loss, RecNet.
std::vector<Setting> model_settings();

/// Fusion rows, all evaluated on the full model: Foreground, 1-Background,
/// Foreground+1-Background, RecNet (background subtraction).
std::vector<std::pair<std::string, FusionKind>> fusion_settings();

struct Row {
  std::string table;  ///< "model" or "fusion"
  std::string setting;
  ModelVariant variant;
  bool coop_loss = true;
  FusionKind fusion = FusionKind::kSubtract;
  metrics::MetricsReport metrics;
  /// Mean of sigmoid(fg) * sigmoid(bg) over validation pixels; empty for the
  /// one-branch model.
  std::optional<double> overlap_mass;
};

/// Evaluates a trained model on a validation set.
Row evaluate_setting(const std::vector<data::Sample>& val, const NetworkParams& params,
                     const BackboneConfig& backbone, const ModelVariant& variant, FusionKind fusion);

class MissingCheckpoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const Setting& setting);

/// Trains (when train_missing is set and the checkpoint is absent) and
/// evaluates every setting. Checkpoints live in <dir>/<slug>/checkpoint_final.bin.
std::vector<Row> run(const RunConfig& config, const std::vector<data::Sample>& train_set,
                     const std::vector<data::Sample>& val_set, const std::filesystem::path& dir,
                     bool train_missing, std::ostream* progress = nullptr);

std::string csv_header();
std::string csv_row(const Row& row);

}  // namespace recattn::ablation

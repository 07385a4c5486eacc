#include "recattn/ablation.hpp"

#include <cstdio>
#include <ostream>

#include "recattn/train.hpp"

namespace fs = std::filesystem;

namespace recattn::ablation {

std::vector<Setting> model_settings() {
  using B = BranchMode;
  using R = RamMode;
  return {
      {"Backbone+Foreground", "backbone_fg", {B::kOne, R::kOff}, false, FusionKind::kForegroundOnly},
      {"Backbone+Two Branches", "two_branches", {B::kTwo, R::kOff}, false, FusionKind::kSubtract},
      {"Background-RAM", "background_ram", {B::kTwo, R::kBackgroundOnly}, false, FusionKind::kSubtract},
      {"Foreground-RAM", "foreground_ram", {B::kTwo, R::kForegroundOnly}, false, FusionKind::kSubtract},
      {"RecNet w/o cooperative loss", "recnet_no_coop", {B::kTwo, R::kFull}, false, FusionKind::kSubtract},
      {"RecNet", "recnet", {B::kTwo, R::kFull}, true, FusionKind::kSubtract},
  };
}

std::vector<std::pair<std::string, FusionKind>> fusion_settings() {
  return {{"Foreground", FusionKind::kForegroundOnly},
          {"1-Background", FusionKind::kInvertedBackground},
          {"Foreground+1-Background", FusionKind::kAveraged},
          {"RecNet", FusionKind::kSubtract}};
}

Row evaluate_setting(const std::vector<data::Sample>& val, const NetworkParams& params,
                     const BackboneConfig& backbone, const ModelVariant& variant, FusionKind fusion) {
  Row row;
  row.variant = variant;
  row.fusion = fusion;
  metrics::Aggregate agg;
  double overlap = 0.0;
  std::size_t pixels = 0;
  const InferenceOptions options{backbone, variant, fusion};
  for (const auto& sample : val) {
    const SaliencyPair pair = infer_image(sample.image, params, options);
    agg.add(metrics::evaluate(pair.fused, sample.mask));
    for (std::size_t i = 0; i < pair.fg.values.size(); ++i) overlap += pair.fg.values[i] * pair.bg.values[i];
    pixels += pair.fg.values.size();
  }
  row.metrics = agg.result();
  if (variant.branches == BranchMode::kTwo && pixels > 0) row.overlap_mass = overlap / pixels;
  return row;
}

fs::path checkpoint_path(const fs::path& dir, const Setting& setting) {
  return dir / setting.slug / "checkpoint_final.bin";
}

std::vector<Row> run(const RunConfig& config, const std::vector<data::Sample>& train_set,
                     const std::vector<data::Sample>& val_set, const fs::path& dir, bool train_missing,
                     std::ostream* progress) {
  const auto settings = model_settings();
  // Fail before any training when checkpoints are required but absent.
  if (!train_missing) {
    std::string missing;
    for (const auto& s : settings)
      if (!fs::exists(checkpoint_path(dir, s))) missing += "\n  " + checkpoint_path(dir, s).string();
    if (!missing.empty()) throw MissingCheckpoint("missing checkpoint(s):" + missing);
  }

  std::vector<Row> rows;
  std::optional<NetworkParams> full_model;
  for (const auto& s : settings) {
    const fs::path ckpt = checkpoint_path(dir, s);
    NetworkParams params;
    if (fs::exists(ckpt)) {
      params = load_checkpoint(ckpt);
    } else {
      if (progress) *progress << "training " << s.name << "\n" << std::flush;
      RunConfig rc = config;
      rc.variant = s.variant;
      rc.coop_loss = s.coop_loss;
      params = train::train(train_set, rc.backbone, rc.variant, rc.training(), ckpt.parent_path()).params;
    }
    Row row = evaluate_setting(val_set, params, config.backbone, s.variant, s.fusion);
    row.table = "model";
    row.setting = s.name;
    row.coop_loss = s.coop_loss;
    rows.push_back(std::move(row));
    if (s.slug == "recnet") full_model = std::move(params);
  }
  for (const auto& [name, kind] : fusion_settings()) {
    Row row = evaluate_setting(val_set, *full_model, config.backbone, ModelVariant{}, kind);
    row.table = "fusion";
    row.setting = name;
    row.coop_loss = true;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_header() {
  return "table,setting,branches,ram,coop_loss,fusion,mae,f_adaptive,f_weighted,overlap_mass";
}

std::string csv_row(const Row& row) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%s,%s,%.6f,%.6f,%.6f,", row.table.c_str(),
                row.setting.c_str(), to_string(row.variant.branches).c_str(),
                to_string(row.variant.ram).c_str(), row.coop_loss ? "on" : "off",
                to_string(row.fusion).c_str(), row.metrics.mae, row.metrics.f_adaptive,
                row.metrics.f_weighted);
  std::string out = buf;
  if (row.overlap_mass) {
    std::snprintf(buf, sizeof(buf), "%.6f", *row.overlap_mass);
    out += buf;
  }
  return out;
}

}  // namespace recattn::ablation

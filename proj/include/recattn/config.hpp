#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "recattn/dataset.hpp"
#include "recattn/fusion.hpp"
#include "recattn/network.hpp"
#include "recattn/train.hpp"

namespace recattn {

/// Bad config text or value. line() is 0 for values that did not come from a file.
class ConfigError : public std::invalid_argument {
 public:
  enum Verbatim { kVerbatim };
  ConfigError(const std::string& message, std::size_t line = 0);
  ConfigError(const std::string& message, std::size_t line, Verbatim);
  std::size_t line() const { return line_; }
  /// Message without the location prefix.
  const std::string& raw() const { return raw_; }

 private:
  std::size_t line_;
  std::string raw_;
};

/// Everything a subcommand needs. One seed drives every random stream
/// (init, shuffle, flip, synth, synth_val).
struct RunConfig {
  std::uint64_t seed = 1;
  BackboneConfig backbone;
  train::TrainConfig train;  ///< train.seed is ignored; see training()
  ModelVariant variant;
  bool coop_loss = true;
  FusionKind fusion = FusionKind::kSubtract;
  data::SynthSpec synth;  ///< synth.seed is ignored; see synthesis()
  std::size_t train_count = 20;
  std::size_t val_count = 20;

  std::string data_dir = "data/train";
  std::string val_dir = "data/val";
  std::string checkpoint = "runs/train/checkpoint_final.bin";

  /// TrainConfig with the run seed, and lambda forced to 0 when coop_loss is off.
  train::TrainConfig training() const;
  data::SynthSpec synthesis() const;
  InferenceOptions inference() const;

  void validate() const;
  bool operator==(const RunConfig&) const;
};

/// Parses `key = value` lines; '#' starts a comment. Unknown keys, repeated
/// keys and malformed values raise ConfigError with the line number.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Applies one key/value pair (used for command-line overrides).
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Every key with its current value, one per line, parseable by parse_config.
std::string dump_config(const RunConfig& config);

std::vector<std::string> config_keys();

}  // namespace recattn

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "recattn/params.hpp"
#include "recattn/tensor.hpp"

namespace recattn {

enum class Branch { kForeground, kBackground };

/// Desk-scale encoder and block widths.
struct BackboneConfig {
  std::array<std::size_t, 5> stage_channels{8, 16, 16, 32, 32};
  std::array<std::size_t, 5> stage_strides{1, 2, 2, 1, 1};
  std::array<std::size_t, 5> stage_dilations{1, 1, 1, 2, 4};
  std::size_t integration_channels = 16;
  std::size_t head_channels = 16;
  /// Width d of the score projections inside the attention module.
  std::size_t attention_channels = 8;
  std::size_t input_height = 48;
  std::size_t input_width = 48;

  /// Throws std::invalid_argument when any field is out of range or the
  /// side-outs cannot be brought to 1/8 resolution.
  void validate() const;

  /// Cumulative stride of each stage's side-out.
  std::array<std::size_t, 5> cumulative_strides() const;
  /// Number of stride-2 convolutions each integration path applies.
  std::array<std::size_t, 5> integration_downsamples() const;
  std::size_t feature_channels() const { return 5 * integration_channels; }

  bool operator==(const BackboneConfig&) const = default;
};

enum class BranchMode { kOne, kTwo };

/// Which of the two residual attention updates run. kForegroundOnly updates F
/// from the background (the background update is disabled); kBackgroundOnly is
/// the reverse.
enum class RamMode { kOff, kForegroundOnly, kBackgroundOnly, kFull };

struct ModelVariant {
  BranchMode branches = BranchMode::kTwo;
  RamMode ram = RamMode::kFull;
  bool operator==(const ModelVariant&) const = default;
};

std::string to_string(BranchMode mode);
std::string to_string(RamMode mode);
BranchMode parse_branch_mode(const std::string& text);
RamMode parse_ram_mode(const std::string& text);

/// Creates every parameter of the two-branch model: uniform weights in
/// +-sqrt(6 / fan_in), zero biases, alpha = beta = 0.
NetworkParams init_params(const BackboneConfig& config, std::uint64_t seed);

std::string branch_prefix(Branch branch);

/// Five side-outs, one per conv+relu stage.
std::vector<Tensor> backbone_forward(Tape& tape, const Tensor& image, const NetworkParams& params,
                                     const BackboneConfig& config);

/// Brings each side-out to 1/8 resolution with conv3x3, conv3x3, conv1x1 (+relu)
/// and concatenates them to 5 * integration_channels channels.
Tensor integration_forward(Tape& tape, const std::vector<Tensor>& sideouts,
                           const NetworkParams& params, const BackboneConfig& config,
                           Branch branch);

/// conv3x3+relu, conv3x3+relu, conv1x1 -> single-channel logits.
Tensor head_forward(Tape& tape, const Tensor& features, const NetworkParams& params,
                    Branch branch);

/// Bilinear x8 upsampling of a 1 x h x w map to 1 x height x width.
Tensor upsample_to_input(Tape& tape, const Tensor& map, std::size_t height, std::size_t width);

struct ForwardResult {
  Tensor fg_logits;  ///< 1 x H x W at input resolution
  Tensor bg_logits;  ///< undefined for the one-branch variant
  Tensor attention;  ///< N x N weights, undefined when the module is off
  Tensor fg_coarse;  ///< 1 x H/8 x W/8 logits before upsampling
  Tensor bg_coarse;
};

ForwardResult model_forward(Tape& tape, const Tensor& image, const NetworkParams& params,
                            const BackboneConfig& config, const ModelVariant& variant);

}  // namespace recattn

#include "recattn/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "recattn/attention.hpp"
#include "recattn/ops.hpp"
#include "recattn/rng.hpp"

namespace recattn {
namespace {

std::string stage_name(std::size_t i) { return "backbone.stage" + std::to_string(i + 1); }

std::string side_conv_name(Branch branch, std::size_t side, std::size_t conv) {
  return branch_prefix(branch) + ".integration.side" + std::to_string(side + 1) + ".conv" +
         std::to_string(conv + 1);
}

std::string head_conv_name(Branch branch, std::size_t conv) {
  return branch_prefix(branch) + ".head.conv" + std::to_string(conv + 1);
}

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(make_stream(seed, "init")) {}

  void conv(NetworkParams& params, const std::string& name, std::size_t cout, std::size_t cin,
            std::size_t k) {
    const std::size_t fan_in = cin * k * k;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(cout * fan_in);
    for (auto& v : w) v = dist(rng_);
    params.add(name + ".weight", Tensor({cout, cin, k, k}, std::move(w), true));
    params.add(name + ".bias", Tensor::zeros({cout}, true));
  }

 private:
  std::mt19937_64 rng_;
};

Tensor conv(Tape& tape, const Tensor& x, const NetworkParams& params, const std::string& name,
            std::size_t stride = 1, std::size_t dilation = 1) {
  return ops::conv2d(tape, x, params.at(name + ".weight"), params.at(name + ".bias"), stride,
                     dilation);
}

Tensor conv_relu(Tape& tape, const Tensor& x, const NetworkParams& params, const std::string& name,
                 std::size_t stride = 1, std::size_t dilation = 1) {
  return ops::relu(tape, conv(tape, x, params, name, stride, dilation));
}

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

std::array<std::size_t, 5> BackboneConfig::cumulative_strides() const {
  std::array<std::size_t, 5> out{};
  std::size_t acc = 1;
  for (std::size_t i = 0; i < 5; ++i) {
    acc *= stage_strides[i];
    out[i] = acc;
  }
  return out;
}

std::array<std::size_t, 5> BackboneConfig::integration_downsamples() const {
  const auto strides = cumulative_strides();
  std::array<std::size_t, 5> out{};
  for (std::size_t i = 0; i < 5; ++i) {
    if (strides[i] == 0 || 8 % strides[i] != 0 || !is_power_of_two(strides[i])) {
      throw std::invalid_argument("side-out " + std::to_string(i + 1) + " has cumulative stride " +
                                  std::to_string(strides[i]) +
                                  ", which the integration stride plan cannot bring to 1/8");
    }
    std::size_t factor = 8 / strides[i];
    std::size_t count = 0;
    while (factor > 1) {
      factor /= 2;
      ++count;
    }
    out[i] = count;
  }
  return out;
}

void BackboneConfig::validate() const {
  for (std::size_t i = 0; i < 5; ++i) {
    if (stage_channels[i] == 0) throw std::invalid_argument("stage_channels must be positive");
    if (stage_strides[i] != 1 && stage_strides[i] != 2) {
      throw std::invalid_argument("stage_strides must be 1 or 2");
    }
    if (stage_dilations[i] == 0) throw std::invalid_argument("stage_dilations must be positive");
  }
  if (integration_channels == 0 || head_channels == 0 || attention_channels == 0) {
    throw std::invalid_argument("integration_channels, head_channels and attention_channels must be positive");
  }
  if (input_height == 0 || input_width == 0 || input_height % 8 != 0 || input_width % 8 != 0) {
    throw std::invalid_argument("input size " + std::to_string(input_height) + "x" +
                                std::to_string(input_width) + " is not divisible by 8");
  }
  (void)integration_downsamples();
}

std::string to_string(BranchMode mode) { return mode == BranchMode::kOne ? "one" : "two"; }

std::string to_string(RamMode mode) {
  switch (mode) {
    case RamMode::kOff: return "off";
    case RamMode::kForegroundOnly: return "fg_only";
    case RamMode::kBackgroundOnly: return "bg_only";
    case RamMode::kFull: return "full";
  }
  return "full";
}

BranchMode parse_branch_mode(const std::string& text) {
  if (text == "one") return BranchMode::kOne;
  if (text == "two") return BranchMode::kTwo;
  throw std::invalid_argument("branches must be one|two, got '" + text + "'");
}

RamMode parse_ram_mode(const std::string& text) {
  if (text == "off") return RamMode::kOff;
  if (text == "fg_only") return RamMode::kForegroundOnly;
  if (text == "bg_only") return RamMode::kBackgroundOnly;
  if (text == "full") return RamMode::kFull;
  throw std::invalid_argument("ram must be off|fg_only|bg_only|full, got '" + text + "'");
}

std::string branch_prefix(Branch branch) { return branch == Branch::kForeground ? "fg" : "bg"; }

NetworkParams init_params(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  NetworkParams params;
  Initializer init(seed);

  std::size_t cin = 3;
  for (std::size_t i = 0; i < 5; ++i) {
    init.conv(params, stage_name(i), config.stage_channels[i], cin, 3);
    cin = config.stage_channels[i];
  }

  const std::size_t c = config.integration_channels;
  for (Branch branch : {Branch::kForeground, Branch::kBackground}) {
    for (std::size_t side = 0; side < 5; ++side) {
      init.conv(params, side_conv_name(branch, side, 0), c, config.stage_channels[side], 3);
      init.conv(params, side_conv_name(branch, side, 1), c, c, 3);
      init.conv(params, side_conv_name(branch, side, 2), c, c, 1);
    }
  }

  const std::size_t features = config.feature_channels();
  init.conv(params, "ram.f1", features, features, 1);
  init.conv(params, "ram.b1", features, features, 1);
  init.conv(params, "ram.f2", config.attention_channels, features, 1);
  init.conv(params, "ram.b2", config.attention_channels, features, 1);
  params.add("ram.alpha", Tensor::scalar(0.0, true));
  params.add("ram.beta", Tensor::scalar(0.0, true));

  for (Branch branch : {Branch::kForeground, Branch::kBackground}) {
    init.conv(params, head_conv_name(branch, 0), config.head_channels, features, 3);
    init.conv(params, head_conv_name(branch, 1), config.head_channels, config.head_channels, 3);
    init.conv(params, head_conv_name(branch, 2), 1, config.head_channels, 1);
  }
  return params;
}

std::vector<Tensor> backbone_forward(Tape& tape, const Tensor& image, const NetworkParams& params,
                                     const BackboneConfig& config) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("backbone_forward: expected a 3 x H x W image, got " + to_string(image.shape()));
  }
  if (image.dim(1) % 8 != 0 || image.dim(2) % 8 != 0) {
    throw ShapeError("backbone_forward: image size " + to_string(image.shape()) +
                     " is not divisible by 8");
  }
  std::vector<Tensor> sideouts;
  sideouts.reserve(5);
  Tensor x = image;
  for (std::size_t i = 0; i < 5; ++i) {
    x = conv_relu(tape, x, params, stage_name(i), config.stage_strides[i], config.stage_dilations[i]);
    sideouts.push_back(x);
  }
  return sideouts;
}

Tensor integration_forward(Tape& tape, const std::vector<Tensor>& sideouts,
                           const NetworkParams& params, const BackboneConfig& config,
                           Branch branch) {
  if (sideouts.size() != 5) throw ShapeError("integration_forward: expected 5 side-outs");
  const auto downsamples = config.integration_downsamples();
  const std::size_t target_h = sideouts[0].dim(1) * config.stage_strides[0] / 8;
  const std::size_t target_w = sideouts[0].dim(2) * config.stage_strides[0] / 8;

  std::vector<Tensor> paths;
  paths.reserve(5);
  for (std::size_t side = 0; side < 5; ++side) {
    Tensor x = sideouts[side];
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t stride = c < downsamples[side] ? 2 : 1;
      x = conv_relu(tape, x, params, side_conv_name(branch, side, c), stride);
    }
    if (x.dim(1) != target_h || x.dim(2) != target_w) {
      throw ShapeError("integration_forward: side-out " + std::to_string(side + 1) + " reached " +
                       to_string(x.shape()) + " instead of 1/8 resolution");
    }
    paths.push_back(x);
  }
  return ops::concat_channels(tape, paths);
}

Tensor head_forward(Tape& tape, const Tensor& features, const NetworkParams& params,
                    Branch branch) {
  Tensor x = conv_relu(tape, features, params, head_conv_name(branch, 0));
  x = conv_relu(tape, x, params, head_conv_name(branch, 1));
  return conv(tape, x, params, head_conv_name(branch, 2));
}

Tensor upsample_to_input(Tape& tape, const Tensor& map, std::size_t height, std::size_t width) {
  if (map.rank() != 3 || height != map.dim(1) * 8 || width != map.dim(2) * 8) {
    throw ShapeError("upsample_to_input: target " + std::to_string(height) + "x" +
                     std::to_string(width) + " is not 8x the map " + to_string(map.shape()));
  }
  return ops::upsample_bilinear(tape, map, 8);
}

ForwardResult model_forward(Tape& tape, const Tensor& image, const NetworkParams& params,
                            const BackboneConfig& config, const ModelVariant& variant) {
  const auto sideouts = backbone_forward(tape, image, params, config);
  const std::size_t h = image.dim(1), w = image.dim(2);

  ForwardResult out;
  Tensor fg = integration_forward(tape, sideouts, params, config, Branch::kForeground);
  if (variant.branches == BranchMode::kOne) {
    out.fg_coarse = head_forward(tape, fg, params, Branch::kForeground);
    out.fg_logits = upsample_to_input(tape, out.fg_coarse, h, w);
    return out;
  }
  Tensor bg = integration_forward(tape, sideouts, params, config, Branch::kBackground);
  auto ram = attention::ram_forward(tape, fg, bg, params, variant.ram);
  out.attention = ram.weights;
  out.fg_coarse = head_forward(tape, ram.foreground, params, Branch::kForeground);
  out.bg_coarse = head_forward(tape, ram.background, params, Branch::kBackground);
  out.fg_logits = upsample_to_input(tape, out.fg_coarse, h, w);
  out.bg_logits = upsample_to_input(tape, out.bg_coarse, h, w);
  return out;
}

}  // namespace recattn

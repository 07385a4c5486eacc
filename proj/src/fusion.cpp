#include "recattn/fusion.hpp"

#include <algorithm>
#include <stdexcept>

#include "recattn/ops.hpp"

namespace recattn {
namespace {

void check_unit_range(const Image& map, const char* what) {
  for (double v : map.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string("fuse: ") + what + " outside [0, 1]");
  }
}

Image probabilities(const Tensor& logits, std::size_t height, std::size_t width) {
  Tape tape(false);
  Image map = from_tensor(ops::sigmoid(tape, logits));
  return resize_bilinear(map, height, width);
}

}  // namespace

std::string to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::kSubtract: return "subtract";
    case FusionKind::kForegroundOnly: return "foreground_only";
    case FusionKind::kInvertedBackground: return "inverted_background";
    case FusionKind::kAveraged: return "averaged";
  }
  return "subtract";
}

FusionKind parse_fusion_kind(const std::string& text) {
  if (text == "subtract") return FusionKind::kSubtract;
  if (text == "foreground_only") return FusionKind::kForegroundOnly;
  if (text == "inverted_background") return FusionKind::kInvertedBackground;
  if (text == "averaged") return FusionKind::kAveraged;
  throw std::invalid_argument(
      "fusion must be subtract|foreground_only|inverted_background|averaged, got '" + text + "'");
}

Image fuse(const Image& fg, const Image& bg, FusionKind kind) {
  if (fg.channels != bg.channels || fg.height != bg.height || fg.width != bg.width) {
    throw std::invalid_argument("fuse: foreground and background maps differ in shape");
  }
  check_unit_range(fg, "foreground");
  check_unit_range(bg, "background");
  Image out = fg;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double f = fg.values[i], b = bg.values[i];
    switch (kind) {
      case FusionKind::kSubtract: out.values[i] = std::max(f - b, 0.0); break;
      case FusionKind::kForegroundOnly: out.values[i] = f; break;
      case FusionKind::kInvertedBackground: out.values[i] = 1.0 - b; break;
      case FusionKind::kAveraged: out.values[i] = (f + (1.0 - b)) / 2.0; break;
    }
  }
  return out;
}

SaliencyPair infer_image(const Image& image, const NetworkParams& params,
                         const InferenceOptions& options, Tensor* attention) {
  if (image.channels != 3) throw std::invalid_argument("infer_image: expected a 3-channel image");
  const auto& cfg = options.backbone;
  const Image resized = resize_bilinear(image, cfg.input_height, cfg.input_width);

  Tape tape(false);
  const ForwardResult out = model_forward(tape, to_tensor(resized), params, cfg, options.variant);

  SaliencyPair pair;
  pair.fusion_kind = options.fusion;
  pair.fg = probabilities(out.fg_logits, image.height, image.width);
  pair.bg = out.bg_logits.defined() ? probabilities(out.bg_logits, image.height, image.width)
                                    : Image(1, image.height, image.width, 0.0);
  pair.fused = fuse(pair.fg, pair.bg, options.fusion);
  if (attention != nullptr) *attention = out.attention;
  return pair;
}

}  // namespace recattn

#pragma once

#include <string>

#include "recattn/image.hpp"
#include "recattn/network.hpp"
#include "recattn/params.hpp"

namespace recattn {

enum class FusionKind { kSubtract, kForegroundOnly, kInvertedBackground, kAveraged };

std::string to_string(FusionKind kind);
FusionKind parse_fusion_kind(const std::string& text);

/// Per-image output of the two branches plus the fused saliency map, all
/// single-channel and in [0, 1].
struct SaliencyPair {
  Image fg;
  Image bg;
  Image fused;
  FusionKind fusion_kind = FusionKind::kSubtract;
};

/// subtract: relu(fg - bg); foreground_only: fg; inverted_background: 1 - bg;
/// averaged: (fg + (1 - bg)) / 2.
Image fuse(const Image& fg, const Image& bg, FusionKind kind);

struct InferenceOptions {
  BackboneConfig backbone;
  ModelVariant variant;
  FusionKind fusion = FusionKind::kSubtract;
};

/// Resizes to the configured input size, runs the network, applies the
/// sigmoid to the x8-upsampled logits, resizes back to the original size and
/// fuses. For the one-branch model bg is all zeros. When `attention` is
/// non-null it receives the N x N attention weights (undefined if none).
SaliencyPair infer_image(const Image& image, const NetworkParams& params,
                         const InferenceOptions& options, Tensor* attention = nullptr);

}  // namespace recattn

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "recattn/image.hpp"

namespace recattn::data {

struct Sample {
  Image image;  ///< 3 x H x W in [0, 1]
  Image mask;   ///< 1 x H x W, values in {0, 1}
  std::string id;
};

/// Image/mask pairs under <root>/images and <root>/masks matched by file stem.
/// Listing happens up front (lexicographic stem order); files are decoded on
/// demand by load().
class Dataset {
 public:
  explicit Dataset(const std::filesystem::path& root);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::string& id(std::size_t i) const { return entries_.at(i).stem; }
  Sample load(std::size_t i) const;
  std::vector<Sample> load_all() const;

 private:
  struct Entry {
    std::string stem;
    std::filesystem::path image;
    std::filesystem::path mask;
  };
  std::vector<Entry> entries_;
};

/// Thresholds an 8-bit-valued map at 128/255.
Image binarize_mask(const Image& mask);

Sample flip_sample(const Sample& sample);
/// Flips image and mask together with probability 0.5.
Sample augment_flip(const Sample& sample, std::mt19937_64& rng);

enum class ShapeKind { kDisc, kRectangle, kTriangle };

struct SceneObject {
  ShapeKind kind = ShapeKind::kDisc;
  double center_row = 0.0;
  double center_col = 0.0;
  double radius = 0.0;  ///< half extent for rectangles and triangles
  double aspect = 1.0;  ///< rectangles: width / height
  std::array<double, 3> color{};
};

struct Scene {
  std::size_t size = 48;
  std::array<double, 3> background{};
  std::vector<SceneObject> objects;  ///< painted in order; later ones occlude
  double noise = 0.0;                ///< uniform per-pixel noise amplitude
  std::uint64_t noise_seed = 0;
};

struct RenderedScene {
  Image image;
  Image mask;
  std::vector<std::size_t> visible_area;  ///< per object, after occlusion
  std::vector<double> contrast;           ///< per object, visible_area * color distance
  std::size_t salient = 0;                ///< argmax of contrast
};

/// Euclidean RGB distance between an object color and the background.
double color_distance(const std::array<double, 3>& a, const std::array<double, 3>& b);

/// Paints the scene; the mask marks the visible pixels of the object with the
/// largest visible_area * color_distance. Ties go to the earlier object.
RenderedScene render_scene(const Scene& scene);

struct SynthSpec {
  std::size_t canvas_size = 48;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  std::vector<ShapeKind> shapes{ShapeKind::kDisc, ShapeKind::kRectangle, ShapeKind::kTriangle};
  /// The winning contrast score must exceed the runner-up by this factor.
  double min_score_ratio = 1.5;
  /// Minimum visible area of the salient object, as a fraction of the canvas.
  double min_salient_fraction = 0.03;
  double noise = 0.02;
  std::uint64_t seed = 7;

  void validate() const;
};

std::string to_string(ShapeKind kind);

/// Draws one scene that satisfies the contrast rule.
Scene sample_scene(const SynthSpec& spec, std::mt19937_64& rng);

/// Writes n pairs as <root>/images/synth_XXXX.ppm and <root>/masks/synth_XXXX.pgm,
/// plus <root>/spec.txt. `stream` names the RNG sub-stream, so a validation
/// set can share the seed without sharing scenes.
void generate_synthetic(const SynthSpec& spec, std::size_t n, const std::filesystem::path& root,
                        std::string_view stream = "synth");

}  // namespace recattn::data

#include "recattn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "recattn/rng.hpp"

namespace fs = std::filesystem;

namespace recattn::data {
namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::map<std::string, fs::path> list_by_stem(const fs::path& dir,
                                             std::initializer_list<const char*> extensions) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower(entry.path().extension().string());
    if (std::none_of(extensions.begin(), extensions.end(), [&](const char* e) { return ext == e; })) {
      continue;
    }
    const std::string stem = entry.path().stem().string();
    auto [it, inserted] = out.emplace(stem, entry.path());
    if (!inserted) {
      // Deterministic pick when both foo.png and foo.pgm exist.
      if (entry.path().filename() < it->second.filename()) it->second = entry.path();
    }
  }
  return out;
}

bool inside(const SceneObject& o, double r, double c) {
  const double dr = r - o.center_row, dc = c - o.center_col;
  switch (o.kind) {
    case ShapeKind::kDisc:
      return dr * dr + dc * dc <= o.radius * o.radius;
    case ShapeKind::kRectangle:
      return std::abs(dr) <= o.radius && std::abs(dc) <= o.radius * o.aspect;
    case ShapeKind::kTriangle: {
      // Apex up at (center_row - radius), base at (center_row + radius).
      if (dr < -o.radius || dr > o.radius) return false;
      const double half_width = o.radius * (dr + o.radius) / (2.0 * o.radius);
      return std::abs(dc) <= half_width;
    }
  }
  return false;
}

}  // namespace

Dataset::Dataset(const fs::path& root) {
  if (!fs::exists(root)) throw std::runtime_error("dataset root does not exist: " + root.string());
  const auto images = list_by_stem(root / "images", {".png", ".pgm", ".ppm"});
  const auto masks = list_by_stem(root / "masks", {".png", ".pgm"});
  std::vector<std::string> missing;
  for (const auto& [stem, path] : images) {
    auto it = masks.find(stem);
    if (it == masks.end()) {
      missing.push_back(stem);
      continue;
    }
    entries_.push_back({stem, path, it->second});
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
    throw std::runtime_error("missing mask for image(s): " + list);
  }
}

Sample Dataset::load(std::size_t i) const {
  const Entry& e = entries_.at(i);
  Sample s;
  s.id = e.stem;
  Image image = read_image(e.image);
  if (image.channels == 1) {
    Image rgb(3, image.height, image.width);
    for (std::size_t c = 0; c < 3; ++c)
      std::copy(image.values.begin(), image.values.end(), rgb.values.begin() + c * image.pixels());
    image = std::move(rgb);
  }
  Image mask = read_image(e.mask);
  if (mask.channels != 1) throw ImageIoError("mask must be grayscale: " + e.mask.string());
  if (mask.height != image.height || mask.width != image.width) {
    throw ImageIoError("mask size differs from image for " + e.stem);
  }
  s.image = std::move(image);
  s.mask = binarize_mask(mask);
  return s;
}

std::vector<Sample> Dataset::load_all() const {
  std::vector<Sample> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(load(i));
  return out;
}

Image binarize_mask(const Image& mask) {
  Image out = mask;
  for (auto& v : out.values) v = quantize(v) >= 128 ? 1.0 : 0.0;
  return out;
}

Sample flip_sample(const Sample& sample) {
  return {flip_horizontal(sample.image), flip_horizontal(sample.mask), sample.id};
}

Sample augment_flip(const Sample& sample, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  return coin(rng) ? flip_sample(sample) : sample;
}

double color_distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

RenderedScene render_scene(const Scene& scene) {
  const std::size_t n = scene.size;
  RenderedScene out;
  out.image = Image(3, n, n);
  out.mask = Image(1, n, n, 0.0);

  // Owner of each pixel: index of the topmost object, or -1 for background.
  std::vector<int> owner(n * n, -1);
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        if (inside(scene.objects[k], r + 0.5, c + 0.5)) owner[r * n + c] = static_cast<int>(k);
  }

  out.visible_area.assign(scene.objects.size(), 0);
  for (int o : owner)
    if (o >= 0) ++out.visible_area[static_cast<std::size_t>(o)];
  out.contrast.resize(scene.objects.size());
  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    out.contrast[k] = static_cast<double>(out.visible_area[k]) *
                      color_distance(scene.objects[k].color, scene.background);
    if (out.contrast[k] > out.contrast[out.salient]) out.salient = k;
  }

  std::mt19937_64 noise_rng(scene.noise_seed);
  std::uniform_real_distribution<double> noise(-scene.noise, scene.noise);
  for (std::size_t i = 0; i < n * n; ++i) {
    const auto& color =
        owner[i] < 0 ? scene.background : scene.objects[static_cast<std::size_t>(owner[i])].color;
    for (std::size_t c = 0; c < 3; ++c) {
      const double jitter = scene.noise > 0.0 ? noise(noise_rng) : 0.0;
      out.image.values[c * n * n + i] = std::clamp(color[c] + jitter, 0.0, 1.0);
    }
    if (!scene.objects.empty() && owner[i] == static_cast<int>(out.salient)) out.mask.values[i] = 1.0;
  }
  return out;
}

void SynthSpec::validate() const {
  if (canvas_size < 16 || canvas_size % 8 != 0) {
    throw std::invalid_argument("canvas_size must be a multiple of 8 and at least 16");
  }
  if (min_objects < 1 || min_objects > max_objects) {
    throw std::invalid_argument("object count range must satisfy 1 <= min <= max");
  }
  const std::size_t capacity = (canvas_size / 8) * (canvas_size / 8);
  if (max_objects > capacity) {
    throw std::invalid_argument("canvas " + std::to_string(canvas_size) + " too small for " +
                                std::to_string(max_objects) + " objects (capacity " +
                                std::to_string(capacity) + ")");
  }
  if (shapes.empty()) throw std::invalid_argument("shape set must not be empty");
  if (min_score_ratio < 1.0) throw std::invalid_argument("min_score_ratio must be >= 1");
  if (noise < 0.0 || noise > 0.5) throw std::invalid_argument("noise must be in [0, 0.5]");
}

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kDisc: return "disc";
    case ShapeKind::kRectangle: return "rectangle";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "disc";
}

Scene sample_scene(const SynthSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const auto size = static_cast<double>(spec.canvas_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(spec.min_objects, spec.max_objects);
  std::uniform_int_distribution<std::size_t> pick_shape(0, spec.shapes.size() - 1);
  std::uniform_real_distribution<double> radius(size / 10.0, size / 4.0);
  std::uniform_real_distribution<double> aspect(0.6, 1.6);

  constexpr int kMaxAttempts = 10000;
  constexpr double kMinSalientDistance = 0.35;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Scene scene;
    scene.size = spec.canvas_size;
    for (auto& v : scene.background) v = unit(rng);
    const std::size_t k = count(rng);
    for (std::size_t i = 0; i < k; ++i) {
      SceneObject o;
      o.kind = spec.shapes[pick_shape(rng)];
      o.radius = radius(rng);
      o.aspect = o.kind == ShapeKind::kRectangle ? aspect(rng) : 1.0;
      const double half_w = o.radius * o.aspect;
      o.center_row = o.radius + unit(rng) * (size - 2.0 * o.radius);
      o.center_col = std::min(half_w, size / 2.0) + unit(rng) * std::max(size - 2.0 * half_w, 0.0);
      for (auto& v : o.color) v = unit(rng);
      scene.objects.push_back(o);
    }
    scene.noise = spec.noise;
    scene.noise_seed = rng();

    const RenderedScene r = render_scene(scene);
    const double area = static_cast<double>(r.visible_area[r.salient]);
    if (area < spec.min_salient_fraction * size * size || area >= size * size) continue;
    if (color_distance(scene.objects[r.salient].color, scene.background) < kMinSalientDistance) continue;
    double runner_up = 0.0;
    for (std::size_t i = 0; i < r.contrast.size(); ++i)
      if (i != r.salient) runner_up = std::max(runner_up, r.contrast[i]);
    if (runner_up > 0.0 && r.contrast[r.salient] < spec.min_score_ratio * runner_up) continue;
    return scene;
  }
  throw std::runtime_error("could not sample a scene satisfying the contrast rule");
}

void generate_synthetic(const SynthSpec& spec, std::size_t n, const fs::path& root,
                        std::string_view stream) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("generate_synthetic: n must be >= 1");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  auto rng = make_stream(spec.seed, stream);
  for (std::size_t i = 0; i < n; ++i) {
    const Scene scene = sample_scene(spec, rng);
    const RenderedScene r = render_scene(scene);
    std::ostringstream stem;
    stem << "synth_" << std::setw(4) << std::setfill('0') << i;
    write_image(r.image, root / "images" / (stem.str() + ".ppm"));
    write_image(r.mask, root / "masks" / (stem.str() + ".pgm"));
  }
  std::ofstream meta(root / "spec.txt", std::ios::trunc);
  meta << "canvas_size = " << spec.canvas_size << "\n"
       << "min_objects = " << spec.min_objects << "\n"
       << "max_objects = " << spec.max_objects << "\n"
       << "shapes = ";
  for (std::size_t i = 0; i < spec.shapes.size(); ++i) meta << (i ? "," : "") << to_string(spec.shapes[i]);
  meta << "\n"
       << "min_score_ratio = " << spec.min_score_ratio << "\n"
       << "min_salient_fraction = " << spec.min_salient_fraction << "\n"
       << "noise = " << spec.noise << "\n"
       << "seed = " << spec.seed << "\n"
       << "count = " << n << "\n"
       << "stream = " << stream << "\n";
  if (!meta) throw std::runtime_error("cannot write " + (root / "spec.txt").string());
}

}  // namespace recattn::data

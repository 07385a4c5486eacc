#include "recattn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace recattn {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageIoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageIoError("failed writing " + path.string());
}

// Interleaved 8-bit samples <-> planar doubles.
std::vector<unsigned char> interleave(const Image& image) {
  std::vector<unsigned char> out(image.values.size());
  const std::size_t px = image.pixels();
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t i = 0; i < px; ++i) out[i * image.channels + c] = quantize(image.values[c * px + i]);
  return out;
}

Image deinterleave(const unsigned char* data, std::size_t channels, std::size_t h, std::size_t w) {
  Image image(channels, h, w);
  const std::size_t px = h * w;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < px; ++i) image.values[c * px + i] = data[i * channels + c] / 255.0;
  return image;
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw ImageIoError("cannot read PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ImageIoError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  return deinterleave(buffer.data(), color ? 3 : 1, png.height, png.width);
}

void write_png(const Image& image, const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto samples = interleave(image);
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, samples.data(), 0, nullptr)) {
    throw ImageIoError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

double lerp(double a, double b, double t) {
  const double v = a + t * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

void axis_taps(std::size_t in, std::size_t out, std::vector<std::size_t>& lo,
               std::vector<std::size_t>& hi, std::vector<double>& frac) {
  lo.resize(out);
  hi.resize(out);
  frac.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto l = static_cast<std::size_t>(src);
    if (l > in - 1) l = in - 1;
    lo[o] = l;
    hi[o] = l + (l < in - 1 ? 1 : 0);
    frac[o] = std::min(src - static_cast<double>(l), 1.0);
  }
}

}  // namespace

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * c));
}

Tensor to_tensor(const Image& image) {
  return Tensor({image.channels, image.height, image.width}, image.values);
}

Image from_tensor(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("from_tensor: expected C x H x W, got " + to_string(t.shape()));
  Image image(t.dim(0), t.dim(1), t.dim(2));
  std::copy(t.data().begin(), t.data().end(), image.values.begin());
  return image;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  if (height == image.height && width == image.width) return image;
  if (height == 0 || width == 0) throw std::invalid_argument("resize_bilinear: empty target");
  std::vector<std::size_t> ylo, yhi, xlo, xhi;
  std::vector<double> yf, xf;
  axis_taps(image.height, height, ylo, yhi, yf);
  axis_taps(image.width, width, xlo, xhi, xf);
  Image out(image.channels, height, width);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t x = 0; x < width; ++x) {
        const double top = lerp(image.at(c, ylo[r], xlo[x]), image.at(c, ylo[r], xhi[x]), xf[x]);
        const double bot = lerp(image.at(c, yhi[r], xlo[x]), image.at(c, yhi[r], xhi[x]), xf[x]);
        out.at(c, r, x) = lerp(top, bot, yf[r]);
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out = image;
  for (std::size_t c = 0; c < image.channels; ++c)
    for (std::size_t r = 0; r < image.height; ++r)
      for (std::size_t x = 0; x < image.width; ++x)
        out.at(c, r, x) = image.at(c, r, image.width - 1 - x);
  return out;
}

std::vector<unsigned char> encode_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ImageIoError("PNM output needs 1 or 3 channels");
  }
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  const auto samples = interleave(image);
  out.insert(out.end(), samples.begin(), samples.end());
  return out;
}

Image decode_pnm(const std::vector<unsigned char>& bytes, const std::string& origin) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw ImageIoError("malformed PNM header in " + origin);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ImageIoError("unsupported PNM type in " + origin + " (need P5 or P6)");
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  pos = 2;
  const std::size_t w = number();
  const std::size_t h = number();
  const std::size_t maxval = number();
  if (maxval != 255) throw ImageIoError("only 8-bit PNM supported: " + origin);
  if (w == 0 || h == 0) throw ImageIoError("empty image: " + origin);
  ++pos;  // single whitespace before raster
  if (bytes.size() < pos + w * h * channels) throw ImageIoError("truncated PNM raster: " + origin);
  return deinterleave(bytes.data() + pos, channels, h, w);
}

Image read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return decode_pnm(read_bytes(path), path.string());
  throw ImageIoError("unsupported image format: " + path.string());
}

void write_image(const Image& image, const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    if (image.channels != 1 && image.channels != 3) throw ImageIoError("PNG output needs 1 or 3 channels");
    write_png(image, path);
  } else if (ext == ".pgm" || ext == ".ppm") {
    if ((ext == ".pgm") != (image.channels == 1)) {
      throw ImageIoError("channel count does not match " + path.string());
    }
    write_bytes(encode_pnm(image), path);
  } else {
    throw ImageIoError("unsupported image format: " + path.string());
  }
}

}  // namespace recattn

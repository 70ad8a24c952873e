#include "patchbmi/image.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "patchbmi/rng.hpp"

namespace patchbmi {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

std::uint8_t clamp_u8(double v) {
  long r = std::lround(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
}

// minimal netpbm header scanner; tracks the byte offset for diagnostics
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }
  const std::uint8_t* cursor() const { return b_.data() + pos_; }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      const std::uint8_t c = b_[pos_];
      if (c == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_int(const char* what) {
    skip_space_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_]))
      throw ValidationError(std::string("netpbm: expected ") + what + " at byte offset " +
                            std::to_string(pos_));
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1'000'000'000L)
        throw ValidationError(std::string("netpbm: ") + what + " out of range at byte offset " +
                              std::to_string(pos_));
      ++pos_;
    }
    return static_cast<int>(v);
  }

  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

Image make_image(int width, int height, int channels) {
  require(width >= 1 && height >= 1, "image dimensions must be positive");
  require(channels == 1 || channels == 3, "image must have 1 or 3 channels");
  Image img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(width) * height * channels, 0);
  return img;
}

Image decode_netpbm(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ValidationError("netpbm: bad magic at byte offset 0, expected P5 or P6");
  const int channels = bytes[1] == '5' ? 1 : 3;
  r.advance(2);

  const int width = r.read_int("width");
  const int height = r.read_int("height");
  require(width >= 1 && height >= 1, "netpbm: dimensions must be positive, got " +
                                         std::to_string(width) + "x" + std::to_string(height));
  const std::size_t maxval_at = r.pos();
  const int maxval = r.read_int("maxval");
  if (maxval != 255)
    throw ValidationError("netpbm: unsupported maxval " + std::to_string(maxval) +
                          " at byte offset " + std::to_string(maxval_at) + ", only 255 is handled");
  // exactly one whitespace byte separates the header from the payload
  if (r.remaining() < 1 || !std::isspace(*r.cursor()))
    throw ValidationError("netpbm: missing payload separator at byte offset " +
                          std::to_string(r.pos()));
  r.advance(1);

  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  if (r.remaining() < need)
    throw ValidationError("netpbm: truncated payload at byte offset " + std::to_string(r.pos()) +
                          ", need " + std::to_string(need) + " bytes, have " +
                          std::to_string(r.remaining()));

  Image img = make_image(width, height, channels);
  std::copy_n(r.cursor(), need, img.pixels.begin());
  return img;
}

std::vector<std::uint8_t> encode_pgm(const Image& img) {
  require(img.channels == 1, "encode_pgm: grayscale input required");
  std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

Image read_image_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open image file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_pgm_file(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write image file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("short write to image file: " + path.string());
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  Image out = make_image(img.width, img.height, 1);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = img.pixels[i * 3], g = img.pixels[i * 3 + 1], b = img.pixels[i * 3 + 2];
    out.pixels[i] = clamp_u8(0.299 * r + 0.587 * g + 0.114 * b);
  }
  return out;
}

Image equalize_histogram(const Image& img) {
  require(img.channels == 1, "equalize_histogram: grayscale input required");
  std::array<std::int64_t, 256> hist{};
  for (std::uint8_t v : img.pixels) ++hist[v];

  std::array<std::int64_t, 256> cdf{};
  std::int64_t run = 0;
  std::int64_t cdf_min = 0;
  for (int v = 0; v < 256; ++v) {
    run += hist[v];
    cdf[v] = run;
    if (cdf_min == 0 && hist[v] > 0) cdf_min = run;
  }
  const std::int64_t n = static_cast<std::int64_t>(img.pixels.size());
  if (n == cdf_min) return img;  // flat image, nothing to spread

  Image out = img;
  std::array<std::uint8_t, 256> lut{};
  const double denom = static_cast<double>(n - cdf_min);
  for (int v = 0; v < 256; ++v)
    lut[v] = clamp_u8(static_cast<double>(cdf[v] - cdf_min) / denom * 255.0);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = lut[img.pixels[i]];
  return out;
}

Image resize_bilinear(const Image& img, int out_width, int out_height) {
  require(out_width >= 1 && out_height >= 1, "resize: output dimensions must be positive");
  if (out_width == img.width && out_height == img.height) return img;
  Image out = make_image(out_width, out_height, img.channels);
  const double x_ratio = static_cast<double>(img.width) / out_width;
  const double y_ratio = static_cast<double>(img.height) / out_height;
  for (int dy = 0; dy < out_height; ++dy) {
    double sy = (dy + 0.5) * y_ratio - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - y0;
    for (int dx = 0; dx < out_width; ++dx) {
      double sx = (dx + 0.5) * x_ratio - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
        const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
        out.at(dx, dy, c) = clamp_u8((1.0 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

Image horizontal_flip(const Image& img) {
  Image out = make_image(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

Image rotate(const Image& img, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  Image out = make_image(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    const double dyc = y - cy;
    for (int x = 0; x < img.width; ++x) {
      const double dxc = x - cx;
      // inverse map: sample the source location that lands here
      const double sx = ca * dxc + sa * dyc + cx;
      const double sy = -sa * dxc + ca * dyc + cy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      auto tap = [&](int tx, int ty, int c) -> double {
        if (tx < 0 || tx >= img.width || ty < 0 || ty >= img.height) return 0.0;
        return img.at(tx, ty, c);
      };
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1.0 - fx) * tap(x0, y0, c) + fx * tap(x0 + 1, y0, c);
        const double bot = (1.0 - fx) * tap(x0, y0 + 1, c) + fx * tap(x0 + 1, y0 + 1, c);
        out.at(x, y, c) = clamp_u8((1.0 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

std::pair<double, double> rotate_point(double x, double y, double degrees, double cx, double cy) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double dx = x - cx, dy = y - cy;
  return {ca * dx - sa * dy + cx, sa * dx + ca * dy + cy};
}

AugmentParams draw_augment(std::mt19937& rng, const AugmentConfig& cfg) {
  require(cfg.flip_prob >= 0.0 && cfg.flip_prob <= 1.0, "augment: flip_prob must be in [0,1]");
  require(cfg.max_rotation_deg >= 0.0 && cfg.max_rotation_deg <= 45.0,
          "augment: max rotation must be in [0,45] degrees");
  AugmentParams p;
  p.flip = uniform01(rng) < cfg.flip_prob;
  p.degrees = uniform_range(rng, -cfg.max_rotation_deg, cfg.max_rotation_deg);
  return p;
}

Image apply_augment(const Image& img, const AugmentParams& params) {
  Image out = params.flip ? horizontal_flip(img) : img;
  if (params.degrees != 0.0) out = rotate(out, params.degrees);
  return out;
}

Image augment(const Image& img, std::mt19937& rng, const AugmentConfig& cfg) {
  return apply_augment(img, draw_augment(rng, cfg));
}

Tensor replicate_channels(const Image& img) {
  require(img.channels == 1, "replicate_channels: grayscale input required");
  Tensor t({3, img.height, img.width});
  auto d = t.data();
  const std::size_t plane = img.pixels.size();
  for (std::size_t i = 0; i < plane; ++i) {
    const float v = static_cast<float>(img.pixels[i]) / 255.0f;
    d[i] = v;
    d[i + plane] = v;
    d[i + 2 * plane] = v;
  }
  return t;
}

}  // namespace patchbmi

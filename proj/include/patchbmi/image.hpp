#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "patchbmi/tensor.hpp"

namespace patchbmi {

// 8-bit image, row-major, interleaved channels (1 = grayscale, 3 = RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

Image make_image(int width, int height, int channels);

// Binary netpbm only: P5 (grayscale) and P6 (RGB), maxval 255. Rejects
// anything else with a byte-offset diagnostic.
Image decode_netpbm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const Image& img);  // grayscale only

Image read_image_file(const std::filesystem::path& path);
void write_pgm_file(const Image& img, const std::filesystem::path& path);

// ITU-R 601 luma: y = round(0.299 r + 0.587 g + 0.114 b). Grayscale input
// passes through unchanged.
Image to_grayscale(const Image& img);

// Global histogram equalization on a grayscale image:
// out(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255), identity when the
// image is a single flat intensity.
Image equalize_histogram(const Image& img);

// Bilinear resampling with half-pixel centers: the source coordinate for
// destination x is (x + 0.5) * in/out - 0.5, clamped to the valid range.
Image resize_bilinear(const Image& img, int out_width, int out_height);

Image horizontal_flip(const Image& img);

// Rotation about the image center ((w-1)/2, (h-1)/2) by inverse mapping with
// bilinear sampling; taps falling outside the source contribute zero.
Image rotate(const Image& img, double degrees);

// Forward counterpart of rotate(): where the content at (x, y) lands after
// rotating by `degrees` about (cx, cy).
std::pair<double, double> rotate_point(double x, double y, double degrees, double cx, double cy);

struct AugmentConfig {
  double flip_prob = 0.5;
  double max_rotation_deg = 10.0;  // in [0, 45]
};

struct AugmentParams {
  bool flip = false;
  double degrees = 0.0;
};

// Two draws per call in fixed order: flip decision, then rotation angle
// uniform in [-max, max].
AugmentParams draw_augment(std::mt19937& rng, const AugmentConfig& cfg);

// Flip first, then rotate; the same params applied to an image and its
// landmark set keep the two aligned.
Image apply_augment(const Image& img, const AugmentParams& params);
Image augment(const Image& img, std::mt19937& rng, const AugmentConfig& cfg);

// Grayscale image -> [3,H,W] float tensor in [0,1], gray value copied to all
// three channels.
Tensor replicate_channels(const Image& img);

}  // namespace patchbmi

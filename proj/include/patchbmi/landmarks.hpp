#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>

#include "patchbmi/image.hpp"
#include "patchbmi/tensor.hpp"

namespace patchbmi {

inline constexpr int kNumLandmarks = 68;

// 68-point face layout, 0-based: jaw 0-16, brows 17-26, nose 27-35, eyes
// 36-47, mouth 48-67.
struct LandmarkSet {
  struct Point {
    double x = 0.0;
    double y = 0.0;
  };
  std::array<Point, kNumLandmarks> pts{};
};

// Text sidecar: exactly 68 lines of "x y". Fractional coordinates allowed.
LandmarkSet parse_landmarks(std::string_view text);
LandmarkSet read_landmarks_file(const std::filesystem::path& path);
std::string format_landmarks(const LandmarkSet& lm);

// Keeps landmarks aligned with resize_bilinear's half-pixel sampling grid:
// x' = (x + 0.5) * out/in - 0.5.
LandmarkSet rescale_landmarks(const LandmarkSet& lm, int in_width, int in_height, int out_width,
                              int out_height);

// Same geometric transform apply_augment() performs on the image.
LandmarkSet apply_augment(const LandmarkSet& lm, const AugmentParams& params, int width,
                          int height);

// Half-open pixel box [x0,x1) x [y0,y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

enum class VerticalMode {
  kSpan,      // y-range spans the two anchors, padded like x
  kExtendUp,  // y-range is [y_top - extend_frac * x_span, y_top]
};

// Declarative ROI recipe: a box derived from two anchor landmarks. Pure data,
// so the table below can be replaced wholesale without touching code.
struct RoiRule {
  std::string name;
  int anchor_a = 0;
  int anchor_b = 0;
  double pad_frac = 0.15;  // fraction of each axis span added on both sides
  VerticalMode vertical = VerticalMode::kSpan;
  double extend_frac = 0.5;  // only read in kExtendUp mode
};

enum class Region : int {
  kForehead = 0,
  kLeftEye,
  kRightEye,
  kLeftCheek,
  kRightCheek,
  kChin,
};

inline constexpr int kNumRegions = 6;
inline constexpr std::array<const char*, kNumRegions> kRegionNames = {
    "forehead", "left_eye", "right_eye", "left_cheek", "right_cheek", "chin"};

using RuleTable = std::array<RoiRule, kNumRegions>;

// Six face regions anchored on brow, eye, jaw, and mouth landmarks; no rule
// touches the nose block (27-35). The deliberately tall cheek boxes reach from
// the jaw line up to the lower eyelid.
RuleTable default_rule_table();

// pad/extend the anchor span, floor/ceil to ints, clip to the image. Throws
// ProcessingError when the clipped box is empty.
Box roi_from_rule(const RoiRule& rule, const LandmarkSet& lm, int img_width, int img_height);

// Grayscale crop resampled to side x side.
Image extract_patch_image(const Image& img, const Box& box, int side);

// Crop -> resize -> replicate to 3 channels -> float tensor in [0,1].
Tensor extract_patch(const Image& img, const Box& box, int side);

struct PatchSet {
  std::array<Tensor, kNumRegions> patches;
  std::array<Box, kNumRegions> boxes;
};

// All six regions in canonical order. Any degenerate ROI rejects the whole
// sample via ProcessingError naming the offending region.
PatchSet extract_all_patches(const Image& img, const LandmarkSet& lm, const RuleTable& rules,
                             int side);

}  // namespace patchbmi

#include "patchbmi/landmarks.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace patchbmi {

LandmarkSet parse_landmarks(std::string_view text) {
  LandmarkSet lm;
  std::istringstream in{std::string(text)};
  std::string line;
  int count = 0;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (count >= kNumLandmarks)
      throw ValidationError("landmarks: more than " + std::to_string(kNumLandmarks) +
                            " points (line " + std::to_string(line_no) + ")");
    std::istringstream ls(line);
    double x = 0.0, y = 0.0;
    std::string extra;
    if (!(ls >> x >> y) || (ls >> extra))
      throw ValidationError("landmarks: line " + std::to_string(line_no) +
                            " is not \"x y\": " + line);
    if (!std::isfinite(x) || !std::isfinite(y))
      throw ValidationError("landmarks: non-finite coordinate on line " + std::to_string(line_no));
    lm.pts[count] = {x, y};
    ++count;
  }
  if (count != kNumLandmarks)
    throw ValidationError("landmarks: expected " + std::to_string(kNumLandmarks) +
                          " points, got " + std::to_string(count));
  return lm;
}

LandmarkSet read_landmarks_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open landmarks file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_landmarks(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string format_landmarks(const LandmarkSet& lm) {
  std::string out;
  char buf[64];
  for (const auto& p : lm.pts) {
    std::snprintf(buf, sizeof buf, "%.6g %.6g\n", p.x, p.y);
    out += buf;
  }
  return out;
}

LandmarkSet rescale_landmarks(const LandmarkSet& lm, int in_width, int in_height, int out_width,
                              int out_height) {
  if (in_width < 1 || in_height < 1 || out_width < 1 || out_height < 1)
    throw ValidationError("rescale_landmarks: dimensions must be positive");
  const double sx = static_cast<double>(out_width) / in_width;
  const double sy = static_cast<double>(out_height) / in_height;
  LandmarkSet out;
  for (int i = 0; i < kNumLandmarks; ++i) {
    out.pts[i].x = (lm.pts[i].x + 0.5) * sx - 0.5;
    out.pts[i].y = (lm.pts[i].y + 0.5) * sy - 0.5;
  }
  return out;
}

LandmarkSet apply_augment(const LandmarkSet& lm, const AugmentParams& params, int width,
                          int height) {
  LandmarkSet out = lm;
  if (params.flip)
    for (auto& p : out.pts) p.x = (width - 1) - p.x;
  if (params.degrees != 0.0) {
    const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    for (auto& p : out.pts) {
      auto [rx, ry] = rotate_point(p.x, p.y, params.degrees, cx, cy);
      p.x = rx;
      p.y = ry;
    }
  }
  return out;
}

RuleTable default_rule_table() {
  return RuleTable{{
      {"forehead", 18, 25, 0.15, VerticalMode::kExtendUp, 0.5},
      {"left_eye", 36, 39, 0.15, VerticalMode::kSpan, 0.5},
      {"right_eye", 36, 41, 0.15, VerticalMode::kSpan, 0.5},
      {"left_cheek", 2, 41, 0.15, VerticalMode::kSpan, 0.5},
      {"right_cheek", 14, 46, 0.15, VerticalMode::kSpan, 0.5},
      {"chin", 2, 8, 0.15, VerticalMode::kSpan, 0.5},
  }};
}

Box roi_from_rule(const RoiRule& rule, const LandmarkSet& lm, int img_width, int img_height) {
  if (rule.anchor_a < 0 || rule.anchor_a >= kNumLandmarks || rule.anchor_b < 0 ||
      rule.anchor_b >= kNumLandmarks)
    throw ValidationError("roi rule '" + rule.name + "': anchor index out of range");
  if (rule.pad_frac < 0.0 || rule.extend_frac < 0.0)
    throw ValidationError("roi rule '" + rule.name + "': fractions must be non-negative");

  const auto& a = lm.pts[rule.anchor_a];
  const auto& b = lm.pts[rule.anchor_b];
  const double x_min = std::min(a.x, b.x), x_max = std::max(a.x, b.x);
  const double y_min = std::min(a.y, b.y), y_max = std::max(a.y, b.y);
  const double x_span = x_max - x_min, y_span = y_max - y_min;

  double x0f = x_min - rule.pad_frac * x_span;
  double x1f = x_max + rule.pad_frac * x_span;
  double y0f, y1f;
  if (rule.vertical == VerticalMode::kExtendUp) {
    // anchors sit on the region's lower edge; reach upward by a fraction of
    // the horizontal span
    y0f = y_min - rule.extend_frac * x_span;
    y1f = y_min;
  } else {
    y0f = y_min - rule.pad_frac * y_span;
    y1f = y_max + rule.pad_frac * y_span;
  }

  Box box;
  box.x0 = std::max(0, static_cast<int>(std::floor(x0f)));
  box.y0 = std::max(0, static_cast<int>(std::floor(y0f)));
  box.x1 = std::min(img_width, static_cast<int>(std::ceil(x1f)));
  box.y1 = std::min(img_height, static_cast<int>(std::ceil(y1f)));
  if (box.width() <= 0 || box.height() <= 0)
    throw ProcessingError("degenerate ROI for region '" + rule.name + "'");
  return box;
}

Image extract_patch_image(const Image& img, const Box& box, int side) {
  if (img.channels != 1)
    throw ValidationError("extract_patch: grayscale input required");
  if (side < 1) throw ValidationError("extract_patch: side must be positive");
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > img.width || box.y1 > img.height ||
      box.width() <= 0 || box.height() <= 0)
    throw ValidationError("extract_patch: box outside image");
  Image crop = make_image(box.width(), box.height(), 1);
  for (int y = 0; y < crop.height; ++y)
    for (int x = 0; x < crop.width; ++x) crop.at(x, y) = img.at(box.x0 + x, box.y0 + y);
  return resize_bilinear(crop, side, side);
}

Tensor extract_patch(const Image& img, const Box& box, int side) {
  return replicate_channels(extract_patch_image(img, box, side));
}

PatchSet extract_all_patches(const Image& img, const LandmarkSet& lm, const RuleTable& rules,
                             int side) {
  PatchSet out;
  for (int r = 0; r < kNumRegions; ++r) {
    out.boxes[r] = roi_from_rule(rules[r], lm, img.width, img.height);
    out.patches[r] = extract_patch(img, out.boxes[r], side);
  }
  return out;
}

}  // namespace patchbmi

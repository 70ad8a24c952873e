#pragma once

// Shared test fixtures: scratch directories, a synthetic face (image +
// plausible 68-point layout), manifest writers, and hand-buildable model
// weights with known outputs.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "patchbmi/dataset.hpp"
#include "patchbmi/ensemble.hpp"
#include "patchbmi/image.hpp"
#include "patchbmi/landmarks.hpp"
#include "patchbmi/rng.hpp"

namespace patchbmi::test {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("patchbmi_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Plausible frontal-face layout scaled to the given frame. Anchor spans are
// non-degenerate for every default ROI rule, and all boxes land inside the
// frame, so patch extraction succeeds even after a +-10 degree rotation.
inline LandmarkSet canonical_landmarks(int width, int height) {
  LandmarkSet lm;
  auto set = [&](int i, double ux, double uy) {
    lm.pts[i] = {ux * width, uy * height};
  };
  constexpr double pi = std::numbers::pi;
  // jaw arc, left temple -> chin -> right temple
  for (int i = 0; i <= 16; ++i) {
    const double t = i / 16.0;
    set(i, 0.5 - 0.32 * std::cos(pi * t), 0.42 + 0.40 * std::sin(pi * t));
  }
  // brows
  for (int i = 0; i <= 4; ++i) {
    const double arch = 0.015 * std::sin(pi * i / 4.0);
    set(17 + i, 0.24 + 0.04 * i, 0.355 - arch);
    set(22 + i, 0.60 + 0.04 * i, 0.355 - arch);
  }
  // nose bridge and base
  for (int i = 0; i <= 3; ++i) set(27 + i, 0.5 + 0.004 * i, 0.40 + 0.05 * i);
  for (int i = 0; i <= 4; ++i) set(31 + i, 0.44 + 0.03 * i, 0.585 + 0.01 * std::sin(pi * i / 4.0));
  // eyes
  set(36, 0.28, 0.425);
  set(37, 0.305, 0.405);
  set(38, 0.345, 0.405);
  set(39, 0.37, 0.420);
  set(40, 0.345, 0.440);
  set(41, 0.305, 0.445);
  set(42, 0.63, 0.420);
  set(43, 0.655, 0.405);
  set(44, 0.695, 0.405);
  set(45, 0.72, 0.425);
  set(46, 0.695, 0.445);
  set(47, 0.655, 0.440);
  // mouth, outer ring then inner ring
  for (int k = 0; k < 12; ++k) {
    const double th = pi + 2.0 * pi * k / 12.0;
    set(48 + k, 0.5 + 0.10 * std::cos(th), 0.72 + 0.035 * std::sin(th));
  }
  for (int k = 0; k < 8; ++k) {
    const double th = pi + 2.0 * pi * k / 8.0;
    set(60 + k, 0.5 + 0.06 * std::cos(th), 0.72 + 0.015 * std::sin(th));
  }
  return lm;
}

// Deterministic face-ish test image: dark background, bright elliptical face
// area, plus a seed-dependent brightness offset and mild texture so distinct
// seeds give distinct pixels.
inline Image face_image(int width, int height, std::uint32_t seed, int channels = 1) {
  Image img = make_image(width, height, channels);
  const double base = 40.0 + (seed % 64);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double nx = (x + 0.5) / width - 0.5;
      const double ny = (y + 0.5) / height - 0.55;
      const double r2 = nx * nx / 0.11 + ny * ny / 0.17;
      double v = base + (r2 < 1.0 ? 120.0 * (1.0 - r2) : 0.0);
      v += 18.0 * std::sin(0.11 * x + 0.05 * seed) + 11.0 * std::cos(0.07 * y);
      for (int c = 0; c < channels; ++c) {
        // channel tint so grayscale conversion is exercised by RGB fixtures
        const int tint = channels == 3 ? (c - 1) * 6 : 0;
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(v + tint, 0.0, 255.0));
      }
    }
  }
  return img;
}

inline void write_ppm_file(const Image& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

struct SamplePaths {
  fs::path image;
  fs::path landmarks;
};

// One on-disk sample: a PGM (or PPM when channels == 3) plus its landmark
// sidecar, landmarks jittered per seed to vary the crops slightly.
inline SamplePaths write_sample(const fs::path& dir, const std::string& stem, std::uint32_t seed,
                                int width = 96, int height = 96, int channels = 1) {
  fs::create_directories(dir);
  const Image img = face_image(width, height, seed, channels);
  SamplePaths out;
  if (channels == 3) {
    out.image = dir / (stem + ".ppm");
    write_ppm_file(img, out.image);
  } else {
    out.image = dir / (stem + ".pgm");
    write_pgm_file(img, out.image);
  }
  LandmarkSet lm = canonical_landmarks(width, height);
  std::mt19937 rng(seed * 2654435761u + 17u);
  for (auto& p : lm.pts) {
    p.x += uniform_range(rng, -1.0, 1.0);
    p.y += uniform_range(rng, -1.0, 1.0);
  }
  out.landmarks = dir / (stem + ".txt");
  write_text(out.landmarks, format_landmarks(lm));
  return out;
}

// n samples plus a manifest referencing them by relative path. BMI labels
// sweep 18..34. with_split labels rows train/val/test round-robin 4:1:1.
inline fs::path write_manifest_dataset(const fs::path& dir, int n, std::uint32_t seed,
                                       bool with_split) {
  fs::create_directories(dir);
  std::string csv = with_split ? "image_path,landmarks_path,bmi,split\n"
                               : "image_path,landmarks_path,bmi\n";
  for (int i = 0; i < n; ++i) {
    const auto paths = write_sample(dir, "s" + std::to_string(i), seed + i);
    const double bmi = 18.0 + 16.0 * i / std::max(1, n - 1);
    csv += paths.image.filename().string() + "," + paths.landmarks.filename().string() + "," +
           std::to_string(bmi);
    if (with_split) {
      const char* split = (i % 6 == 4) ? "val" : (i % 6 == 5) ? "test" : "train";
      csv += std::string(",") + split;
    }
    csv += "\n";
  }
  const fs::path manifest = dir / "manifest.csv";
  write_text(manifest, csv);
  return manifest;
}

// All-zero weights except fc1 bias unit 0 and fc2 weight 0: the conv stack
// outputs zeros regardless of input, relu(fc1 bias) = e0, and fc2 reads off
// `value`. The whole net is the constant function x -> value.
inline PatchModelParams constant_head(const ModelConfig& cfg, float value) {
  std::mt19937 rng(0);
  PatchModelParams p = init_weights<float>(cfg, rng);
  for (Tensor* t : p.tensors())
    for (float& v : t->data()) v = 0.0f;
  p.fc1_b.data()[0] = 1.0f;
  p.fc2_w.data()[0] = value;
  return p;
}

// Ensemble whose six heads are constant functions; the prediction is their
// mean no matter the input image.
inline EnsembleModel constant_ensemble(const std::array<float, kNumRegions>& values) {
  EnsembleModel model;
  model.config = ModelConfig{};
  for (int r = 0; r < kNumRegions; ++r) model.heads[r] = constant_head(model.config, values[r]);
  return model;
}

}  // namespace patchbmi::test

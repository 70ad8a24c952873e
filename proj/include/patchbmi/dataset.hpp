#pragma once

#include <memory>
#include <string>
#include <vector>

#include "patchbmi/image.hpp"
#include "patchbmi/landmarks.hpp"
#include "patchbmi/manifest.hpp"
#include "patchbmi/training.hpp"

namespace patchbmi {

struct PreprocessConfig {
  int resize_side = 224;
};

// decode -> resize to resize_side -> grayscale -> histogram equalization;
// landmarks follow the resize.
std::pair<Image, LandmarkSet> preprocess(const Image& img, const LandmarkSet& lm,
                                         const PreprocessConfig& cfg);

struct LoadedSample {
  Image gray;  // preprocessed, resize_side x resize_side, 1 channel
  LandmarkSet lm;
  float bmi = 0.0f;
  std::string source;  // image path, for diagnostics
};

LoadedSample load_sample(const ManifestRecord& rec, const PreprocessConfig& cfg);

// Loads every record; the first failure aborts with the offending path in the
// message. Training inputs are expected to be clean (evaluation is the lenient
// path).
std::vector<LoadedSample> load_samples(const std::vector<ManifestRecord>& records,
                                       const PreprocessConfig& cfg);

// One region's view of a shared preprocessed sample list. Training draws
// flip/rotation augmentation per access (image and landmarks transformed
// together); eval extracts from the unmodified sample. A sample whose
// augmented ROI degenerates falls back to its unaugmented patch rather than
// aborting the epoch.
class FaceRegionDataset final : public RegionDataset {
 public:
  FaceRegionDataset(std::shared_ptr<const std::vector<LoadedSample>> samples, Region region,
                    RuleTable rules, AugmentConfig augment, int patch_side, bool augment_enabled);

  std::size_t size() const override;
  float target(std::size_t i) const override;
  Tensor eval_patch(std::size_t i) const override;
  Tensor train_patch(std::size_t i, std::mt19937& rng) const override;

 private:
  std::shared_ptr<const std::vector<LoadedSample>> samples_;
  int region_;
  RuleTable rules_;
  AugmentConfig augment_;
  int patch_side_;
  bool augment_enabled_;
};

}  // namespace patchbmi

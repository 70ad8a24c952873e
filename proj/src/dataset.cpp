#include "patchbmi/dataset.hpp"

namespace patchbmi {

std::pair<Image, LandmarkSet> preprocess(const Image& img, const LandmarkSet& lm,
                                         const PreprocessConfig& cfg) {
  if (cfg.resize_side < 4) throw ValidationError("preprocess: resize side too small");
  Image resized = resize_bilinear(img, cfg.resize_side, cfg.resize_side);
  LandmarkSet scaled =
      rescale_landmarks(lm, img.width, img.height, cfg.resize_side, cfg.resize_side);
  return {equalize_histogram(to_grayscale(resized)), scaled};
}

LoadedSample load_sample(const ManifestRecord& rec, const PreprocessConfig& cfg) {
  const Image raw = read_image_file(rec.image_path);
  const LandmarkSet lm = read_landmarks_file(rec.landmarks_path);
  auto [gray, scaled] = preprocess(raw, lm, cfg);
  return {std::move(gray), scaled, static_cast<float>(rec.bmi), rec.image_path};
}

std::vector<LoadedSample> load_samples(const std::vector<ManifestRecord>& records,
                                       const PreprocessConfig& cfg) {
  std::vector<LoadedSample> out;
  out.reserve(records.size());
  for (const auto& rec : records) out.push_back(load_sample(rec, cfg));
  return out;
}

FaceRegionDataset::FaceRegionDataset(std::shared_ptr<const std::vector<LoadedSample>> samples,
                                     Region region, RuleTable rules, AugmentConfig augment,
                                     int patch_side, bool augment_enabled)
    : samples_(std::move(samples)),
      region_(static_cast<int>(region)),
      rules_(std::move(rules)),
      augment_(augment),
      patch_side_(patch_side),
      augment_enabled_(augment_enabled) {
  if (!samples_) throw ValidationError("region dataset: null sample list");
  if (patch_side_ < 1) throw ValidationError("region dataset: patch side must be positive");
}

std::size_t FaceRegionDataset::size() const { return samples_->size(); }

float FaceRegionDataset::target(std::size_t i) const { return (*samples_)[i].bmi; }

Tensor FaceRegionDataset::eval_patch(std::size_t i) const {
  const LoadedSample& s = (*samples_)[i];
  const Box box = roi_from_rule(rules_[region_], s.lm, s.gray.width, s.gray.height);
  return extract_patch(s.gray, box, patch_side_);
}

Tensor FaceRegionDataset::train_patch(std::size_t i, std::mt19937& rng) const {
  if (!augment_enabled_) return eval_patch(i);
  const LoadedSample& s = (*samples_)[i];
  const AugmentParams params = draw_augment(rng, augment_);
  const Image img = apply_augment(s.gray, params);
  const LandmarkSet lm = apply_augment(s.lm, params, s.gray.width, s.gray.height);
  try {
    const Box box = roi_from_rule(rules_[region_], lm, img.width, img.height);
    return extract_patch(img, box, patch_side_);
  } catch (const ProcessingError&) {
    return eval_patch(i);  // rotation pushed the region off the frame
  }
}

}  // namespace patchbmi

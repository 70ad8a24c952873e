#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "patchbmi/dataset.hpp"
#include "patchbmi/landmarks.hpp"
#include "patchbmi/patch_model.hpp"

namespace patchbmi {

inline constexpr std::uint32_t kBundleFormatVersion = 1;
inline constexpr char kWeightsMagic[4] = {'P', 'B', 'M', 'I'};

static_assert(kNumRegions == kNumRegionModels);

// The complete deployable artifact: six patch regressors plus everything
// needed to turn a raw photo into their inputs.
struct EnsembleModel {
  ModelConfig config;
  std::array<PatchModelParams, kNumRegions> heads;  // canonical region order
  RuleTable rules = default_rule_table();
  PreprocessConfig preprocess;
  nlohmann::json provenance = nlohmann::json::object();
};

// Fresh ensemble with seeded random weights; head r draws from seed + r.
EnsembleModel init_ensemble(std::uint32_t seed, const ModelConfig& cfg = {});

std::int64_t ensemble_parameter_count(const EnsembleModel& model);

struct Prediction {
  double bmi = 0.0;  // unweighted mean of the six heads
  std::array<double, kNumRegions> per_region{};
};

// preprocess -> extract six patches -> six eval-mode forwards -> average in
// canonical region order. threads > 1 runs the heads concurrently; the
// summation order stays canonical either way.
Prediction predict_bmi(const EnsembleModel& model, const Image& img, const LandmarkSet& lm,
                       int threads = 1);
Prediction predict_from_patches(const EnsembleModel& model, const PatchSet& patches,
                                int threads = 1);
Prediction predict_from_files(const EnsembleModel& model, const std::filesystem::path& image_path,
                              const std::filesystem::path& landmarks_path, int threads = 1);

// --- bundle directory layout ---
// meta.json                 configuration, rules, provenance
// {region}.pbmi             one weights blob per region, canonical order
//
// Blob format, all integers little-endian: "PBMI" magic, u32 format version,
// then per tensor: u32 name length, name bytes, u32 rank, u32 dims, float32
// payload. Tensors appear in PatchModelParamsT::tensors() order.
std::vector<std::uint8_t> serialize_params(const PatchModelParams& params);
PatchModelParams parse_params(std::span<const std::uint8_t> bytes, const ModelConfig& cfg,
                              const std::string& context);

// Exact meta.json contents; save_bundle writes precisely this string, so
// on-disk bundle size is computable without touching disk.
std::string bundle_meta_text(const EnsembleModel& model);

void save_bundle(const EnsembleModel& model, const std::filesystem::path& dir);
EnsembleModel load_bundle(const std::filesystem::path& dir);

nlohmann::json rules_to_json(const RuleTable& rules);
RuleTable rules_from_json(const nlohmann::json& j);
RuleTable read_rules_file(const std::filesystem::path& path);

}  // namespace patchbmi

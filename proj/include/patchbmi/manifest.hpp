#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace patchbmi {

// One validated dataset row. Paths are resolved against the manifest's
// directory; bmi is already computed from weight/height when the manifest
// carried those instead.
struct ManifestRecord {
  std::string image_path;
  std::string landmarks_path;
  double bmi = 0.0;
  std::optional<std::string> split;  // "train" | "val" | "test"
};

// kg / m^2. Both arguments must be positive.
double compute_bmi(double weight_kg, double height_m);
double lbs_to_kg(double lbs);
double inches_to_m(double inches);

// Plausibility window for a usable label; rows outside are rejected.
inline constexpr double kMinBmi = 10.0;
inline constexpr double kMaxBmi = 100.0;

struct RejectedRow {
  int line = 0;  // 1-based line in the manifest, header is line 1
  std::string reason;
};

struct ManifestParseResult {
  std::vector<ManifestRecord> records;
  std::vector<RejectedRow> rejected;
};

// Header-first CSV with double-quote escaping. Mandatory columns: image_path,
// landmarks_path. The label comes from `bmi` or, failing that, is computed
// from weight_kg/height_m or weight_lbs/height_in (kg/m win when both forms
// are present). Optional column `split` must be train/val/test. Rows that
// break an invariant land in `rejected` with a line number and reason; a
// missing mandatory column fails the whole parse.
ManifestParseResult parse_manifest(std::string_view csv_text,
                                   const std::filesystem::path& base_dir);
ManifestParseResult read_manifest_file(const std::filesystem::path& path);

std::string rejection_report_csv(const std::vector<RejectedRow>& rejected);

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

struct SplitResult {
  std::vector<ManifestRecord> train, val, test;
  std::vector<std::string> warnings;  // e.g. an empty partition
};

// Records with an explicit split keep it. The rest are shuffled with `seed`
// and partitioned floor(n*train) / floor(n*val) / remainder.
SplitResult split_dataset(const std::vector<ManifestRecord>& records, const SplitRatios& ratios,
                          std::uint32_t seed);

}  // namespace patchbmi

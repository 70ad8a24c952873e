#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "patchbmi/ensemble.hpp"

namespace patchbmi {

struct LatencyStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;  // mean of middle two for even counts
  double p95_ms = 0.0;     // nearest-rank: sorted[ceil(0.95 n) - 1]
  double stddev_ms = 0.0;  // population standard deviation
};

LatencyStats latency_stats(const std::vector<double>& samples_ms);

struct BenchReport {
  std::int64_t param_count = 0;
  std::int64_t bundle_bytes = 0;
  int iterations = 0;
  int warmup = 0;
  bool heads_parallel = false;
  LatencyStats latency;
  // per-stage means over kept iterations; each stage is a subinterval of the
  // iteration's total span, so their sum cannot exceed mean_ms
  double preprocess_ms = 0.0;
  double patch_extract_ms = 0.0;
  double forward_ms = 0.0;
  double decode_ms = 0.0;  // one-shot file decode cost, outside the timed loop
  std::vector<double> samples_ms;  // kept per-iteration totals, in order
};

// Exact scalar count plus the byte size the saved bundle occupies on disk
// (meta.json and the six weight blobs).
std::pair<std::int64_t, std::int64_t> count_params_and_size(const EnsembleModel& model);

// Times predict_bmi end-to-end on one decoded sample: `warmup` discarded
// iterations, then `iterations` measured ones on a monotonic clock. File
// decoding happens once up front and is reported separately; heads run
// serially unless parallel_heads is set.
BenchReport measure_latency(const EnsembleModel& model, const std::filesystem::path& image_path,
                            const std::filesystem::path& landmarks_path, int iterations,
                            int warmup, bool parallel_heads = false);

std::string bench_to_text(const BenchReport& report);
nlohmann::json bench_to_json(const BenchReport& report);

// Published figures for this architecture, embedded verbatim for context.
// Device- and dataset-specific: informational only, never asserted against.
nlohmann::json reference_results();

}  // namespace patchbmi

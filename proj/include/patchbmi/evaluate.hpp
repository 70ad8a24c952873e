#pragma once

#include <span>
#include <string>
#include <vector>

#include "patchbmi/ensemble.hpp"
#include "patchbmi/manifest.hpp"

namespace patchbmi {

// Mean absolute error; inputs must be non-empty and equal length.
double mae(std::span<const double> predictions, std::span<const double> targets);

struct EvaluationReport {
  std::string dataset;  // label, e.g. the manifest stem
  std::string split;    // "train" | "val" | "test" | "all"
  int n = 0;            // samples that evaluated cleanly
  double mae = 0.0;
  std::array<double, kNumRegions> per_region_mae{};
  int failures = 0;
  std::vector<std::string> failure_reasons;
};

// Predicts every record and scores MAE overall and per region head. Individual
// sample failures (unreadable files, degenerate ROIs) are tallied with
// reasons; more than 50% failures aborts with ProcessingError.
EvaluationReport evaluate(const EnsembleModel& model, const std::vector<ManifestRecord>& records,
                          const std::string& dataset_label, const std::string& split_label,
                          int threads = 1);

struct NamedManifest {
  std::string label;
  std::vector<ManifestRecord> records;
};

// Scores the model on foreign datasets, all records per manifest (their split
// labels are ignored; a model trained elsewhere saw none of the rows).
std::vector<EvaluationReport> cross_evaluate(const EnsembleModel& model,
                                             const std::vector<NamedManifest>& foreign,
                                             int threads = 1);

// dataset,split,n,mae,mae_forehead,...,mae_chin,failures
std::string reports_to_csv(std::span<const EvaluationReport> reports);

// Aligned text table, one row per report.
std::string reports_to_table(std::span<const EvaluationReport> reports);

// One row per dataset with Training / Validation / Testing MAE columns and a
// Size column ("-" where a split is missing).
std::string split_table(std::span<const EvaluationReport> reports, std::int64_t param_count,
                        std::int64_t size_bytes);

// One row for the model, one MAE column per foreign dataset.
std::string cross_table(std::span<const EvaluationReport> reports, const std::string& model_label);

}  // namespace patchbmi

#include "patchbmi/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

namespace patchbmi {

double mae(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw ValidationError("mae: empty inputs");
  if (predictions.size() != targets.size())
    throw ValidationError("mae: size mismatch, " + std::to_string(predictions.size()) + " vs " +
                          std::to_string(targets.size()));
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    total += std::abs(predictions[i] - targets[i]);
  return total / static_cast<double>(predictions.size());
}

EvaluationReport evaluate(const EnsembleModel& model, const std::vector<ManifestRecord>& records,
                          const std::string& dataset_label, const std::string& split_label,
                          int threads) {
  if (records.empty()) throw ValidationError("evaluate: no records for " + dataset_label);
  if (threads < 1) throw ValidationError("evaluate: threads must be >= 1");

  struct Row {
    bool ok = false;
    Prediction pred;
    double target = 0.0;
    std::string error;
  };
  std::vector<Row> rows(records.size());

  auto run_one = [&](std::size_t i) {
    Row& row = rows[i];
    try {
      row.pred = predict_from_files(model, records[i].image_path, records[i].landmarks_path);
      row.target = records[i].bmi;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  if (threads <= 1 || records.size() < 2) {
    for (std::size_t i = 0; i < records.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int nw = std::min<int>(threads, static_cast<int>(records.size()));
    for (int w = 0; w < nw; ++w)
      pool.emplace_back([&]() {
        for (std::size_t i; (i = next.fetch_add(1)) < records.size();) run_one(i);
      });
    for (auto& t : pool) t.join();
  }

  EvaluationReport report;
  report.dataset = dataset_label;
  report.split = split_label;
  std::vector<double> preds, targets;
  std::array<std::vector<double>, kNumRegions> region_preds;
  for (const Row& row : rows) {
    if (!row.ok) {
      ++report.failures;
      report.failure_reasons.push_back(row.error);
      continue;
    }
    preds.push_back(row.pred.bmi);
    targets.push_back(row.target);
    for (int r = 0; r < kNumRegions; ++r) region_preds[r].push_back(row.pred.per_region[r]);
  }
  if (report.failures * 2 > static_cast<int>(records.size())) {
    std::string detail = report.failure_reasons.empty() ? "" : ("; first: " + report.failure_reasons[0]);
    throw ProcessingError("evaluation of " + dataset_label + " failed on " +
                          std::to_string(report.failures) + " of " +
                          std::to_string(records.size()) + " samples" + detail);
  }
  report.n = static_cast<int>(preds.size());
  report.mae = mae(preds, targets);
  for (int r = 0; r < kNumRegions; ++r) report.per_region_mae[r] = mae(region_preds[r], targets);
  return report;
}

std::vector<EvaluationReport> cross_evaluate(const EnsembleModel& model,
                                             const std::vector<NamedManifest>& foreign,
                                             int threads) {
  if (foreign.empty()) throw ValidationError("cross_evaluate: no datasets given");
  std::vector<EvaluationReport> out;
  out.reserve(foreign.size());
  for (const auto& m : foreign) out.push_back(evaluate(model, m.records, m.label, "all", threads));
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string with_thousands(std::int64_t v) {
  std::string raw = std::to_string(v);
  std::string out;
  int c = 0;
  for (auto it = raw.rbegin(); it != raw.rend(); ++it, ++c) {
    if (c > 0 && c % 3 == 0) out += ',';
    out += *it;
  }
  return std::string(out.rbegin(), out.rend());
}

std::string align_table(const std::vector<std::vector<std::string>>& grid) {
  std::vector<std::size_t> width;
  for (const auto& row : grid) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t rix = 0; rix < grid.size(); ++rix) {
    const auto& row = grid[rix];
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) out += std::string(width[c] - row[c].size() + 2, ' ');
    }
    out += "\n";
    if (rix == 0) {
      std::size_t total = width.empty() ? 0 : (width.size() - 1) * 2;
      for (std::size_t w : width) total += w;
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

}  // namespace

std::string reports_to_csv(std::span<const EvaluationReport> reports) {
  std::string out = "dataset,split,n,mae";
  for (const char* name : kRegionNames) out += std::string(",mae_") + name;
  out += ",failures\n";
  for (const auto& r : reports) {
    out += r.dataset + "," + r.split + "," + std::to_string(r.n) + "," + fmt(r.mae);
    for (int i = 0; i < kNumRegions; ++i) out += "," + fmt(r.per_region_mae[i]);
    out += "," + std::to_string(r.failures) + "\n";
  }
  return out;
}

std::string reports_to_table(std::span<const EvaluationReport> reports) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> head = {"Dataset", "Split", "N", "MAE"};
  for (const char* name : kRegionNames) head.push_back(name);
  head.push_back("Failures");
  grid.push_back(std::move(head));
  for (const auto& r : reports) {
    std::vector<std::string> row = {r.dataset, r.split, std::to_string(r.n), fmt(r.mae)};
    for (int i = 0; i < kNumRegions; ++i) row.push_back(fmt(r.per_region_mae[i]));
    row.push_back(std::to_string(r.failures));
    grid.push_back(std::move(row));
  }
  return align_table(grid);
}

std::string split_table(std::span<const EvaluationReport> reports, std::int64_t param_count,
                        std::int64_t size_bytes) {
  std::vector<std::string> order;
  for (const auto& r : reports)
    if (std::find(order.begin(), order.end(), r.dataset) == order.end())
      order.push_back(r.dataset);

  const std::string size_cell = with_thousands(param_count) + " params (" +
                                fmt(static_cast<double>(size_bytes) / (1024.0 * 1024.0)) + " MB)";
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"Dataset", "Training", "Validation", "Testing", "Size"});
  for (const auto& name : order) {
    std::vector<std::string> row = {name, "-", "-", "-", size_cell};
    for (const auto& r : reports) {
      if (r.dataset != name) continue;
      if (r.split == "train")
        row[1] = fmt(r.mae);
      else if (r.split == "val")
        row[2] = fmt(r.mae);
      else if (r.split == "test")
        row[3] = fmt(r.mae);
    }
    grid.push_back(std::move(row));
  }
  return align_table(grid);
}

std::string cross_table(std::span<const EvaluationReport> reports, const std::string& model_label) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> head = {"Model"};
  std::vector<std::string> row = {model_label};
  for (const auto& r : reports) {
    head.push_back(r.dataset);
    row.push_back(fmt(r.mae));
  }
  grid.push_back(std::move(head));
  grid.push_back(std::move(row));
  return align_table(grid);
}

}  // namespace patchbmi

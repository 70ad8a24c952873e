#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "patchbmi/bench.hpp"
#include "patchbmi/dataset.hpp"
#include "patchbmi/ensemble.hpp"
#include "patchbmi/evaluate.hpp"
#include "patchbmi/manifest.hpp"
#include "patchbmi/training.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace patchbmi;

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out << text;
  if (!out) throw ValidationError("short write: " + path.string());
}

std::string dataset_label_for(const fs::path& manifest_path) {
  auto stem = manifest_path.stem().string();
  return stem.empty() ? manifest_path.string() : stem;
}

struct TrainArgs {
  std::string manifest, val_manifest, out_dir, rules_file;
  TrainConfig cfg;
  bool no_augment = false;
  bool json_out = false;
  int threads = 1;
};

int cmd_train(const TrainArgs& a) {
  RuleTable rules = a.rules_file.empty() ? default_rule_table() : read_rules_file(a.rules_file);
  const ModelConfig model_cfg;

  ManifestParseResult parsed = read_manifest_file(a.manifest);
  fs::create_directories(a.out_dir);
  const fs::path rejection_path = fs::path(a.out_dir) / "rejections.csv";
  if (!parsed.rejected.empty()) {
    write_text_file(rejection_path, rejection_report_csv(parsed.rejected));
    std::cerr << "warning: " << parsed.rejected.size() << " manifest rows rejected, see "
              << rejection_path.string() << "\n";
  }
  if (parsed.records.empty())
    throw ValidationError("no usable rows in " + a.manifest +
                          (parsed.rejected.empty() ? "" : ", see " + rejection_path.string()));

  std::vector<ManifestRecord> train_records, val_records;
  if (!a.val_manifest.empty()) {
    train_records = std::move(parsed.records);
    ManifestParseResult val_parsed = read_manifest_file(a.val_manifest);
    if (!val_parsed.rejected.empty())
      std::cerr << "warning: " << val_parsed.rejected.size() << " rows rejected in "
                << a.val_manifest << "\n";
    val_records = std::move(val_parsed.records);
  } else {
    SplitResult split = split_dataset(parsed.records, SplitRatios{}, a.cfg.seed);
    for (const auto& w : split.warnings)
      if (w != "empty test partition") std::cerr << "warning: " << w << "\n";
    train_records = std::move(split.train);
    val_records = std::move(split.val);
  }
  if (train_records.empty()) throw ValidationError("training partition is empty");
  if (val_records.empty()) throw ValidationError("validation partition is empty");

  const PreprocessConfig pre_cfg;
  auto train_samples =
      std::make_shared<const std::vector<LoadedSample>>(load_samples(train_records, pre_cfg));
  auto val_samples =
      std::make_shared<const std::vector<LoadedSample>>(load_samples(val_records, pre_cfg));

  std::array<std::unique_ptr<FaceRegionDataset>, kNumRegions> train_ds, val_ds;
  std::array<const RegionDataset*, kNumRegions> train_ptr{}, val_ptr{};
  const AugmentConfig aug_cfg;
  for (int r = 0; r < kNumRegions; ++r) {
    train_ds[r] = std::make_unique<FaceRegionDataset>(train_samples, static_cast<Region>(r), rules,
                                                      aug_cfg, model_cfg.input_side,
                                                      /*augment_enabled=*/!a.no_augment);
    val_ds[r] = std::make_unique<FaceRegionDataset>(val_samples, static_cast<Region>(r), rules,
                                                    aug_cfg, model_cfg.input_side,
                                                    /*augment_enabled=*/false);
    train_ptr[r] = train_ds[r].get();
    val_ptr[r] = val_ds[r].get();
  }

  EnsembleFitResult fit = train_ensemble(train_ptr, val_ptr, model_cfg, a.cfg, a.threads);

  EnsembleModel model;
  model.config = model_cfg;
  model.rules = rules;
  model.preprocess = pre_cfg;
  json region_prov = json::object();
  for (int r = 0; r < kNumRegions; ++r) {
    model.heads[r] = std::move(fit.regions[r].params);
    region_prov[kRegionNames[r]] = {{"epochs_run", fit.regions[r].epochs_run},
                                    {"best_val_mse", fit.regions[r].best_val_mse}};
  }
  model.provenance = {{"seed", a.cfg.seed},
                      {"train_samples", train_samples->size()},
                      {"val_samples", val_samples->size()},
                      {"augmentation", !a.no_augment},
                      {"regions", region_prov}};

  save_bundle(model, a.out_dir);
  for (int r = 0; r < kNumRegions; ++r)
    write_text_file(fs::path(a.out_dir) / ("history_" + std::string(kRegionNames[r]) + ".csv"),
                    history_csv(fit.regions[r].history));

  if (a.json_out) {
    json out = {{"bundle", a.out_dir},
                {"parameter_count", ensemble_parameter_count(model)},
                {"regions", region_prov}};
    std::cout << out.dump(2) << "\n";
  } else {
    for (int r = 0; r < kNumRegions; ++r)
      std::printf("%-12s epochs=%-4d best_val_mse=%.6f\n", kRegionNames[r],
                  fit.regions[r].epochs_run, fit.regions[r].best_val_mse);
    std::printf("bundle written to %s (%lld parameters)\n", a.out_dir.c_str(),
                static_cast<long long>(ensemble_parameter_count(model)));
  }
  return 0;
}

struct PredictArgs {
  std::string model_dir, image, landmarks;
  bool json_out = false;
  int threads = 1;
};

int cmd_predict(const PredictArgs& a) {
  const EnsembleModel model = load_bundle(a.model_dir);
  const Prediction pred = predict_from_files(model, a.image, a.landmarks, a.threads);
  if (a.json_out) {
    json per = json::object();
    for (int r = 0; r < kNumRegions; ++r) per[kRegionNames[r]] = pred.per_region[r];
    std::cout << json{{"bmi", pred.bmi}, {"per_region", per}}.dump(2) << "\n";
  } else {
    std::printf("bmi=%.3f\n", pred.bmi);
  }
  return 0;
}

struct EvaluateArgs {
  std::string model_dir, manifest, split = "auto", label, csv_path;
  bool json_out = false;
  int threads = 1;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const EnsembleModel model = load_bundle(a.model_dir);
  ManifestParseResult parsed = read_manifest_file(a.manifest);
  if (!parsed.rejected.empty())
    std::cerr << "warning: " << parsed.rejected.size() << " manifest rows rejected\n";
  if (parsed.records.empty()) throw ValidationError("no usable rows in " + a.manifest);
  const std::string label = a.label.empty() ? dataset_label_for(a.manifest) : a.label;

  std::vector<EvaluationReport> reports;
  if (a.split == "all") {
    reports.push_back(evaluate(model, parsed.records, label, "all", a.threads));
  } else if (a.split == "auto") {
    // one report per split present; everything lumped together when rows
    // carry no split labels
    std::array<std::pair<const char*, std::vector<ManifestRecord>>, 3> groups = {
        {{"train", {}}, {"val", {}}, {"test", {}}}};
    std::vector<ManifestRecord> unlabeled;
    for (auto& rec : parsed.records) {
      if (!rec.split) {
        unlabeled.push_back(rec);
        continue;
      }
      for (auto& [name, group] : groups)
        if (*rec.split == name) group.push_back(rec);
    }
    for (auto& [name, group] : groups)
      if (!group.empty()) reports.push_back(evaluate(model, group, label, name, a.threads));
    if (reports.empty())
      reports.push_back(evaluate(model, unlabeled, label, "all", a.threads));
    else if (!unlabeled.empty())
      std::cerr << "warning: " << unlabeled.size() << " rows without split labels skipped\n";
  } else {
    std::vector<ManifestRecord> group;
    for (auto& rec : parsed.records)
      if (rec.split && *rec.split == a.split) group.push_back(rec);
    if (group.empty()) throw ValidationError("no rows labeled split=" + a.split);
    reports.push_back(evaluate(model, group, label, a.split, a.threads));
  }

  if (!a.csv_path.empty()) write_text_file(a.csv_path, reports_to_csv(reports));
  if (a.json_out) {
    json arr = json::array();
    for (const auto& r : reports) {
      json per = json::object();
      for (int i = 0; i < kNumRegions; ++i) per[kRegionNames[i]] = r.per_region_mae[i];
      arr.push_back({{"dataset", r.dataset},
                     {"split", r.split},
                     {"n", r.n},
                     {"mae", r.mae},
                     {"per_region_mae", per},
                     {"failures", r.failures}});
    }
    std::cout << arr.dump(2) << "\n";
  } else {
    const auto [params, bytes] = count_params_and_size(model);
    const bool split_labeled =
        std::any_of(reports.begin(), reports.end(),
                    [](const EvaluationReport& r) { return r.split != "all"; });
    if (split_labeled)
      std::cout << split_table(reports, params, bytes);
    else
      std::cout << reports_to_table(reports);
    for (const auto& r : reports)
      for (const auto& reason : r.failure_reasons) std::cerr << "sample failed: " << reason << "\n";
  }
  return 0;
}

struct CrossEvaluateArgs {
  std::vector<std::string> manifests;
  std::string model_dir, csv_path;
  bool json_out = false;
  int threads = 1;
};

int cmd_cross_evaluate(const CrossEvaluateArgs& a) {
  const EnsembleModel model = load_bundle(a.model_dir);
  std::vector<NamedManifest> foreign;
  for (const auto& path : a.manifests) {
    ManifestParseResult parsed = read_manifest_file(path);
    if (!parsed.rejected.empty())
      std::cerr << "warning: " << parsed.rejected.size() << " rows rejected in " << path << "\n";
    if (parsed.records.empty()) throw ValidationError("no usable rows in " + path);
    foreign.push_back({dataset_label_for(path), std::move(parsed.records)});
  }
  const std::vector<EvaluationReport> reports = cross_evaluate(model, foreign, a.threads);

  if (!a.csv_path.empty()) write_text_file(a.csv_path, reports_to_csv(reports));
  if (a.json_out) {
    json arr = json::array();
    for (const auto& r : reports)
      arr.push_back({{"dataset", r.dataset}, {"n", r.n}, {"mae", r.mae}, {"failures", r.failures}});
    std::cout << arr.dump(2) << "\n";
  } else {
    std::cout << cross_table(reports, "PatchBMI-Net");
  }
  return 0;
}

struct BenchArgs {
  std::string model_dir, image, landmarks, mode = "both";
  int iterations = 1000;
  int warmup = 10;
  bool json_out = false;
};

int cmd_bench(const BenchArgs& a) {
  const EnsembleModel model = load_bundle(a.model_dir);
  json j = json::object();
  std::string text;
  if (a.mode == "serial" || a.mode == "both") {
    const BenchReport r = measure_latency(model, a.image, a.landmarks, a.iterations, a.warmup,
                                          /*parallel_heads=*/false);
    j["serial"] = bench_to_json(r);
    text += "== serial heads ==\n" + bench_to_text(r);
  }
  if (a.mode == "parallel" || a.mode == "both") {
    const BenchReport r = measure_latency(model, a.image, a.landmarks, a.iterations, a.warmup,
                                          /*parallel_heads=*/true);
    j["parallel"] = bench_to_json(r);
    text += "== parallel heads ==\n" + bench_to_text(r);
  }
  if (a.json_out)
    std::cout << j.dump(2) << "\n";
  else
    std::cout << text;
  return 0;
}

struct ExtractArgs {
  std::string image, landmarks, out_dir, rules_file;
  bool json_out = false;
};

int cmd_extract_patches(const ExtractArgs& a) {
  const RuleTable rules =
      a.rules_file.empty() ? default_rule_table() : read_rules_file(a.rules_file);
  const ModelConfig model_cfg;
  const PreprocessConfig pre_cfg;
  const Image raw = read_image_file(a.image);
  const LandmarkSet lm = read_landmarks_file(a.landmarks);
  auto [gray, scaled] = preprocess(raw, lm, pre_cfg);

  fs::create_directories(a.out_dir);
  json out = json::object();
  for (int r = 0; r < kNumRegions; ++r) {
    const Box box = roi_from_rule(rules[r], scaled, gray.width, gray.height);
    const Image patch = extract_patch_image(gray, box, model_cfg.input_side);
    const fs::path path = fs::path(a.out_dir) / (std::string(kRegionNames[r]) + ".pgm");
    write_pgm_file(patch, path);
    if (a.json_out) {
      out[kRegionNames[r]] = {{"box", {box.x0, box.y0, box.x1, box.y1}}, {"file", path.string()}};
    } else {
      std::printf("%-12s box=[%d,%d,%d,%d) -> %s\n", kRegionNames[r], box.x0, box.y0, box.x1,
                  box.y1, path.c_str());
    }
  }
  if (a.json_out) std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PatchBMI-Net: facial-patch ensemble BMI estimation"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train the six-region ensemble from a manifest");
  train->add_option("--manifest", train_args.manifest, "Training manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--val-manifest", train_args.val_manifest,
                    "Separate validation manifest (default: split from --manifest)")
      ->check(CLI::ExistingFile);
  train->add_option("--out", train_args.out_dir, "Output bundle directory")->required();
  train->add_option("--seed", train_args.cfg.seed, "Training seed")->capture_default_str();
  train->add_option("--lr", train_args.cfg.learning_rate, "Adam learning rate")
      ->capture_default_str();
  train->add_option("--batch", train_args.cfg.batch_size, "Minibatch size")->capture_default_str();
  train->add_option("--patience", train_args.cfg.patience, "Early-stopping patience (epochs)")
      ->capture_default_str();
  train->add_option("--max-epochs", train_args.cfg.max_epochs, "Epoch cap")->capture_default_str();
  train->add_option("--rules", train_args.rules_file, "ROI rule table JSON override")
      ->check(CLI::ExistingFile);
  train->add_flag("--no-augment", train_args.no_augment, "Disable flip/rotation augmentation");
  train->add_flag("--json", train_args.json_out, "Machine-readable output");
  train->add_option("--threads", train_args.threads, "Worker threads (regions in parallel)")
      ->envname("PATCHBMI_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "Predict BMI for one face image");
  predict->add_option("--model", predict_args.model_dir, "Bundle directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  predict->add_option("--image", predict_args.image, "Face image (PGM/PPM)")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--landmarks", predict_args.landmarks, "68-point landmark sidecar")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_flag("--json", predict_args.json_out, "Machine-readable output");
  predict->add_option("--threads", predict_args.threads, "Worker threads (heads in parallel)")
      ->envname("PATCHBMI_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score MAE over a manifest");
  evaluate->add_option("--model", eval_args.model_dir, "Bundle directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  evaluate->add_option("--manifest", eval_args.manifest, "Evaluation manifest CSV")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate
      ->add_option("--split", eval_args.split,
                   "train|val|test|all|auto (auto reports each labeled split)")
      ->check(CLI::IsMember({"train", "val", "test", "all", "auto"}))
      ->capture_default_str();
  evaluate->add_option("--label", eval_args.label, "Dataset label (default: manifest stem)");
  evaluate->add_option("--csv", eval_args.csv_path, "Also write the report CSV here");
  evaluate->add_flag("--json", eval_args.json_out, "Machine-readable output");
  evaluate->add_option("--threads", eval_args.threads, "Worker threads (samples in parallel)")
      ->envname("PATCHBMI_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CrossEvaluateArgs cross_args;
  auto* cross = app.add_subcommand("cross-evaluate", "Score MAE on foreign dataset manifests");
  cross->add_option("--model", cross_args.model_dir, "Bundle directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  cross->add_option("--manifest", cross_args.manifests, "Foreign manifest (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  cross->add_option("--csv", cross_args.csv_path, "Also write the report CSV here");
  cross->add_flag("--json", cross_args.json_out, "Machine-readable output");
  cross->add_option("--threads", cross_args.threads, "Worker threads (samples in parallel)")
      ->envname("PATCHBMI_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Measure end-to-end inference latency");
  bench->add_option("--model", bench_args.model_dir, "Bundle directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench->add_option("--image", bench_args.image, "Face image (PGM/PPM)")
      ->required()
      ->check(CLI::ExistingFile);
  bench->add_option("--landmarks", bench_args.landmarks, "68-point landmark sidecar")
      ->required()
      ->check(CLI::ExistingFile);
  bench->add_option("--iterations", bench_args.iterations, "Measured iterations")
      ->capture_default_str();
  bench->add_option("--warmup", bench_args.warmup, "Discarded warmup iterations")
      ->capture_default_str();
  bench->add_option("--mode", bench_args.mode, "serial|parallel|both head execution")
      ->check(CLI::IsMember({"serial", "parallel", "both"}))
      ->capture_default_str();
  bench->add_flag("--json", bench_args.json_out, "Machine-readable output");

  ExtractArgs extract_args;
  auto* extract =
      app.add_subcommand("extract-patches", "Write the six region patches as PGM files");
  extract->add_option("--image", extract_args.image, "Face image (PGM/PPM)")
      ->required()
      ->check(CLI::ExistingFile);
  extract->add_option("--landmarks", extract_args.landmarks, "68-point landmark sidecar")
      ->required()
      ->check(CLI::ExistingFile);
  extract->add_option("--out", extract_args.out_dir, "Output directory")->required();
  extract->add_option("--rules", extract_args.rules_file, "ROI rule table JSON override")
      ->check(CLI::ExistingFile);
  extract->add_flag("--json", extract_args.json_out, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors are validation failures
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*predict) return cmd_predict(predict_args);
    if (*evaluate) return cmd_evaluate(eval_args);
    if (*cross) return cmd_cross_evaluate(cross_args);
    if (*bench) return cmd_bench(bench_args);
    if (*extract) return cmd_extract_patches(extract_args);
  } catch (const patchbmi::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const patchbmi::ProcessingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#include "patchbmi/ensemble.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <future>
#include <sstream>

namespace patchbmi {

using nlohmann::json;

EnsembleModel init_ensemble(std::uint32_t seed, const ModelConfig& cfg) {
  EnsembleModel m;
  m.config = cfg;
  for (int r = 0; r < kNumRegions; ++r) {
    std::mt19937 rng(seed + static_cast<std::uint32_t>(r));
    m.heads[r] = init_weights<float>(cfg, rng);
  }
  return m;
}

std::int64_t ensemble_parameter_count(const EnsembleModel& model) {
  std::int64_t n = 0;
  for (const auto& head : model.heads) n += parameter_count(head);
  return n;
}

Prediction predict_from_patches(const EnsembleModel& model, const PatchSet& patches,
                                int threads) {
  if (threads < 1) throw ValidationError("predict: threads must be >= 1");
  Prediction pred;
  auto run_head = [&](int r) {
    std::mt19937 unused(0);
    return static_cast<double>(
        forward(model.heads[r], patches.patches[r], model.config, /*training=*/false, unused)
            .item());
  };
  if (threads <= 1) {
    for (int r = 0; r < kNumRegions; ++r) pred.per_region[r] = run_head(r);
  } else {
    std::array<std::future<double>, kNumRegions> futs;
    for (int r = 0; r < kNumRegions; ++r)
      futs[r] = std::async(std::launch::async, run_head, r);
    for (int r = 0; r < kNumRegions; ++r) pred.per_region[r] = futs[r].get();
  }
  // fixed-order summation keeps threaded and serial results identical
  double total = 0.0;
  for (int r = 0; r < kNumRegions; ++r) total += pred.per_region[r];
  pred.bmi = total / kNumRegions;
  return pred;
}

Prediction predict_bmi(const EnsembleModel& model, const Image& img, const LandmarkSet& lm,
                       int threads) {
  auto [gray, scaled] = preprocess(img, lm, model.preprocess);
  const PatchSet patches = extract_all_patches(gray, scaled, model.rules, model.config.input_side);
  return predict_from_patches(model, patches, threads);
}

Prediction predict_from_files(const EnsembleModel& model, const std::filesystem::path& image_path,
                              const std::filesystem::path& landmarks_path, int threads) {
  return predict_bmi(model, read_image_file(image_path), read_landmarks_file(landmarks_path),
                     threads);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class BlobReader {
 public:
  BlobReader(std::span<const std::uint8_t> bytes, std::string context)
      : b_(bytes), ctx_(std::move(context)) {}

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == b_.size(); }

  std::uint32_t u32(const char* what) {
    if (b_.size() - pos_ < 4) fail(std::string("truncated ") + what);
    std::uint32_t v = static_cast<std::uint32_t>(b_[pos_]) |
                      (static_cast<std::uint32_t>(b_[pos_ + 1]) << 8) |
                      (static_cast<std::uint32_t>(b_[pos_ + 2]) << 16) |
                      (static_cast<std::uint32_t>(b_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }

  std::vector<float> f32_array(std::size_t n, const std::string& what) {
    if ((b_.size() - pos_) / 4 < n) fail("truncated " + what);
    std::vector<float> out(n);
    const std::uint8_t* p = b_.data() + pos_;
    for (std::size_t i = 0; i < n; ++i, p += 4) {
      const std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                              (static_cast<std::uint32_t>(p[1]) << 8) |
                              (static_cast<std::uint32_t>(p[2]) << 16) |
                              (static_cast<std::uint32_t>(p[3]) << 24);
      out[i] = std::bit_cast<float>(v);
    }
    pos_ += n * 4;
    return out;
  }

  std::string str(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) fail(std::string("truncated ") + what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw ValidationError(ctx_ + ": " + why + " at byte offset " + std::to_string(pos_));
  }

 private:
  std::span<const std::uint8_t> b_;
  std::string ctx_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("short write: " + path.string());
}

std::array<std::vector<int>, 9> expected_shapes(const ModelConfig& cfg) {
  const int flat = static_cast<int>(flat_features(cfg));
  return {{{cfg.conv1_channels, cfg.input_channels, 3, 3},
           {cfg.conv1_channels},
           {cfg.conv2_channels, cfg.conv1_channels, 3, 3},
           {cfg.conv2_channels},
           {cfg.attention_mid, cfg.conv2_channels, 1, 1},
           {cfg.conv2_channels, cfg.attention_mid, 1, 1},
           {cfg.fc1_units, flat},
           {cfg.fc1_units},
           {1, cfg.fc1_units}}};
}

}  // namespace

std::vector<std::uint8_t> serialize_params(const PatchModelParams& params) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kWeightsMagic, kWeightsMagic + 4);
  put_u32(out, kBundleFormatVersion);
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string name = kParamTensorNames[i];
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(tensors[i]->rank()));
    for (int d : tensors[i]->shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : tensors[i]->data()) put_f32(out, v);
  }
  return out;
}

PatchModelParams parse_params(std::span<const std::uint8_t> bytes, const ModelConfig& cfg,
                              const std::string& context) {
  BlobReader r(bytes, context);
  const std::string magic = r.str(4, "magic");
  if (magic != std::string(kWeightsMagic, 4))
    throw ValidationError(context + ": bad magic at byte offset 0, expected \"PBMI\"");
  const std::uint32_t version = r.u32("format version");
  if (version != kBundleFormatVersion)
    throw ValidationError(context + ": unsupported format version " + std::to_string(version) +
                          ", this build reads version " + std::to_string(kBundleFormatVersion));

  PatchModelParams params;
  auto tensors = params.tensors();
  const auto shapes = expected_shapes(cfg);
  std::array<bool, 9> seen{};

  while (!r.at_end()) {
    const std::uint32_t name_len = r.u32("tensor name length");
    if (name_len > 256) r.fail("implausible tensor name length " + std::to_string(name_len));
    const std::string name = r.str(name_len, "tensor name");
    int slot = -1;
    for (std::size_t i = 0; i < kParamTensorNames.size(); ++i)
      if (name == kParamTensorNames[i]) slot = static_cast<int>(i);
    if (slot < 0) r.fail("unknown tensor '" + name + "'");
    if (seen[slot]) r.fail("duplicate tensor '" + name + "'");
    seen[slot] = true;

    const std::uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > 8) r.fail("implausible rank for tensor '" + name + "'");
    std::vector<int> shape(rank);
    std::int64_t n = 1;
    for (auto& d : shape) {
      d = static_cast<int>(r.u32("tensor dimension"));
      n *= d;
    }
    if (shape != shapes[slot])
      r.fail("tensor '" + name + "' has unexpected shape for this model configuration");
    std::vector<float> vals =
        r.f32_array(static_cast<std::size_t>(n), "payload of tensor '" + name + "'");
    *tensors[slot] = Tensor(std::move(shape), std::move(vals), /*requires_grad=*/true);
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      throw ValidationError(context + ": missing tensor '" + std::string(kParamTensorNames[i]) +
                            "'");
  return params;
}

nlohmann::json rules_to_json(const RuleTable& rules) {
  json arr = json::array();
  for (const auto& r : rules) {
    arr.push_back({{"name", r.name},
                   {"anchor_a", r.anchor_a},
                   {"anchor_b", r.anchor_b},
                   {"pad_frac", r.pad_frac},
                   {"vertical", r.vertical == VerticalMode::kExtendUp ? "extend_up" : "span"},
                   {"extend_frac", r.extend_frac}});
  }
  return arr;
}

RuleTable rules_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kNumRegions)
    throw ValidationError("roi rules: expected an array of " + std::to_string(kNumRegions) +
                          " rules");
  RuleTable out;
  for (int i = 0; i < kNumRegions; ++i) {
    const json& r = j[i];
    RoiRule rule;
    rule.name = r.at("name").get<std::string>();
    rule.anchor_a = r.at("anchor_a").get<int>();
    rule.anchor_b = r.at("anchor_b").get<int>();
    rule.pad_frac = r.value("pad_frac", 0.15);
    const std::string vertical = r.value("vertical", "span");
    if (vertical == "span") {
      rule.vertical = VerticalMode::kSpan;
    } else if (vertical == "extend_up") {
      rule.vertical = VerticalMode::kExtendUp;
    } else {
      throw ValidationError("roi rules: unknown vertical mode '" + vertical + "'");
    }
    rule.extend_frac = r.value("extend_frac", 0.5);
    if (rule.anchor_a < 0 || rule.anchor_a >= kNumLandmarks || rule.anchor_b < 0 ||
        rule.anchor_b >= kNumLandmarks)
      throw ValidationError("roi rules: anchor index out of range in rule '" + rule.name + "'");
    out[i] = std::move(rule);
  }
  return out;
}

RuleTable read_rules_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open rules file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
  try {
    return rules_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string bundle_meta_text(const EnsembleModel& model) {
  json meta;
  meta["format"] = "patchbmi-bundle";
  meta["format_version"] = kBundleFormatVersion;
  meta["model_config"] = {{"input_channels", model.config.input_channels},
                          {"input_side", model.config.input_side},
                          {"conv1_channels", model.config.conv1_channels},
                          {"conv2_channels", model.config.conv2_channels},
                          {"attention_mid", model.config.attention_mid},
                          {"fc1_units", model.config.fc1_units},
                          {"dropout_p", model.config.dropout_p}};
  meta["preprocess"] = {{"resize_side", model.preprocess.resize_side}};
  json regions = json::array();
  for (const char* name : kRegionNames) regions.push_back(name);
  meta["regions"] = regions;
  meta["roi_rules"] = rules_to_json(model.rules);
  meta["parameter_count"] = ensemble_parameter_count(model);
  meta["provenance"] = model.provenance;
  return meta.dump(2) + "\n";
}

void save_bundle(const EnsembleModel& model, const std::filesystem::path& dir) {
  validate(model.config);
  std::filesystem::create_directories(dir);

  const std::string meta_text = bundle_meta_text(model);
  write_binary_file(dir / "meta.json",
                    std::span<const std::uint8_t>(
                        reinterpret_cast<const std::uint8_t*>(meta_text.data()), meta_text.size()));

  for (int r = 0; r < kNumRegions; ++r) {
    const auto blob = serialize_params(model.heads[r]);
    write_binary_file(dir / (std::string(kRegionNames[r]) + ".pbmi"), blob);
  }
}

EnsembleModel load_bundle(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream in(meta_path);
  if (!in) throw ValidationError("bundle missing meta.json: " + meta_path.string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw ValidationError(meta_path.string() + ": invalid JSON: " + e.what());
  }

  EnsembleModel model;
  try {
    if (meta.value("format", "") != "patchbmi-bundle")
      throw ValidationError("not a patchbmi bundle");
    const auto version = meta.at("format_version").get<std::uint32_t>();
    if (version != kBundleFormatVersion)
      throw ValidationError("unsupported bundle format version " + std::to_string(version) +
                            ", this build reads version " + std::to_string(kBundleFormatVersion));
    const json& mc = meta.at("model_config");
    model.config.input_channels = mc.at("input_channels").get<int>();
    model.config.input_side = mc.at("input_side").get<int>();
    model.config.conv1_channels = mc.at("conv1_channels").get<int>();
    model.config.conv2_channels = mc.at("conv2_channels").get<int>();
    model.config.attention_mid = mc.at("attention_mid").get<int>();
    model.config.fc1_units = mc.at("fc1_units").get<int>();
    model.config.dropout_p = mc.at("dropout_p").get<double>();
    validate(model.config);
    model.preprocess.resize_side = meta.at("preprocess").at("resize_side").get<int>();
    const json& regions = meta.at("regions");
    for (int r = 0; r < kNumRegions; ++r)
      if (regions.at(r).get<std::string>() != kRegionNames[r])
        throw ValidationError("unexpected region order in meta.json");
    model.rules = rules_from_json(meta.at("roi_rules"));
    model.provenance = meta.value("provenance", json::object());
  } catch (const json::exception& e) {
    throw ValidationError(meta_path.string() + ": " + e.what());
  }

  for (int r = 0; r < kNumRegions; ++r) {
    const auto path = dir / (std::string(kRegionNames[r]) + ".pbmi");
    if (!std::filesystem::exists(path))
      throw ValidationError("bundle missing region weight file: " + path.string());
    const auto bytes = read_binary_file(path);
    model.heads[r] = parse_params(bytes, model.config, path.filename().string());
  }
  return model;
}

}  // namespace patchbmi

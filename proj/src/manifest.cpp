#include "patchbmi/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "patchbmi/error.hpp"
#include "patchbmi/rng.hpp"

namespace patchbmi {

double compute_bmi(double weight_kg, double height_m) {
  if (!(weight_kg > 0.0) || !(height_m > 0.0))
    throw ValidationError("compute_bmi: weight and height must be positive");
  return weight_kg / (height_m * height_m);
}

double lbs_to_kg(double lbs) { return lbs * 0.45359237; }
double inches_to_m(double inches) { return inches * 0.0254; }

namespace {

// Split one CSV line; double quotes wrap fields, "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

ManifestParseResult parse_manifest(std::string_view csv_text,
                                   const std::filesystem::path& base_dir) {
  std::istringstream in{std::string(csv_text)};
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("manifest: empty file");

  const std::vector<std::string> header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"image_path", "landmarks_path"})
    if (!col.count(required))
      throw ValidationError(std::string("manifest: missing mandatory column '") + required + "'");

  auto cell = [&](const std::vector<std::string>& row, const char* name) -> std::string {
    auto it = col.find(name);
    if (it == col.end() || it->second >= row.size()) return "";
    return row[it->second];
  };
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base_dir / fp).string();
  };

  ManifestParseResult result;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto row = split_csv_line(line);
    auto reject = [&](const std::string& why) { result.rejected.push_back({line_no, why}); };

    ManifestRecord rec;
    rec.image_path = cell(row, "image_path");
    rec.landmarks_path = cell(row, "landmarks_path");
    if (rec.image_path.empty() || rec.landmarks_path.empty()) {
      reject("missing image_path or landmarks_path");
      continue;
    }
    rec.image_path = resolve(rec.image_path);
    rec.landmarks_path = resolve(rec.landmarks_path);

    const std::string bmi_s = cell(row, "bmi");
    std::optional<double> bmi = parse_double(bmi_s);
    if (!bmi_s.empty() && !bmi) {
      reject("unparseable bmi value '" + bmi_s + "'");
      continue;
    }
    if (!bmi) {
      std::optional<double> w = parse_double(cell(row, "weight_kg"));
      std::optional<double> h = parse_double(cell(row, "height_m"));
      if (!w) {
        if (auto lbs = parse_double(cell(row, "weight_lbs"))) w = lbs_to_kg(*lbs);
      }
      if (!h) {
        if (auto in_ = parse_double(cell(row, "height_in"))) h = inches_to_m(*in_);
      }
      if (!w || !h) {
        reject("no bmi and no usable weight/height pair");
        continue;
      }
      if (!(*w > 0.0) || !(*h > 0.0)) {
        reject("non-positive weight or height");
        continue;
      }
      bmi = compute_bmi(*w, *h);
    }
    if (!(*bmi > kMinBmi) || !(*bmi < kMaxBmi)) {
      reject("bmi " + std::to_string(*bmi) + " outside plausible range (" +
             std::to_string(kMinBmi) + ", " + std::to_string(kMaxBmi) + ")");
      continue;
    }
    rec.bmi = *bmi;

    const std::string split = cell(row, "split");
    if (!split.empty()) {
      if (split != "train" && split != "val" && split != "test") {
        reject("unknown split '" + split + "'");
        continue;
      }
      rec.split = split;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

ManifestParseResult read_manifest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest(ss.str(), path.parent_path());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string rejection_report_csv(const std::vector<RejectedRow>& rejected) {
  std::string out = "line,reason\n";
  for (const auto& r : rejected) {
    std::string reason = r.reason;
    if (reason.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : reason) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      reason = q + "\"";
    }
    out += std::to_string(r.line) + "," + reason + "\n";
  }
  return out;
}

SplitResult split_dataset(const std::vector<ManifestRecord>& records, const SplitRatios& ratios,
                          std::uint32_t seed) {
  if (ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ValidationError("split ratios must be non-negative and sum to 1");

  SplitResult out;
  std::vector<const ManifestRecord*> unsplit;
  for (const auto& r : records) {
    if (!r.split) {
      unsplit.push_back(&r);
    } else if (*r.split == "train") {
      out.train.push_back(r);
    } else if (*r.split == "val") {
      out.val.push_back(r);
    } else {
      out.test.push_back(r);
    }
  }

  std::mt19937 rng(seed);
  std::vector<std::size_t> order = shuffled_indices(unsplit.size(), rng);
  const std::size_t n = order.size();
  const std::size_t n_train = static_cast<std::size_t>(std::floor(n * ratios.train));
  const std::size_t n_val = static_cast<std::size_t>(std::floor(n * ratios.val));
  for (std::size_t i = 0; i < n; ++i) {
    const ManifestRecord& r = *unsplit[order[i]];
    if (i < n_train)
      out.train.push_back(r);
    else if (i < n_train + n_val)
      out.val.push_back(r);
    else
      out.test.push_back(r);
  }

  for (const auto& [part, name] :
       {std::pair{&out.train, "train"}, {&out.val, "val"}, {&out.test, "test"}})
    if (part->empty()) out.warnings.push_back(std::string("empty ") + name + " partition");
  return out;
}

}  // namespace patchbmi

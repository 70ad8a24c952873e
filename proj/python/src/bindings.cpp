#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "patchbmi/bench.hpp"
#include "patchbmi/dataset.hpp"
#include "patchbmi/ensemble.hpp"
#include "patchbmi/evaluate.hpp"
#include "patchbmi/manifest.hpp"

namespace py = pybind11;
using namespace patchbmi;

namespace {

Image image_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() == 2)
    return Image{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), 1,
                 std::vector<std::uint8_t>(a.data(), a.data() + a.size())};
  if (a.ndim() == 3 && a.shape(2) == 3)
    return Image{static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), 3,
                 std::vector<std::uint8_t>(a.data(), a.data() + a.size())};
  throw ValidationError("image array must be HxW or HxWx3 uint8");
}

LandmarkSet landmarks_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(0) != kNumLandmarks || a.shape(1) != 2)
    throw ValidationError("landmark array must have shape (68, 2)");
  LandmarkSet lm;
  const double* p = a.data();
  for (int i = 0; i < kNumLandmarks; ++i) lm.pts[i] = {p[2 * i], p[2 * i + 1]};
  return lm;
}

py::array_t<float> patches_to_array(const PatchSet& set, int side) {
  py::array_t<float> out({kNumRegions, 3, side, side});
  float* dst = out.mutable_data();
  for (int r = 0; r < kNumRegions; ++r) {
    const std::span<const float> src = set.patches[r].data();
    std::memcpy(dst + static_cast<std::size_t>(r) * src.size(), src.data(),
                src.size() * sizeof(float));
  }
  return out;
}

py::dict prediction_to_dict(const Prediction& pred) {
  py::dict per;
  for (int r = 0; r < kNumRegions; ++r) per[kRegionNames[r]] = pred.per_region[r];
  py::dict out;
  out["bmi"] = pred.bmi;
  out["per_region"] = per;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "PatchBMI-Net: six facial-patch CNN regressors ensembled for BMI estimation";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ProcessingError>(m, "ProcessingError", PyExc_RuntimeError);

  m.def("compute_bmi", &compute_bmi, py::arg("weight_kg"), py::arg("height_m"),
        "BMI in kg/m^2; both arguments must be positive.");
  m.def("lbs_to_kg", &lbs_to_kg, py::arg("lbs"));
  m.def("inches_to_m", &inches_to_m, py::arg("inches"));
  m.def(
      "mae",
      [](const std::vector<double>& pred, const std::vector<double>& target) {
        return mae(std::span<const double>(pred), std::span<const double>(target));
      },
      py::arg("predictions"), py::arg("targets"), "Mean absolute error of two equal-length lists.");

  m.def(
      "layer_parameter_counts",
      []() {
        const LayerParameterCounts c = layer_parameter_counts(ModelConfig{});
        py::dict d;
        d["conv1"] = c.conv1;
        d["conv2"] = c.conv2;
        d["attention"] = c.attention;
        d["fc1"] = c.fc1;
        d["fc2"] = c.fc2;
        d["total"] = c.total;
        return d;
      },
      "Per-layer trainable parameter counts of one region model.");

  m.attr("REGION_NAMES") = std::vector<std::string>(kRegionNames.begin(), kRegionNames.end());
  m.attr("NUM_LANDMARKS") = kNumLandmarks;
  m.attr("PATCH_SIDE") = ModelConfig{}.input_side;

  py::class_<EnsembleModel>(m, "EnsembleModel")
      .def_property_readonly("parameter_count",
                             [](const EnsembleModel& self) { return ensemble_parameter_count(self); })
      .def_property_readonly("bundle_bytes",
                             [](const EnsembleModel& self) { return count_params_and_size(self).second; })
      .def(
          "save", [](const EnsembleModel& self, const std::string& dir) { save_bundle(self, dir); },
          py::arg("dir"), "Write meta.json plus the six per-region weight blobs.")
      .def(
          "predict",
          [](const EnsembleModel& self, const std::string& image, const std::string& landmarks,
             int threads) { return predict_from_files(self, image, landmarks, threads).bmi; },
          py::arg("image"), py::arg("landmarks"), py::arg("threads") = 1,
          "Ensemble BMI estimate for one image/landmark pair on disk.")
      .def(
          "predict_detailed",
          [](const EnsembleModel& self, const std::string& image, const std::string& landmarks,
             int threads) {
            return prediction_to_dict(predict_from_files(self, image, landmarks, threads));
          },
          py::arg("image"), py::arg("landmarks"), py::arg("threads") = 1,
          "Like predict but returns {'bmi': ..., 'per_region': {...}}.")
      .def(
          "predict_array",
          [](const EnsembleModel& self,
             const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& image,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& landmarks,
             int threads) {
            const Image img = image_from_array(image);
            const LandmarkSet lm = landmarks_from_array(landmarks);
            auto [gray, scaled] = preprocess(img, lm, self.preprocess);
            const PatchSet patches =
                extract_all_patches(gray, scaled, self.rules, self.config.input_side);
            return predict_from_patches(self, patches, threads).bmi;
          },
          py::arg("image"), py::arg("landmarks"), py::arg("threads") = 1,
          "Ensemble BMI estimate for an in-memory uint8 image (HxW or HxWx3) and (68,2) landmarks.")
      .def(
          "extract_patches",
          [](const EnsembleModel& self, const std::string& image, const std::string& landmarks) {
            const Image raw = read_image_file(image);
            const LandmarkSet lm = read_landmarks_file(landmarks);
            auto [gray, scaled] = preprocess(raw, lm, self.preprocess);
            const PatchSet set =
                extract_all_patches(gray, scaled, self.rules, self.config.input_side);
            return patches_to_array(set, self.config.input_side);
          },
          py::arg("image"), py::arg("landmarks"),
          "Float32 array of shape (6, 3, side, side): the model-input patches in region order.");

  m.def(
      "init_ensemble",
      [](std::uint32_t seed) { return init_ensemble(seed, ModelConfig{}); }, py::arg("seed") = 0,
      "Freshly initialized six-head ensemble (uniform fan-in weights, zero biases).");
  m.def(
      "load_bundle", [](const std::string& dir) { return load_bundle(dir); }, py::arg("dir"),
      "Load a bundle directory written by save/train.");
}

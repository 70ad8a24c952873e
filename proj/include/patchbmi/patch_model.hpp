#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "patchbmi/tensor.hpp"

namespace patchbmi {

// Hyperparameters of one patch regressor. The defaults are the deployed
// architecture: 3x32x32 input, two 3x3 conv blocks (32 then 64 channels, each
// followed by relu and 2x2 max pooling), dropout, a squeeze-and-excite style
// channel attention block, then 4096->128->1 fully connected layers.
struct ModelConfig {
  int input_channels = 3;
  int input_side = 32;  // must be divisible by 4 (two pooling stages)
  int conv1_channels = 32;
  int conv2_channels = 64;
  int attention_mid = 32;
  int fc1_units = 128;
  double dropout_p = 0.5;
};

void validate(const ModelConfig& cfg);

// flattened feature size after conv2 + second pooling
std::int64_t flat_features(const ModelConfig& cfg);

// Learnable tensors of one patch regressor. The attention convolutions and the
// output layer carry no bias term.
template <typename S>
struct PatchModelParamsT {
  TensorT<S> conv1_w, conv1_b;
  TensorT<S> conv2_w, conv2_b;
  TensorT<S> attn_w1, attn_w2;
  TensorT<S> fc1_w, fc1_b;
  TensorT<S> fc2_w;

  // Canonical iteration order; also the serialization order.
  std::array<TensorT<S>*, 9> tensors();
  std::array<const TensorT<S>*, 9> tensors() const;

  PatchModelParamsT clone() const;
};

using PatchModelParams = PatchModelParamsT<float>;

// Serialization / display names, index-aligned with tensors().
inline constexpr std::array<const char*, 9> kParamTensorNames = {
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "attn_w1",
    "attn_w2", "fc1_w",   "fc1_b",   "fc2_w"};

// Uniform init in +-sqrt(6/fan_in) for weights, zeros for biases. Tensors are
// filled in tensors() order with a fixed scan, so one seed pins every value.
template <typename S>
PatchModelParamsT<S> init_weights(const ModelConfig& cfg, std::mt19937& rng);

// Squeeze-and-excite gate: global average pool -> 1x1 conv (C -> mid) -> relu
// -> 1x1 conv (mid -> C) -> sigmoid, applied as a per-channel scale on the
// input feature map.
template <typename S>
TensorT<S> channel_attention(const TensorT<S>& input, const TensorT<S>& attn_w1,
                             const TensorT<S>& attn_w2, GradTapeT<S>* tape = nullptr);

// Full regressor forward pass: [C,side,side] patch -> scalar estimate.
// `training` enables dropout; rng is only consumed in training mode. When
// `shape_trace` is non-null it receives the shape after every stage: input,
// conv1, pool1, conv2, pool2, dropout, attention, flatten, fc1, fc2.
template <typename S>
TensorT<S> forward(const PatchModelParamsT<S>& params, const TensorT<S>& patch,
                   const ModelConfig& cfg, bool training, std::mt19937& rng,
                   GradTapeT<S>* tape = nullptr,
                   std::vector<std::vector<int>>* shape_trace = nullptr);

// Exact learnable scalar count of one regressor.
template <typename S>
std::int64_t parameter_count(const PatchModelParamsT<S>& params);

struct LayerParameterCounts {
  std::int64_t conv1 = 0;      // weights + bias
  std::int64_t conv2 = 0;      // weights + bias
  std::int64_t attention = 0;  // both 1x1 convs, bias-free
  std::int64_t fc1 = 0;        // weights + bias
  std::int64_t fc2 = 0;        // weights, bias-free
  std::int64_t total = 0;
};

// Closed-form counts from the configuration alone.
LayerParameterCounts layer_parameter_counts(const ModelConfig& cfg);

extern template struct PatchModelParamsT<float>;
extern template struct PatchModelParamsT<double>;
extern template PatchModelParamsT<float> init_weights(const ModelConfig&, std::mt19937&);
extern template PatchModelParamsT<double> init_weights(const ModelConfig&, std::mt19937&);
extern template TensorT<float> channel_attention(const TensorT<float>&, const TensorT<float>&,
                                                 const TensorT<float>&, GradTapeT<float>*);
extern template TensorT<double> channel_attention(const TensorT<double>&, const TensorT<double>&,
                                                  const TensorT<double>&, GradTapeT<double>*);
extern template TensorT<float> forward(const PatchModelParamsT<float>&, const TensorT<float>&,
                                       const ModelConfig&, bool, std::mt19937&, GradTapeT<float>*,
                                       std::vector<std::vector<int>>*);
extern template TensorT<double> forward(const PatchModelParamsT<double>&, const TensorT<double>&,
                                        const ModelConfig&, bool, std::mt19937&, GradTapeT<double>*,
                                        std::vector<std::vector<int>>*);
extern template std::int64_t parameter_count(const PatchModelParamsT<float>&);
extern template std::int64_t parameter_count(const PatchModelParamsT<double>&);

}  // namespace patchbmi

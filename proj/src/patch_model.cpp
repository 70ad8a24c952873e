#include "patchbmi/patch_model.hpp"

#include <cmath>

#include "patchbmi/ops.hpp"
#include "patchbmi/rng.hpp"

namespace patchbmi {

void validate(const ModelConfig& cfg) {
  if (cfg.input_channels < 1 || cfg.conv1_channels < 1 || cfg.conv2_channels < 1 ||
      cfg.attention_mid < 1 || cfg.fc1_units < 1)
    throw ValidationError("model config: channel and unit counts must be positive");
  if (cfg.input_side < 4 || cfg.input_side % 4 != 0)
    throw ValidationError("model config: input side must be a positive multiple of 4, got " +
                          std::to_string(cfg.input_side));
  if (cfg.dropout_p < 0.0 || cfg.dropout_p >= 1.0)
    throw ValidationError("model config: dropout probability must be in [0,1)");
}

std::int64_t flat_features(const ModelConfig& cfg) {
  const std::int64_t side = cfg.input_side / 4;
  return cfg.conv2_channels * side * side;
}

template <typename S>
std::array<TensorT<S>*, 9> PatchModelParamsT<S>::tensors() {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &attn_w1, &attn_w2, &fc1_w, &fc1_b, &fc2_w};
}

template <typename S>
std::array<const TensorT<S>*, 9> PatchModelParamsT<S>::tensors() const {
  return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &attn_w1, &attn_w2, &fc1_w, &fc1_b, &fc2_w};
}

template <typename S>
PatchModelParamsT<S> PatchModelParamsT<S>::clone() const {
  PatchModelParamsT out;
  auto src = tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->clone();
  return out;
}

namespace {

template <typename S>
void fill_uniform(TensorT<S>& t, double bound, std::mt19937& rng) {
  for (S& v : t.data()) v = static_cast<S>(uniform_range(rng, -bound, bound));
}

}  // namespace

template <typename S>
PatchModelParamsT<S> init_weights(const ModelConfig& cfg, std::mt19937& rng) {
  validate(cfg);
  const int cin = cfg.input_channels, c1 = cfg.conv1_channels, c2 = cfg.conv2_channels;
  const int mid = cfg.attention_mid, fc1 = cfg.fc1_units;
  const int flat = static_cast<int>(flat_features(cfg));

  PatchModelParamsT<S> p;
  p.conv1_w = TensorT<S>({c1, cin, 3, 3}, true);
  p.conv1_b = TensorT<S>({c1}, true);
  p.conv2_w = TensorT<S>({c2, c1, 3, 3}, true);
  p.conv2_b = TensorT<S>({c2}, true);
  p.attn_w1 = TensorT<S>({mid, c2, 1, 1}, true);
  p.attn_w2 = TensorT<S>({c2, mid, 1, 1}, true);
  p.fc1_w = TensorT<S>({fc1, flat}, true);
  p.fc1_b = TensorT<S>({fc1}, true);
  p.fc2_w = TensorT<S>({1, fc1}, true);

  // biases stay zero; weight draw order is fixed by tensors() order
  fill_uniform(p.conv1_w, std::sqrt(6.0 / (cin * 9)), rng);
  fill_uniform(p.conv2_w, std::sqrt(6.0 / (c1 * 9)), rng);
  fill_uniform(p.attn_w1, std::sqrt(6.0 / c2), rng);
  fill_uniform(p.attn_w2, std::sqrt(6.0 / mid), rng);
  fill_uniform(p.fc1_w, std::sqrt(6.0 / flat), rng);
  fill_uniform(p.fc2_w, std::sqrt(6.0 / fc1), rng);
  return p;
}

template <typename S>
TensorT<S> channel_attention(const TensorT<S>& input, const TensorT<S>& attn_w1,
                             const TensorT<S>& attn_w2, GradTapeT<S>* tape) {
  const TensorT<S> none;
  TensorT<S> squeezed = global_avg_pool(input, tape);
  TensorT<S> s1 = reshape(squeezed, {input.dim(0), 1, 1}, tape);
  TensorT<S> mid = relu(conv2d(s1, attn_w1, none, 1, 0, tape), tape);
  TensorT<S> gate3 = sigmoid(conv2d(mid, attn_w2, none, 1, 0, tape), tape);
  TensorT<S> gate = reshape(gate3, {input.dim(0)}, tape);
  return scale_channels(input, gate, tape);
}

template <typename S>
TensorT<S> forward(const PatchModelParamsT<S>& params, const TensorT<S>& patch,
                   const ModelConfig& cfg, bool training, std::mt19937& rng, GradTapeT<S>* tape,
                   std::vector<std::vector<int>>* shape_trace) {
  validate(cfg);
  if (patch.rank() != 3 || patch.dim(0) != cfg.input_channels ||
      patch.dim(1) != cfg.input_side || patch.dim(2) != cfg.input_side)
    throw ValidationError("forward: patch must be [" + std::to_string(cfg.input_channels) + "," +
                          std::to_string(cfg.input_side) + "," + std::to_string(cfg.input_side) +
                          "]");
  const TensorT<S> none;
  auto trace = [&](const TensorT<S>& t) {
    if (shape_trace) shape_trace->push_back(t.shape());
  };
  trace(patch);
  TensorT<S> x = relu(conv2d(patch, params.conv1_w, params.conv1_b, 1, 1, tape), tape);
  trace(x);
  x = maxpool2d(x, tape);
  trace(x);
  x = relu(conv2d(x, params.conv2_w, params.conv2_b, 1, 1, tape), tape);
  trace(x);
  x = maxpool2d(x, tape);
  trace(x);
  x = dropout(x, cfg.dropout_p, training, rng, tape);
  trace(x);
  x = channel_attention(x, params.attn_w1, params.attn_w2, tape);
  trace(x);
  x = reshape(x, {static_cast<int>(flat_features(cfg))}, tape);
  trace(x);
  x = relu(linear(x, params.fc1_w, params.fc1_b, tape), tape);
  trace(x);
  x = linear(x, params.fc2_w, none, tape);
  trace(x);
  return x;
}

template <typename S>
std::int64_t parameter_count(const PatchModelParamsT<S>& params) {
  std::int64_t n = 0;
  for (const TensorT<S>* t : params.tensors()) n += t->numel();
  return n;
}

LayerParameterCounts layer_parameter_counts(const ModelConfig& cfg) {
  validate(cfg);
  LayerParameterCounts c;
  c.conv1 = static_cast<std::int64_t>(cfg.conv1_channels) * cfg.input_channels * 9 +
            cfg.conv1_channels;
  c.conv2 = static_cast<std::int64_t>(cfg.conv2_channels) * cfg.conv1_channels * 9 +
            cfg.conv2_channels;
  c.attention = static_cast<std::int64_t>(cfg.attention_mid) * cfg.conv2_channels * 2;
  c.fc1 = flat_features(cfg) * cfg.fc1_units + cfg.fc1_units;
  c.fc2 = cfg.fc1_units;
  c.total = c.conv1 + c.conv2 + c.attention + c.fc1 + c.fc2;
  return c;
}

template struct PatchModelParamsT<float>;
template struct PatchModelParamsT<double>;
template PatchModelParamsT<float> init_weights(const ModelConfig&, std::mt19937&);
template PatchModelParamsT<double> init_weights(const ModelConfig&, std::mt19937&);
template TensorT<float> channel_attention(const TensorT<float>&, const TensorT<float>&,
                                          const TensorT<float>&, GradTapeT<float>*);
template TensorT<double> channel_attention(const TensorT<double>&, const TensorT<double>&,
                                           const TensorT<double>&, GradTapeT<double>*);
template TensorT<float> forward(const PatchModelParamsT<float>&, const TensorT<float>&,
                                const ModelConfig&, bool, std::mt19937&, GradTapeT<float>*,
                                std::vector<std::vector<int>>*);
template TensorT<double> forward(const PatchModelParamsT<double>&, const TensorT<double>&,
                                 const ModelConfig&, bool, std::mt19937&, GradTapeT<double>*,
                                 std::vector<std::vector<int>>*);
template std::int64_t parameter_count(const PatchModelParamsT<float>&);
template std::int64_t parameter_count(const PatchModelParamsT<double>&);

}  // namespace patchbmi

#pragma once

#include <random>
#include <span>
#include <vector>

#include "patchbmi/tensor.hpp"

namespace patchbmi {

// Every op builds a fresh output tensor and, when a tape is supplied and some
// input tracks gradients, records one backward node on it. Passing tape ==
// nullptr runs pure inference. Inputs are never modified.

constexpr int conv_output_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// 2-D cross-correlation (no kernel flip) with zero padding.
// input [Cin,H,W], weight [Cout,Cin,kh,kw], optional bias [Cout]
// (undefined tensor = no bias) -> [Cout,H',W'].
template <typename S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias,
                  int stride, int padding, GradTapeT<S>* tape = nullptr);

// Max pooling, 2x2 window, stride 2; spatial extents must be even. Ties route
// the gradient to the first maximum in row-major window order.
template <typename S>
TensorT<S> maxpool2d(const TensorT<S>& input, GradTapeT<S>* tape = nullptr);

// Fully connected layer: input [Nin], weight [Nout,Nin], optional bias [Nout].
template <typename S>
TensorT<S> linear(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias,
                  GradTapeT<S>* tape = nullptr);

// Elementwise max(0, x); the subgradient at exactly 0 is taken as 0.
template <typename S>
TensorT<S> relu(const TensorT<S>& input, GradTapeT<S>* tape = nullptr);

// Elementwise logistic function, computed in the numerically stable split form.
template <typename S>
TensorT<S> sigmoid(const TensorT<S>& input, GradTapeT<S>* tape = nullptr);

// Inverted dropout. In training mode each element is zeroed with probability p
// and survivors are scaled by 1/(1-p), so the expected value is unchanged and
// inference needs no rescaling. In eval mode this is the identity (the input
// handle is returned as-is). Requires 0 <= p < 1.
template <typename S>
TensorT<S> dropout(const TensorT<S>& input, double p, bool training, std::mt19937& rng,
                   GradTapeT<S>* tape = nullptr);

// [C,H,W] -> [C]; per-channel spatial mean.
template <typename S>
TensorT<S> global_avg_pool(const TensorT<S>& input, GradTapeT<S>* tape = nullptr);

// out[c,y,x] = gate[c] * input[c,y,x]; gate is [C].
template <typename S>
TensorT<S> scale_channels(const TensorT<S>& input, const TensorT<S>& gate,
                          GradTapeT<S>* tape = nullptr);

// Same elements, new shape; element counts must match.
template <typename S>
TensorT<S> reshape(const TensorT<S>& input, std::vector<int> shape, GradTapeT<S>* tape = nullptr);

// N single-element tensors -> [N], preserving order.
template <typename S>
TensorT<S> stack_scalars(std::span<const TensorT<S>> parts, GradTapeT<S>* tape = nullptr);

// Sum of all elements -> [1].
template <typename S>
TensorT<S> sum(const TensorT<S>& input, GradTapeT<S>* tape = nullptr);

// Mean squared error over equal-length vectors -> [1].
template <typename S>
TensorT<S> mse_loss(const TensorT<S>& pred, const TensorT<S>& target, GradTapeT<S>* tape = nullptr);

#define PATCHBMI_EXTERN_OPS(S)                                                                  \
  extern template TensorT<S> conv2d(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,    \
                                    int, int, GradTapeT<S>*);                                   \
  extern template TensorT<S> maxpool2d(const TensorT<S>&, GradTapeT<S>*);                       \
  extern template TensorT<S> linear(const TensorT<S>&, const TensorT<S>&, const TensorT<S>&,    \
                                    GradTapeT<S>*);                                             \
  extern template TensorT<S> relu(const TensorT<S>&, GradTapeT<S>*);                            \
  extern template TensorT<S> sigmoid(const TensorT<S>&, GradTapeT<S>*);                         \
  extern template TensorT<S> dropout(const TensorT<S>&, double, bool, std::mt19937&,            \
                                     GradTapeT<S>*);                                            \
  extern template TensorT<S> global_avg_pool(const TensorT<S>&, GradTapeT<S>*);                 \
  extern template TensorT<S> scale_channels(const TensorT<S>&, const TensorT<S>&,               \
                                            GradTapeT<S>*);                                     \
  extern template TensorT<S> reshape(const TensorT<S>&, std::vector<int>, GradTapeT<S>*);       \
  extern template TensorT<S> stack_scalars(std::span<const TensorT<S>>, GradTapeT<S>*);         \
  extern template TensorT<S> sum(const TensorT<S>&, GradTapeT<S>*);                             \
  extern template TensorT<S> mse_loss(const TensorT<S>&, const TensorT<S>&, GradTapeT<S>*);

PATCHBMI_EXTERN_OPS(float)
PATCHBMI_EXTERN_OPS(double)
#undef PATCHBMI_EXTERN_OPS

}  // namespace patchbmi

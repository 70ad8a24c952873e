#include "patchbmi/tensor.hpp"

#include <string>

namespace patchbmi {

namespace {

std::int64_t checked_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw ValidationError("tensor shape must have at least one dimension");
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ValidationError("tensor dimensions must be positive, got " + std::to_string(d));
    n *= d;
  }
  return n;
}

}  // namespace

template <typename S>
TensorT<S>::TensorT(std::vector<int> shape, bool requires_grad) {
  std::int64_t n = checked_numel(shape);
  s_ = std::make_shared<Storage>();
  s_->shape = std::move(shape);
  s_->data.assign(static_cast<std::size_t>(n), S{0});
  s_->requires_grad = requires_grad;
  if (requires_grad) s_->grad.assign(static_cast<std::size_t>(n), S{0});
}

template <typename S>
TensorT<S>::TensorT(std::vector<int> shape, std::vector<S> values, bool requires_grad) {
  std::int64_t n = checked_numel(shape);
  if (n != static_cast<std::int64_t>(values.size()))
    throw ValidationError("tensor value count " + std::to_string(values.size()) +
                          " does not match shape element count " + std::to_string(n));
  s_ = std::make_shared<Storage>();
  s_->shape = std::move(shape);
  s_->data = std::move(values);
  s_->requires_grad = requires_grad;
  if (requires_grad) s_->grad.assign(static_cast<std::size_t>(n), S{0});
}

template <typename S>
TensorT<S> TensorT<S>::full(std::vector<int> shape, S value, bool requires_grad) {
  TensorT t(std::move(shape), requires_grad);
  for (S& x : t.data()) x = value;
  return t;
}

template <typename S>
TensorT<S> TensorT<S>::scalar(S value, bool requires_grad) {
  return TensorT({1}, {value}, requires_grad);
}

template <typename S>
typename TensorT<S>::Storage& TensorT<S>::st() {
  if (!s_) throw ValidationError("operation on undefined tensor");
  return *s_;
}

template <typename S>
const typename TensorT<S>::Storage& TensorT<S>::st() const {
  if (!s_) throw ValidationError("operation on undefined tensor");
  return *s_;
}

template <typename S>
const std::vector<int>& TensorT<S>::shape() const {
  return st().shape;
}

template <typename S>
int TensorT<S>::dim(int axis) const {
  const auto& sh = st().shape;
  if (axis < 0 || axis >= static_cast<int>(sh.size()))
    throw ValidationError("tensor axis " + std::to_string(axis) + " out of range for rank " +
                          std::to_string(sh.size()));
  return sh[static_cast<std::size_t>(axis)];
}

template <typename S>
int TensorT<S>::rank() const {
  return static_cast<int>(st().shape.size());
}

template <typename S>
std::int64_t TensorT<S>::numel() const {
  return static_cast<std::int64_t>(st().data.size());
}

template <typename S>
bool TensorT<S>::requires_grad() const {
  return st().requires_grad;
}

template <typename S>
std::span<S> TensorT<S>::data() {
  return std::span<S>(st().data);
}

template <typename S>
std::span<const S> TensorT<S>::data() const {
  return std::span<const S>(st().data);
}

template <typename S>
std::span<S> TensorT<S>::grad() {
  return std::span<S>(st().grad);
}

template <typename S>
std::span<const S> TensorT<S>::grad() const {
  return std::span<const S>(st().grad);
}

template <typename S>
void TensorT<S>::zero_grad() {
  for (S& g : st().grad) g = S{0};
}

template <typename S>
S TensorT<S>::item() const {
  if (numel() != 1)
    throw ValidationError("item() requires a single-element tensor, got " + std::to_string(numel()) +
                          " elements");
  return st().data[0];
}

template <typename S>
TensorT<S> TensorT<S>::clone() const {
  const Storage& src = st();
  TensorT out;
  out.s_ = std::make_shared<Storage>();
  out.s_->shape = src.shape;
  out.s_->data = src.data;
  out.s_->requires_grad = src.requires_grad;
  if (src.requires_grad) out.s_->grad.assign(src.data.size(), S{0});
  return out;
}

template <typename S>
void GradTapeT<S>::record(const char* op, std::function<void()> backward_fn) {
  nodes_.push_back(Node{op, std::move(backward_fn)});
}

template <typename S>
void GradTapeT<S>::replay_backward() const {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

template <typename S>
void backward(TensorT<S> loss, GradTapeT<S>& tape) {
  if (loss.numel() != 1) throw ValidationError("backward() expects a scalar loss");
  if (!loss.requires_grad())
    throw ValidationError("backward() loss does not track gradients; was it built on this tape?");
  loss.grad()[0] += S{1};
  tape.replay_backward();
}

template class TensorT<float>;
template class TensorT<double>;
template class GradTapeT<float>;
template class GradTapeT<double>;
template void backward(TensorT<float>, GradTapeT<float>&);
template void backward(TensorT<double>, GradTapeT<double>&);

}  // namespace patchbmi

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "patchbmi/error.hpp"

namespace patchbmi {

// Dense row-major tensor over S (float for the deployed model, double for the
// finite-difference harness). Copies are shallow handles onto shared storage.
// A default-constructed tensor is "undefined" and stands for an absent
// optional input such as a missing bias.
template <typename S>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(std::vector<int> shape, bool requires_grad = false);
  TensorT(std::vector<int> shape, std::vector<S> values, bool requires_grad = false);

  static TensorT full(std::vector<int> shape, S value, bool requires_grad = false);
  static TensorT scalar(S value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const std::vector<int>& shape() const;
  int dim(int axis) const;
  int rank() const;
  std::int64_t numel() const;
  bool requires_grad() const;

  std::span<S> data();
  std::span<const S> data() const;
  // Empty span when the tensor does not track gradients.
  std::span<S> grad();
  std::span<const S> grad() const;
  void zero_grad();

  S item() const;  // numel() must be 1
  TensorT clone() const;  // deep copy of values; fresh zero gradient

  bool same_storage(const TensorT& other) const noexcept { return s_ == other.s_; }

 private:
  struct Storage {
    std::vector<int> shape;
    std::vector<S> data;
    std::vector<S> grad;
    bool requires_grad = false;
  };

  std::shared_ptr<Storage> s_;

  Storage& st();
  const Storage& st() const;
};

// Reverse-mode tape. Each node holds an operation identifier and a closure
// capturing the operation's input handles and saved intermediates. Nodes are
// appended in execution order, so a reverse walk visits every consumer before
// its producer. One tape per forward pass; never shared across threads.
template <typename S>
class GradTapeT {
 public:
  void record(const char* op, std::function<void()> backward_fn);
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  void clear() noexcept { nodes_.clear(); }
  void replay_backward() const;

 private:
  struct Node {
    const char* op;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating into
// every gradient-tracking tensor that fed the loss. Gradients add across
// calls; callers zero parameter gradients between optimization steps.
template <typename S>
void backward(TensorT<S> loss, GradTapeT<S>& tape);

using Tensor = TensorT<float>;
using GradTape = GradTapeT<float>;

extern template class TensorT<float>;
extern template class TensorT<double>;
extern template class GradTapeT<float>;
extern template class GradTapeT<double>;
extern template void backward(TensorT<float>, GradTapeT<float>&);
extern template void backward(TensorT<double>, GradTapeT<double>&);

}  // namespace patchbmi

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <utility>
#include <vector>

#include "snnd/error.hpp"

namespace snnd {

#ifdef SNND_REAL_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

template <typename S>
using FlatArray = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
using MatMap = Eigen::Map<
    Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap = Eigen::Map<
    const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Storage shared by every handle to one logical tensor. Gradient buffers are
// allocated lazily on first accumulation; an absent buffer reads as zero.
template <typename S>
struct TensorDataT {
  Shape shape;
  FlatArray<S> values;
  FlatArray<S> grad;
  bool requires_grad = false;

  bool has_grad() const { return grad.size() == values.size(); }

  FlatArray<S>& ensure_grad() {
    if (!has_grad()) grad = FlatArray<S>::Zero(values.size());
    return grad;
  }

  void accumulate_grad(const FlatArray<S>& g) { ensure_grad() += g; }
};

// Value-semantics handle over shared storage: copies alias, so a tensor can
// sit both in the caller's hands and inside tape closures. Row-major layout;
// a scalar has an empty shape and one element.
template <typename S>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape shape) {
    return TensorT(std::move(shape), /*fill=*/S(0));
  }

  static TensorT full(Shape shape, S fill) {
    return TensorT(std::move(shape), fill);
  }

  static TensorT scalar(S v) { return TensorT(Shape{}, v); }

  static TensorT from_values(Shape shape, const std::vector<S>& vals) {
    TensorT t(std::move(shape), S(0));
    if (static_cast<Index>(vals.size()) != t.numel())
      throw DimError("from_values: element count does not match shape");
    for (Index i = 0; i < t.numel(); ++i) t.d_->values[i] = vals[i];
    return t;
  }

  bool defined() const { return d_ != nullptr; }

  const Shape& shape() const { return d_->shape; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  Index dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  Index numel() const { return d_->values.size(); }

  bool same_shape(const TensorT& other) const {
    return d_->shape == other.d_->shape;
  }

  FlatArray<S>& values() { return d_->values; }
  const FlatArray<S>& values() const { return d_->values; }

  // Scalar read; the tensor must hold exactly one element.
  S value() const {
    if (numel() != 1) throw DimError("value(): tensor is not a scalar");
    return d_->values[0];
  }

  S operator()(Index i) const { return d_->values[i]; }
  S operator()(Index r, Index c) const {
    return d_->values[r * d_->shape[1] + c];
  }

  MatMap<S> mat(Index rows, Index cols) {
    return MatMap<S>(d_->values.data(), rows, cols);
  }
  ConstMatMap<S> mat(Index rows, Index cols) const {
    return ConstMatMap<S>(d_->values.data(), rows, cols);
  }

  bool requires_grad() const { return d_ && d_->requires_grad; }
  TensorT& set_requires_grad(bool on = true) {
    d_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return d_->has_grad(); }
  const FlatArray<S>& grad() const {
    if (!d_->has_grad())
      throw UsageError("grad(): no gradient has been accumulated");
    return d_->grad;
  }
  FlatArray<S> grad_or_zero() const {
    if (d_->has_grad()) return d_->grad;
    return FlatArray<S>::Zero(numel());
  }
  void zero_grad() { d_->grad.resize(0); }

  // Same values, cut loose from the graph.
  TensorT detach() const {
    TensorT t(d_->shape, S(0));
    t.d_->values = d_->values;
    return t;
  }

  // Deep copy, including the requires_grad mark (but no gradient).
  TensorT clone() const {
    TensorT t = detach();
    t.d_->requires_grad = d_->requires_grad;
    return t;
  }

  std::shared_ptr<TensorDataT<S>> ptr() const { return d_; }

 private:
  TensorT(Shape shape, S fill) : d_(std::make_shared<TensorDataT<S>>()) {
    d_->shape = std::move(shape);
    d_->values = FlatArray<S>::Constant(shape_numel(d_->shape), fill);
  }

  std::shared_ptr<TensorDataT<S>> d_;
};

// Recording tape for reverse-mode differentiation. Ops push one closure per
// node; backward() runs them in reverse recording order, which is a valid
// topological order because an op can only consume already-created tensors.
// One tape per thread keeps parallel runs independent.
template <typename S>
class TapeT {
 public:
  static TapeT& active() {
    thread_local TapeT tape;
    return tape;
  }

  bool enabled() const { return enabled_; }
  void set_enabled(bool on) { enabled_ = on; }

  bool recording() const { return enabled_; }

  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1, sweeps the recorded nodes in reverse, and
  // clears the tape. Gradients of tensors used several times accumulate by
  // summation. The loss must be scalar; a scalar that was never connected to
  // the tape backpropagates trivially (all gradients stay zero).
  void backward(const TensorT<S>& loss) {
    if (loss.numel() != 1) {
      clear();
      throw UsageError("backward: loss must be a scalar tensor");
    }
    loss.ptr()->accumulate_grad(FlatArray<S>::Constant(1, S(1)));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    clear();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool enabled_ = true;
};

// Disables tape recording for the current scope (evaluation, metrics).
template <typename S>
class NoGradGuardT {
 public:
  NoGradGuardT() : prev_(TapeT<S>::active().enabled()) {
    TapeT<S>::active().set_enabled(false);
  }
  ~NoGradGuardT() { TapeT<S>::active().set_enabled(prev_); }
  NoGradGuardT(const NoGradGuardT&) = delete;
  NoGradGuardT& operator=(const NoGradGuardT&) = delete;

 private:
  bool prev_;
};

using Tensor = TensorT<Real>;
using Tape = TapeT<Real>;
using NoGradGuard = NoGradGuardT<Real>;

inline void backward(const Tensor& loss) { Tape::active().backward(loss); }

}  // namespace snnd

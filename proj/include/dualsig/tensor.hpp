// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dualsig/error.hpp"

namespace dualsig {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage. Values are
/// never changed by ops; only leaves (parameters) are updated in place by
/// optimizers and loaders through mutable_data().
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;
  T at(std::size_t row, std::size_t col) const { return impl_->data[row * impl_->shape.back() + col]; }

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  /// Gradient buffer; empty span when no gradient has reached this tensor.
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated as zeros on first access.
  std::span<T> grad_mut() const;
  void zero_grad() const;
  /// Drops the gradient buffer so has_grad() is false until a gradient arrives.
  void clear_grad() const;

  std::optional<std::size_t> tape_id() const { return impl_->tape_id; }
  void set_tape_id(std::optional<std::size_t> id) { impl_->tape_id = id; }

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    std::optional<std::size_t> tape_id;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations for one training step.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and runs every node at or before the root's node
  /// in reverse order. A tape can be replayed backward only once.
  void backward(const Tensor<T>& root);

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

  /// Innermost tape made current by a TapeScope on this thread, or nullptr.
  static Tape* active() noexcept;

 private:
  template <typename>
  friend class TapeScope;

  template <typename>
  friend class NoGradScope;

  static Tape*& active_slot() noexcept;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Makes a tape current for the enclosing scope; ops executed while a scope
/// is alive are recorded when any input requires grad.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording for the enclosing scope (evaluation and decoding).
template <typename T>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tensor<long double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class Tape<long double>;
extern template class TapeScope<float>;
extern template class TapeScope<double>;
extern template class TapeScope<long double>;
extern template class NoGradScope<float>;
extern template class NoGradScope<double>;
extern template class NoGradScope<long double>;

}  // namespace dualsig

// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualsig/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace dualsig {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value, bool requires_grad) {
  validate_shape(shape);
  const std::size_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                     " values");
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
void Tensor<T>::clear_grad() const {
  impl_->grad.clear();
}

template <typename T>
Tape<T>*& Tape<T>::active_slot() noexcept {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

template <typename T>
Tape<T>* Tape<T>::active() noexcept {
  return active_slot();
}

template <typename T>
void Tape<T>::record(std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn backward) {
  if (consumed_) throw ContractError("cannot record on a tape that already ran backward");
  output.set_tape_id(nodes_.size());
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ContractError("backward() requires a scalar root");
  }
  const auto id = root.tape_id();
  if (!id || *id >= nodes_.size() || !nodes_[*id].output.same_storage(root)) {
    throw ContractError("backward() root was not produced on this tape");
  }
  if (consumed_) throw ContractError("backward() already ran on this tape");
  consumed_ = true;
  Tensor<T> seed = root;
  seed.grad_mut()[0] += T(1);
  for (std::size_t i = *id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.output.has_grad()) continue;
    node.backward();
  }
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(Tape<T>::active_slot()) {
  Tape<T>::active_slot() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  Tape<T>::active_slot() = previous_;
}

template <typename T>
NoGradScope<T>::NoGradScope() : previous_(Tape<T>::active_slot()) {
  Tape<T>::active_slot() = nullptr;
}

template <typename T>
NoGradScope<T>::~NoGradScope() {
  Tape<T>::active_slot() = previous_;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<long double>;
template class Tape<float>;
template class Tape<double>;
template class Tape<long double>;
template class TapeScope<float>;
template class TapeScope<double>;
template class TapeScope<long double>;
template class NoGradScope<float>;
template class NoGradScope<double>;
template class NoGradScope<long double>;

}  // namespace dualsig

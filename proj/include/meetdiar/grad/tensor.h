// Copyright 2026 The meetdiar Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MEETDIAR_GRAD_TENSOR_H_
#define MEETDIAR_GRAD_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace meetdiar::grad {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

// Storage behind a Tensor handle. `grad` stays empty until a gradient is
// first accumulated into it.
// Fixed 64-byte alignment keeps vectorized reductions independent of where
// the heap happens to place a buffer, so repeated runs agree bit for bit.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
};

// Shared handle to a dense row-major array of doubles. Copies alias the same
// storage. Most operations treat tensors as matrices: rows() is the leading
// dimension, cols() the product of the remaining ones.
class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<double> values,
                         bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double at(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
  }
  // Only valid for single-element tensors.
  double item() const;

  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled view when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  // Allocates a zero gradient on first use.
  std::span<double> mutable_grad();
  void zero_grad();

  // Fresh leaf that copies the values but carries no history.
  Tensor Detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// Records backward closures of executed operations. Each forward pass gets
// its own tape; backward() replays the closures in reverse order exactly once.
class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool enabled() const { return enabled_; }
  std::size_t size() const { return ops_.size(); }

  // True when an operation over `inputs` must be recorded.
  bool ShouldRecord(std::initializer_list<const Tensor*> inputs) const;
  void Record(std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  // Throws UsageError for a non-scalar loss or a tape that was already
  // consumed by a previous call.
  void Backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> ops_;
  bool enabled_;
  bool consumed_ = false;
};

// Gradient buffer of a node (allocated on demand), or nullptr when the node
// does not require a gradient. Used by backward closures.
double* GradOrNull(const std::shared_ptr<Node>& node);

// Output tensor for an op: requires grad iff the tape records the op.
Tensor MakeOutput(const Tape& tape, Shape shape,
                  std::initializer_list<const Tensor*> inputs);
Tensor MakeOutput(const Tape& tape, Shape shape,
                  const std::vector<Tensor>& inputs);

}  // namespace meetdiar::grad

#endif  // MEETDIAR_GRAD_TENSOR_H_

#pragma once

// Dense row-major tensor participating in a recorded computation graph.
// Tensor is a cheap shared handle; the Graph owns the tape of primitive
// applications and replays it in reverse for gradient accumulation. A graph
// and its tensors belong to one training session (single-thread mutation);
// primitives may parallelize internally.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mmsr/errors.hpp"

namespace mmsr {

using Shape = std::vector<int>;

inline int shape_numel(const Shape& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;
template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
class Graph;

template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = ArrayX<S>::Zero(shape_numel(t.impl_->shape));
    return t;
  }

  static Tensor constant(Shape shape, S value) {
    Tensor t = zeros(std::move(shape));
    t.array() = value;
    return t;
  }

  static Tensor from(Shape shape, const std::vector<S>& values) {
    Tensor t = zeros(std::move(shape));
    if (static_cast<int>(values.size()) != t.numel())
      throw ArgumentError("tensor: value count " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(t.shape()));
    for (int i = 0; i < t.numel(); ++i) t.data()[i] = values[static_cast<std::size_t>(i)];
    return t;
  }

  static Tensor scalar(S value) { return constant({1}, value); }

  bool valid() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  int numel() const { return static_cast<int>(impl_->data.size()); }

  // Handle semantics: const handles still expose the shared buffers,
  // mirroring how backward rules accumulate into their inputs' grads.
  S* data() const { return impl_->data.data(); }
  S* grad() const { return impl_->grad.data(); }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Graph<S>* graph() const { return impl_ ? impl_->graph : nullptr; }

  S value() const {
    if (numel() != 1) throw ArgumentError("value(): tensor is not scalar, shape " + shape_str(shape()));
    return impl_->data[0];
  }

  S operator[](int i) const { return impl_->data[i]; }

  // c-major (C,H,W) accessors used throughout the image pipeline.
  S& at(int c, int i, int j) const {
    const int h = dim(rank() - 2), w = dim(rank() - 1);
    return impl_->data[(c * h + i) * w + j];
  }

  Eigen::Map<ArrayX<S>> array() const {
    return Eigen::Map<ArrayX<S>>(impl_->data.data(), impl_->data.size());
  }
  Eigen::Map<ArrayX<S>> grad_array() const {
    return Eigen::Map<ArrayX<S>>(impl_->grad.data(), impl_->grad.size());
  }
  Eigen::Map<MatRM<S>> matrix(int rows, int cols) const {
    return Eigen::Map<MatRM<S>>(impl_->data.data(), rows, cols);
  }
  Eigen::Map<MatRM<S>> grad_matrix(int rows, int cols) const {
    return Eigen::Map<MatRM<S>>(impl_->grad.data(), rows, cols);
  }

  bool has_grad() const { return impl_ && impl_->grad.size() == impl_->data.size(); }

  void zero_grad() const {
    if (has_grad()) impl_->grad.setZero();
  }

  bool all_finite() const {
    const S* p = data();
    for (int i = 0; i < numel(); ++i)
      if (!std::isfinite(static_cast<double>(p[i]))) return false;
    return true;
  }

  // Deep copy of the values (no graph attachment).
  Tensor clone() const {
    Tensor t = zeros(shape());
    t.array() = array();
    return t;
  }

  bool same_shape(const Tensor& o) const { return impl_->shape == o.impl_->shape; }

 private:
  struct Impl {
    Shape shape;
    ArrayX<S> data;
    ArrayX<S> grad;  // empty until tracked
    bool requires_grad = false;
    Graph<S>* graph = nullptr;
  };

  std::shared_ptr<Impl> impl_;
  friend class Graph<S>;
};

// Tape of recorded primitive applications. Forward order is topological by
// construction; backward() walks it once in reverse.
template <class S>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // New zero leaf tracked by this graph (model parameters).
  Tensor<S> parameter(Shape shape) {
    Tensor<S> t = Tensor<S>::zeros(std::move(shape));
    attach(t);
    return t;
  }

  // Marks an existing tensor as a tracked leaf of this graph.
  void attach(const Tensor<S>& t) {
    t.impl_->graph = this;
    t.impl_->requires_grad = true;
    if (!t.has_grad()) t.impl_->grad = ArrayX<S>::Zero(t.impl_->data.size());
  }

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  std::size_t node_count() const { return nodes_.size(); }

  void record(const char* op, std::vector<Tensor<S>> inputs, const Tensor<S>& output,
              std::function<void()> backward) {
    for (const auto& in : inputs)
      if (in.graph() && in.graph() != this)
        throw StateError(std::string(op) + ": input belongs to a different graph");
    attach(output);
    nodes_.push_back(Node{op, std::move(inputs), output, std::move(backward)});
  }

  // Reverse accumulation from a scalar loss recorded on this graph.
  void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1)
      throw ArgumentError("backward: loss must be scalar, shape " + shape_str(loss.shape()));
    if (loss.graph() != this || nodes_.empty())
      throw StateError("backward: loss is detached from this graph");
    if (backward_done_)
      throw StateError("backward: already called on this graph; clear() first");
    backward_done_ = true;
    loss.grad_array()(0) = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
  }

  // Drops recorded nodes and re-arms backward(). Parameter leaves stay attached.
  void clear() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  struct Node {
    const char* op;
    std::vector<Tensor<S>> inputs;
    Tensor<S> output;
    std::function<void()> backward;
  };

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool backward_done_ = false;
};

namespace detail {

// The graph that a new op output should record into, if any.
template <class S>
Graph<S>* recording_graph(std::initializer_list<Tensor<S>> inputs) {
  Graph<S>* g = nullptr;
  for (const auto& t : inputs) {
    if (!t.graph()) continue;
    if (g && g != t.graph()) throw StateError("op inputs belong to different graphs");
    g = t.graph();
  }
  return (g && g->recording()) ? g : nullptr;
}

}  // namespace detail

}  // namespace mmsr

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sample {

// Everything in this library is a rank-2 tensor of 32-bit reals in row-major
// order. Scalars are [1 x 1], vectors are [1 x n]. A Tensor is a cheap handle
// to shared storage so that gradients written during the backward pass land in
// the same buffers the optimizer reads.

struct TensorImpl {
  int rows = 0;
  int cols = 0;
  std::vector<float> value;
  std::vector<float> grad;  // empty until gradient flow reaches this tensor
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    return filled(rows, cols, 0.0f, requires_grad);
  }

  static Tensor filled(int rows, int cols, float v, bool requires_grad = false) {
    check_dims(rows, cols);
    auto impl = std::make_shared<TensorImpl>();
    impl->rows = rows;
    impl->cols = cols;
    impl->value.assign(static_cast<std::size_t>(rows) * cols, v);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor from(int rows, int cols, std::vector<float> data,
                     bool requires_grad = false) {
    check_dims(rows, cols);
    if (data.size() != static_cast<std::size_t>(rows) * cols) {
      throw std::invalid_argument("tensor: data length " +
                                  std::to_string(data.size()) +
                                  " does not match shape " +
                                  shape_str(rows, cols));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->rows = rows;
    impl->cols = cols;
    impl->value = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
  }

  static Tensor scalar(float v, bool requires_grad = false) {
    return from(1, 1, {v}, requires_grad);
  }

  static Tensor row(std::vector<float> data, bool requires_grad = false) {
    const int n = static_cast<int>(data.size());
    return from(1, n, std::move(data), requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  int rows() const { return impl_->rows; }
  int cols() const { return impl_->cols; }
  std::size_t size() const { return impl_->value.size(); }
  std::string shape() const { return shape_str(rows(), cols()); }
  bool same_shape(const Tensor& other) const {
    return rows() == other.rows() && cols() == other.cols();
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  std::vector<float>& data() { return impl_->value; }
  const std::vector<float>& data() const { return impl_->value; }

  float& at(int r, int c) { return impl_->value[idx(r, c)]; }
  float at(int r, int c) const { return impl_->value[idx(r, c)]; }

  float item() const {
    if (size() != 1) {
      throw std::invalid_argument("item: tensor " + shape() + " is not scalar");
    }
    return impl_->value[0];
  }

  bool has_grad() const { return !impl_->grad.empty(); }

  // Gradient buffer, allocated (zeroed) on first touch.
  std::vector<float>& grad() {
    if (impl_->grad.empty()) impl_->grad.assign(size(), 0.0f);
    return impl_->grad;
  }
  const std::vector<float>& grad() const { return impl_->grad; }

  void zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.assign(size(), 0.0f);
  }

  // Deep copy with detached storage; gradient buffer is not copied.
  Tensor clone() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->rows = rows();
    impl->cols = cols();
    impl->value = impl_->value;
    impl->requires_grad = impl_->requires_grad;
    return Tensor(std::move(impl));
  }

  bool shares_storage(const Tensor& other) const { return impl_ == other.impl_; }

  static std::string shape_str(int rows, int cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static void check_dims(int rows, int cols) {
    if (rows <= 0 || cols <= 0) {
      throw std::invalid_argument("tensor: non-positive shape " +
                                  shape_str(rows, cols));
    }
  }

  std::size_t idx(int r, int c) const {
    return static_cast<std::size_t>(r) * impl_->cols + c;
  }

  std::shared_ptr<TensorImpl> impl_;
};

// Named parameter lists are the interchange format between modules, the
// optimizer, and checkpoints.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline bool all_finite(const Tensor& t) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// Reverse-mode tape. Nodes are appended in execution order, which is already
// a topological order, and the backward pass walks them exactly once in
// reverse. backward() consumes the tape; a consumed tape cannot be reused.
class Tape {
 public:
  struct Node {
    const char* tag;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void(Node&)> backward;
  };

  std::size_t record(const char* tag, std::vector<Tensor> inputs, Tensor output,
                     std::function<void(Node&)> backward) {
    if (consumed_) {
      throw std::logic_error("tape: recording onto a consumed tape");
    }
    nodes_.push_back(Node{tag, std::move(inputs), std::move(output),
                          std::move(backward)});
    return nodes_.size() - 1;
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void backward(Tensor loss) {
    if (consumed_) {
      throw std::logic_error("tape: backward on a consumed tape");
    }
    if (loss.size() != 1) {
      throw std::invalid_argument("backward: loss " + loss.shape() +
                                  " is not scalar");
    }
    loss.grad()[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output.has_grad()) continue;  // no gradient reached this node
      it->backward(*it);
    }
    consumed_ = true;
    nodes_.clear();
  }

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace sample

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace touchadd::nn {

using Real = double;
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node {
  Mat value;
  Mat grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, zero-initialized on first use.
  Mat& grad_buffer() {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    return grad;
  }
};

/// Shared handle to a node of the reverse-mode graph. Every value is a 2-D
/// row-major matrix; images are stored channel-major as [channels, H*W].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Mat value, bool requires_grad = false);

  static Tensor constant(Mat value) { return Tensor(std::move(value), false); }
  static Tensor scalar(Real v);

  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  const Mat& grad() const { return node_->grad; }
  Mat& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.resize(0, 0); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Real item() const { return node_->value(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Runs reverse-mode accumulation from this 1x1 tensor.
  void backward();

  const std::shared_ptr<Node>& node() const { return node_; }

  /// Builds the result node of an operation. The graph edge and the backward
  /// closure are kept only when gradients are enabled and an input needs them.
  static Tensor from_op(Mat value, std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn);

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled() noexcept;

/// Disables graph construction on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace touchadd::nn

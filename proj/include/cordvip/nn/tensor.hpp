#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cordvip/common.hpp"

namespace cordvip::nn {

template <typename T>
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;  // set once backward has run through this node
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

/// Row-major 2-D tensor handle. Copies share the underlying node.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, T value);
  static Tensor scalar(T value) { return full(1, 1, value); }

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t numel() const { return node_->value.size(); }
  std::string shape_str() const;

  std::span<const T> data() const { return node_->value; }
  /// Mutable access for leaves (parameters, optimizer updates, test perturbation).
  std::span<T> mutable_data() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  T item() const;
  T at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  /// Leaf copy of the current value that is cut off from the graph.
  Tensor detach() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Runs reverse-mode accumulation from a scalar loss into every requires-grad leaf.
/// Each node is visited once in reverse topological order; the graph is released afterwards,
/// so a second call on the same loss throws.
template <typename T>
void backward(const Tensor<T>& loss);

/// Disables graph recording on this thread while alive (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace cordvip::nn

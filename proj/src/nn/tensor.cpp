#include "cordvip/nn/tensor.hpp"

#include <unordered_set>

namespace cordvip::nn {

namespace {
thread_local bool t_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

template <typename T>
Tensor<T>::Tensor(std::size_t rows, std::size_t cols, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  if (data.size() != rows * cols) {
    throw ShapeError("tensor: " + std::to_string(data.size()) + " values for shape [" +
                     std::to_string(rows) + ", " + std::to_string(cols) + "]");
  }
  node_->rows = rows;
  node_->cols = cols;
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return Tensor(rows, cols, std::vector<T>(rows * cols, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(std::size_t rows, std::size_t cols, T value) {
  return Tensor(rows, cols, std::vector<T>(rows * cols, value));
}

template <typename T>
std::string Tensor<T>::shape_str() const {
  return "[" + std::to_string(rows()) + ", " + std::to_string(cols()) + "]";
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str() + " is not a scalar");
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(rows(), cols(), node_->value, false);
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw Error("backward: undefined loss");
  if (loss.numel() != 1) throw ShapeError("backward: loss of shape " + loss.shape_str() + " is not scalar");
  Node<T>* root = loss.node().get();
  if (root->consumed) throw Error("backward: graph already consumed; rebuild it before calling again");
  if (!root->requires_grad) throw Error("backward: loss does not depend on any requires-grad tensor");

  // Iterative post-order DFS over interior nodes. The order holds owning pointers because
  // releasing a node's inputs below may drop the last other reference to a child.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->inputs.size()) {
      std::shared_ptr<Node<T>> child = top.first->inputs[top.second++];
      if (!child->is_leaf && child->requires_grad && seen.insert(child.get()).second) {
        if (child->consumed) throw Error("backward: graph already consumed");
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = it->get();
    if (!node->grad.empty()) node->backward_fn(*node);
    node->backward_fn = nullptr;
    node->inputs.clear();
    if (node != root) node->grad.clear();
    node->consumed = true;
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace cordvip::nn

#pragma once

#include <vector>

#include "cordvip/nn/tensor.hpp"

namespace cordvip::nn {

// All ops take and return 2-D tensors. Shape problems raise ShapeError naming the op.
// The only broadcast is a [1, C] bias row in add().

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a @ b^T, for a [n, k] and b [m, k].
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
/// axis 1: each row sums to one; axis 0: each column.
template <typename T> Tensor<T> softmax(const Tensor<T>& a, int axis = 1);
/// Normalizes each row over its features; gamma/beta are [1, C].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));
template <typename T> Tensor<T> layer_norm(const Tensor<T>& x, T eps = T(1e-5));
/// axis 0: max over rows -> [1, C]; axis 1: max over columns -> [R, 1].
template <typename T> Tensor<T> max_pool(const Tensor<T>& a, int axis = 0);
/// Mean of squared differences, [1, 1].
template <typename T> Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
/// Rows (axis 0) or columns (axis 1) in [begin, end).
template <typename T> Tensor<T> slice(const Tensor<T>& a, int axis, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, std::size_t rows, std::size_t cols);
/// Repeats a [1, C] row n times.
template <typename T> Tensor<T> repeat_rows(const Tensor<T>& row, std::size_t n);

}  // namespace cordvip::nn

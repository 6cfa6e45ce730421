#include "cordvip/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace cordvip::nn {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Arr = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<Mat<T>> mat(std::vector<T>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
template <typename T>
Eigen::Map<const Mat<T>> cmat(const std::vector<T>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
template <typename T>
Eigen::Map<Arr<T>> arr(std::vector<T>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
template <typename T>
Eigen::Map<const Arr<T>> carr(const std::vector<T>& v, std::size_t r, std::size_t c) {
  return {v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

// Fixed-order sum of f(0..n-1) over eight lanes. Eigen's own reductions peel to the first
// aligned address, which makes the rounding depend on where the buffer lives.
template <typename T, typename F>
T lane_sum(std::size_t n, F f) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) acc[l] += f(i + l);
  }
  T tail = T(0);
  for (; i < n; ++i) tail += f(i);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename T>
T lane_sum(const T* p, std::size_t n) {
  return lane_sum<T>(n, [p](std::size_t i) { return p[i]; });
}

// Column sums of f(i, j) over rows, accumulated top to bottom.
template <typename T, typename F>
std::vector<T> col_sums(std::size_t r, std::size_t c, F f) {
  std::vector<T> acc(c, T(0));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) acc[j] += f(i, j);
  }
  return acc;
}

template <typename T>
void add_into(std::vector<T>& dst, const std::vector<T>& src) {
  for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
}

// In-place exp in whole eight-wide blocks, so every element takes the same vector path
// wherever the buffer starts.
template <typename T>
void exp_inplace(T* p, std::size_t n) {
  using Block = Eigen::Array<T, 8, 1>;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    Eigen::Map<Block> b(p + i);
    b = b.exp();
  }
  if (i < n) {
    Block tmp = Block::Zero();
    for (std::size_t k = i; k < n; ++k) tmp[static_cast<Eigen::Index>(k - i)] = p[k];
    tmp = tmp.exp();
    for (std::size_t k = i; k < n; ++k) p[k] = tmp[static_cast<Eigen::Index>(k - i)];
  }
}

template <typename T>
Tensor<T> make_result(std::size_t rows, std::size_t cols, std::vector<T> value, const char* op,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (grad_enabled()) {
    for (const auto* in : inputs) needs = needs || in->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const auto* in : inputs) node->inputs.push_back(in->node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
[[noreturn]] void shape_fail(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

template <typename T>
void check_defined(const char* op, const Tensor<T>& a) {
  if (!a.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

// Gradient sink for input i, or nullptr when that input does not take gradients.
template <typename T>
Node<T>* sink(Node<T>& self, std::size_t i) {
  Node<T>* in = self.inputs[i].get();
  if (!in->requires_grad) return nullptr;
  in->ensure_grad();
  return in;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined("matmul", a);
  check_defined("matmul", b);
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<T> out(n * m);
  mat(out, n, m).noalias() = cmat(a.node()->value, n, k) * cmat(b.node()->value, k, m);
  return make_result<T>(n, m, std::move(out), "matmul", {&a, &b}, [n, k, m](Node<T>& self) {
    const auto g = cmat(self.grad, n, m);
    const auto& A = *self.inputs[0];
    const auto& B = *self.inputs[1];
    if (auto* da = sink(self, 0)) mat(da->grad, n, k).noalias() += g * cmat(B.value, k, m).transpose();
    if (auto* db = sink(self, 1)) mat(db->grad, k, m).noalias() += cmat(A.value, n, k).transpose() * g;
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined("matmul_nt", a);
  check_defined("matmul_nt", b);
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  std::vector<T> out(n * m);
  mat(out, n, m).noalias() = cmat(a.node()->value, n, k) * cmat(b.node()->value, m, k).transpose();
  return make_result<T>(n, m, std::move(out), "matmul_nt", {&a, &b}, [n, k, m](Node<T>& self) {
    const auto g = cmat(self.grad, n, m);
    const auto& A = *self.inputs[0];
    const auto& B = *self.inputs[1];
    if (auto* da = sink(self, 0)) mat(da->grad, n, k).noalias() += g * cmat(B.value, m, k);
    if (auto* db = sink(self, 1)) mat(db->grad, m, k).noalias() += g.transpose() * cmat(A.value, n, k);
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined("add", a);
  check_defined("add", b);
  const std::size_t r = a.rows(), c = a.cols();
  const bool same = b.rows() == r && b.cols() == c;
  const bool bias = b.rows() == 1 && b.cols() == c;
  if (!same && !bias) shape_fail("add", a, b);
  std::vector<T> out(a.node()->value);
  if (same) {
    arr(out, r, c) += carr(b.node()->value, r, c);
  } else {
    arr(out, r, c).rowwise() += carr(b.node()->value, 1, c).row(0);
  }
  return make_result<T>(r, c, std::move(out), "add", {&a, &b}, [r, c, same](Node<T>& self) {
    if (auto* da = sink(self, 0)) arr(da->grad, r, c) += carr(self.grad, r, c);
    if (auto* db = sink(self, 1)) {
      if (same) {
        arr(db->grad, r, c) += carr(self.grad, r, c);
      } else {
        const T* g = self.grad.data();
        add_into(db->grad, col_sums<T>(r, c, [&](std::size_t i, std::size_t j) { return g[i * c + j]; }));
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined("sub", a);
  check_defined("sub", b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("sub", a, b);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(a.node()->value);
  arr(out, r, c) -= carr(b.node()->value, r, c);
  return make_result<T>(r, c, std::move(out), "sub", {&a, &b}, [r, c](Node<T>& self) {
    if (auto* da = sink(self, 0)) arr(da->grad, r, c) += carr(self.grad, r, c);
    if (auto* db = sink(self, 1)) arr(db->grad, r, c) -= carr(self.grad, r, c);
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined("mul", a);
  check_defined("mul", b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("mul", a, b);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(a.node()->value);
  arr(out, r, c) *= carr(b.node()->value, r, c);
  return make_result<T>(r, c, std::move(out), "mul", {&a, &b}, [r, c](Node<T>& self) {
    const auto& A = *self.inputs[0];
    const auto& B = *self.inputs[1];
    if (auto* da = sink(self, 0)) arr(da->grad, r, c) += carr(self.grad, r, c) * carr(B.value, r, c);
    if (auto* db = sink(self, 1)) arr(db->grad, r, c) += carr(self.grad, r, c) * carr(A.value, r, c);
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  check_defined("scale", a);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(a.node()->value);
  arr(out, r, c) *= s;
  return make_result<T>(r, c, std::move(out), "scale", {&a}, [r, c, s](Node<T>& self) {
    if (auto* da = sink(self, 0)) arr(da->grad, r, c) += s * carr(self.grad, r, c);
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  check_defined("relu", a);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(a.numel());
  arr(out, r, c) = carr(a.node()->value, r, c).max(T(0));
  return make_result<T>(r, c, std::move(out), "relu", {&a}, [r, c](Node<T>& self) {
    if (auto* da = sink(self, 0)) {
      arr(da->grad, r, c) += (carr(self.value, r, c) > T(0)).select(carr(self.grad, r, c), T(0));
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  check_defined("sigmoid", a);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(a.numel());
  const auto& x = a.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -x[i];
  exp_inplace(out.data(), out.size());
  for (auto& v : out) v = T(1) / (T(1) + v);
  return make_result<T>(r, c, std::move(out), "sigmoid", {&a}, [r, c](Node<T>& self) {
    if (auto* da = sink(self, 0)) {
      const auto y = carr(self.value, r, c);
      arr(da->grad, r, c) += carr(self.grad, r, c) * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  check_defined("softmax", a);
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(a.numel());
  auto y = arr(out, r, c);
  const auto x = carr(a.node()->value, r, c);
  if (axis == 1) {
    using RowArr = Eigen::Array<T, 1, Eigen::Dynamic>;
    const auto n = static_cast<Eigen::Index>(c);
    for (std::size_t i = 0; i < r; ++i) {
      Eigen::Map<const RowArr> xi(a.node()->value.data() + i * c, n);
      Eigen::Map<RowArr> yi(out.data() + i * c, n);
      yi = xi - xi.maxCoeff();
      exp_inplace(out.data() + i * c, c);
      yi *= T(1) / lane_sum(out.data() + i * c, c);
    }
  } else {
    y = x.rowwise() - x.colwise().maxCoeff();
    exp_inplace(out.data(), out.size());
    const T* yp = out.data();
    const auto total = col_sums<T>(r, c, [&](std::size_t i, std::size_t j) { return yp[i * c + j]; });
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total[j];
  }
  return make_result<T>(r, c, std::move(out), "softmax", {&a}, [r, c, axis](Node<T>& self) {
    if (auto* da = sink(self, 0)) {
      if (axis == 1) {
        using RowArr = Eigen::Array<T, 1, Eigen::Dynamic>;
        const auto n = static_cast<Eigen::Index>(c);
        for (std::size_t i = 0; i < r; ++i) {
          Eigen::Map<const RowArr> yi(self.value.data() + i * c, n);
          Eigen::Map<const RowArr> gi(self.grad.data() + i * c, n);
          Eigen::Map<RowArr> di(da->grad.data() + i * c, n);
          const T* yp = self.value.data() + i * c;
          const T* gp = self.grad.data() + i * c;
          const T dot = lane_sum<T>(c, [&](std::size_t j) { return gp[j] * yp[j]; });
          di += yi * (gi - dot);
        }
      } else {
        const T* yp = self.value.data();
        const T* gp = self.grad.data();
        const auto dot = col_sums<T>(r, c, [&](std::size_t i, std::size_t j) { return gp[i * c + j] * yp[i * c + j]; });
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) da->grad[i * c + j] += yp[i * c + j] * (gp[i * c + j] - dot[j]);
      }
    }
  });
}

namespace {

template <typename T>
Tensor<T> layer_norm_impl(const Tensor<T>& x, const Tensor<T>* gamma, const Tensor<T>* beta, T eps) {
  check_defined("layer_norm", x);
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma && (gamma->rows() != 1 || gamma->cols() != c)) shape_fail("layer_norm", x, *gamma);
  if (beta && (beta->rows() != 1 || beta->cols() != c)) shape_fail("layer_norm", x, *beta);
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(r);
  const auto X = carr(x.node()->value, r, c);
  auto XH = arr(xhat, r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const T* xp = x.node()->value.data() + i * c;
    const T mean = lane_sum(xp, c) / static_cast<T>(c);
    const T var = lane_sum<T>(c, [&](std::size_t j) { return (xp[j] - mean) * (xp[j] - mean); }) / static_cast<T>(c);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    XH.row(i) = (X.row(i) - mean) * inv_std[i];
  }
  std::vector<T> out(xhat);
  if (gamma) arr(out, r, c).rowwise() *= carr(gamma->node()->value, 1, c).row(0);
  if (beta) arr(out, r, c).rowwise() += carr(beta->node()->value, 1, c).row(0);

  const bool affine = gamma != nullptr;
  auto fn = [r, c, affine, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
    const auto g = carr(self.grad, r, c);
    const auto XH = carr(xhat, r, c);
    if (auto* dx = sink(self, 0)) {
      Arr<T> gy = g;
      if (affine) gy.rowwise() *= carr(self.inputs[1]->value, 1, c).row(0);
      auto DX = arr(dx->grad, r, c);
      for (std::size_t i = 0; i < r; ++i) {
        const T* gp = gy.data() + i * c;
        const T* hp = xhat.data() + i * c;
        const T mean_g = lane_sum(gp, c) / static_cast<T>(c);
        const T mean_gx = lane_sum<T>(c, [&](std::size_t j) { return gp[j] * hp[j]; }) / static_cast<T>(c);
        DX.row(i) += inv_std[i] * (gy.row(i) - mean_g - XH.row(i) * mean_gx);
      }
    }
    if (affine) {
      const T* gp = self.grad.data();
      const T* hp = xhat.data();
      if (auto* dg = sink(self, 1)) {
        add_into(dg->grad, col_sums<T>(r, c, [&](std::size_t i, std::size_t j) { return gp[i * c + j] * hp[i * c + j]; }));
      }
      if (auto* db = sink(self, 2)) {
        add_into(db->grad, col_sums<T>(r, c, [&](std::size_t i, std::size_t j) { return gp[i * c + j]; }));
      }
    }
  };
  if (affine) {
    return make_result<T>(r, c, std::move(out), "layer_norm", {&x, gamma, beta}, std::move(fn));
  }
  return make_result<T>(r, c, std::move(out), "layer_norm", {&x}, std::move(fn));
}

}  // namespace

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  check_defined("layer_norm", gamma);
  check_defined("layer_norm", beta);
  return layer_norm_impl(x, &gamma, &beta, eps);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, T eps) {
  return layer_norm_impl<T>(x, nullptr, nullptr, eps);
}

template <typename T>
Tensor<T> max_pool(const Tensor<T>& a, int axis) {
  check_defined("max_pool", a);
  if (axis != 0 && axis != 1) throw ShapeError("max_pool: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0 || c == 0) throw ShapeError("max_pool: empty input " + a.shape_str());
  const auto& v = a.node()->value;
  const std::size_t out_n = axis == 0 ? c : r;
  std::vector<T> out(out_n);
  std::vector<std::size_t> arg(out_n);  // flat source index of each maximum
  if (axis == 0) {
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = j;
      for (std::size_t i = 1; i < r; ++i) {
        if (v[i * c + j] > v[best]) best = i * c + j;
      }
      arg[j] = best;
      out[j] = v[best];
    }
  } else {
    for (std::size_t i = 0; i < r; ++i) {
      std::size_t best = i * c;
      for (std::size_t j = 1; j < c; ++j) {
        if (v[i * c + j] > v[best]) best = i * c + j;
      }
      arg[i] = best;
      out[i] = v[best];
    }
  }
  const std::size_t orows = axis == 0 ? 1 : r;
  const std::size_t ocols = axis == 0 ? c : 1;
  return make_result<T>(orows, ocols, std::move(out), "max_pool", {&a},
                        [arg = std::move(arg)](Node<T>& self) {
                          if (auto* da = sink(self, 0)) {
                            for (std::size_t i = 0; i < arg.size(); ++i) da->grad[arg[i]] += self.grad[i];
                          }
                        });
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined("mse", a);
  check_defined("mse", b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail("mse", a, b);
  const std::size_t r = a.rows(), c = a.cols();
  if (r * c == 0) throw ShapeError("mse: empty input");
  const T* ap = a.node()->value.data();
  const T* bp = b.node()->value.data();
  const T value = lane_sum<T>(r * c, [&](std::size_t i) { return (ap[i] - bp[i]) * (ap[i] - bp[i]); }) /
                  static_cast<T>(r * c);
  return make_result<T>(1, 1, std::vector<T>{value}, "mse", {&a, &b}, [r, c](Node<T>& self) {
    const T coef = T(2) * self.grad[0] / static_cast<T>(r * c);
    const auto diff = carr(self.inputs[0]->value, r, c) - carr(self.inputs[1]->value, r, c);
    if (auto* da = sink(self, 0)) arr(da->grad, r, c) += coef * diff;
    if (auto* db = sink(self, 1)) arr(db->grad, r, c) -= coef * diff;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  check_defined("sum", a);
  const std::size_t r = a.rows(), c = a.cols();
  const T value = lane_sum(a.node()->value.data(), r * c);
  return make_result<T>(1, 1, std::vector<T>{value}, "sum", {&a}, [r, c](Node<T>& self) {
    if (auto* da = sink(self, 0)) arr(da->grad, r, c) += self.grad[0];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) check_defined("concat", p);
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = parts[0].cols();
    for (const auto& p : parts) {
      if (p.cols() != cols) shape_fail("concat", parts[0], p);
      rows += p.rows();
    }
  } else {
    rows = parts[0].rows();
    for (const auto& p : parts) {
      if (p.rows() != rows) shape_fail("concat", parts[0], p);
      cols += p.cols();
    }
  }
  std::vector<T> out(rows * cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    if (axis == 0) {
      std::copy(p.data().begin(), p.data().end(), out.begin() + off * cols);
      off += p.rows();
    } else {
      mat(out, rows, cols).middleCols(off, p.cols()) = cmat(p.node()->value, rows, p.cols());
      off += p.cols();
    }
  }

  auto node = std::make_shared<Node<T>>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(out);
  node->op = "concat";
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parts) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->is_leaf = false;
    for (const auto& p : parts) node->inputs.push_back(p.node());
    node->backward_fn = [rows, cols, axis, offsets = std::move(offsets)](Node<T>& self) {
      for (std::size_t i = 0; i < self.inputs.size(); ++i) {
        auto* in = sink(self, i);
        if (!in) continue;
        if (axis == 0) {
          const auto g = cmat(self.grad, rows, cols).middleRows(offsets[i], in->rows);
          mat(in->grad, in->rows, cols) += g;
        } else {
          const auto g = cmat(self.grad, rows, cols).middleCols(offsets[i], in->cols);
          mat(in->grad, rows, in->cols) += g;
        }
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::size_t begin, std::size_t end) {
  check_defined("slice", a);
  if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t extent = axis == 0 ? r : c;
  if (begin > end || end > extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside axis of length " + std::to_string(extent));
  }
  const std::size_t n = end - begin;
  const std::size_t orows = axis == 0 ? n : r;
  const std::size_t ocols = axis == 0 ? c : n;
  std::vector<T> out(orows * ocols);
  if (axis == 0) {
    mat(out, orows, ocols) = cmat(a.node()->value, r, c).middleRows(begin, n);
  } else {
    mat(out, orows, ocols) = cmat(a.node()->value, r, c).middleCols(begin, n);
  }
  return make_result<T>(orows, ocols, std::move(out), "slice", {&a},
                        [r, c, axis, begin, n, orows, ocols](Node<T>& self) {
                          if (auto* da = sink(self, 0)) {
                            const auto g = cmat(self.grad, orows, ocols);
                            if (axis == 0) {
                              mat(da->grad, r, c).middleRows(begin, n) += g;
                            } else {
                              mat(da->grad, r, c).middleCols(begin, n) += g;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  check_defined("transpose", a);
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(r * c);
  mat(out, c, r) = cmat(a.node()->value, r, c).transpose();
  return make_result<T>(c, r, std::move(out), "transpose", {&a}, [r, c](Node<T>& self) {
    if (auto* da = sink(self, 0)) mat(da->grad, r, c) += cmat(self.grad, c, r).transpose();
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::size_t rows, std::size_t cols) {
  check_defined("reshape", a);
  if (rows * cols != a.numel()) {
    throw ShapeError("reshape: cannot view " + a.shape_str() + " as [" + std::to_string(rows) + ", " +
                     std::to_string(cols) + "]");
  }
  return make_result<T>(rows, cols, a.node()->value, "reshape", {&a}, [](Node<T>& self) {
    if (auto* da = sink(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) da->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& row, std::size_t n) {
  check_defined("repeat_rows", row);
  if (row.rows() != 1) throw ShapeError("repeat_rows: expected a [1, C] row, got " + row.shape_str());
  const std::size_t c = row.cols();
  std::vector<T> out(n * c);
  arr(out, n, c).rowwise() = carr(row.node()->value, 1, c).row(0);
  return make_result<T>(n, c, std::move(out), "repeat_rows", {&row}, [n, c](Node<T>& self) {
    if (auto* da = sink(self, 0)) {
      const T* g = self.grad.data();
      add_into(da->grad, col_sums<T>(n, c, [&](std::size_t i, std::size_t j) { return g[i * c + j]; }));
    }
  });
}

#define CORDVIP_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> softmax(const Tensor<T>&, int);                                          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);     \
  template Tensor<T> layer_norm(const Tensor<T>&, T);                                         \
  template Tensor<T> max_pool(const Tensor<T>&, int);                                         \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                              \
  template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);                  \
  template Tensor<T> transpose(const Tensor<T>&);                                             \
  template Tensor<T> reshape(const Tensor<T>&, std::size_t, std::size_t);                     \
  template Tensor<T> repeat_rows(const Tensor<T>&, std::size_t);

CORDVIP_INSTANTIATE_OPS(float)
CORDVIP_INSTANTIATE_OPS(double)

}  // namespace cordvip::nn

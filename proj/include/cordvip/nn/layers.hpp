#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cordvip/nn/ops.hpp"

namespace cordvip::nn {

/// Ordered, named collection of trainable leaves.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(const std::string& name, std::size_t rows, std::size_t cols, std::vector<T> init);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t num_values() const;
  void zero_grad();

  /// Copies values (with conversion) from another set with identical names and shapes.
  template <typename U>
  void copy_values_from(const ParameterSet<U>& other);

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

/// x @ W + b with W [in, out], b [1, out]; uniform init in +-sqrt(1/in).
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  static Linear create(ParameterSet<T>& params, const std::string& name, std::size_t in,
                       std::size_t out, std::mt19937_64& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }
};

/// Feature-wise layer norm with learned scale (ones) and shift (zeros).
template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;

  static LayerNorm create(ParameterSet<T>& params, const std::string& name, std::size_t features);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

/// Multi-head scaled dot-product attention from query tokens onto key/value tokens.
template <typename T>
struct CrossAttention {
  Linear<T> q, k, v, out;
  std::size_t heads = 1;

  static CrossAttention create(ParameterSet<T>& params, const std::string& name, std::size_t dim,
                               std::size_t heads, std::mt19937_64& rng);
  /// queries [Nq, d], keys_values [Nk, d] -> [Nq, d].
  Tensor<T> operator()(const Tensor<T>& queries, const Tensor<T>& keys_values) const;
};

template <typename T>
Tensor<T> multi_head_cross_attention(const Tensor<T>& queries, const Tensor<T>& keys_values,
                                     const CrossAttention<T>& params) {
  return params(queries, keys_values);
}

// ---------------------------------------------------------------------------

template <typename T>
template <typename U>
void ParameterSet<T>::copy_values_from(const ParameterSet<U>& other) {
  if (other.size() != size()) throw ShapeError("parameter copy: set sizes differ");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [name, dst] = entries_[i];
    const auto& [oname, src] = other.entries()[i];
    if (name != oname || dst.rows() != src.rows() || dst.cols() != src.cols()) {
      throw ShapeError("parameter copy: mismatch at " + name);
    }
    auto out = entries_[i].second.mutable_data();
    const auto in = src.data();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<T>(in[j]);
  }
}

}  // namespace cordvip::nn

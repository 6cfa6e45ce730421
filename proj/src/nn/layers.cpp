#include "cordvip/nn/layers.hpp"

#include <cmath>

namespace cordvip::nn {

template <typename T>
Tensor<T> ParameterSet<T>::add(const std::string& name, std::size_t rows, std::size_t cols,
                               std::vector<T> init) {
  if (contains(name)) throw ConfigError("parameter '" + name + "' registered twice");
  Tensor<T> t(rows, cols, std::move(init), true);
  entries_.emplace_back(name, t);
  return t;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ConfigError("unknown parameter '" + name + "'");
}

template <typename T>
bool ParameterSet<T>::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return true;
  }
  return false;
}

template <typename T>
std::size_t ParameterSet<T>::num_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

template <typename T>
Linear<T> Linear<T>::create(ParameterSet<T>& params, const std::string& name, std::size_t in,
                            std::size_t out, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  std::vector<T> w(in * out), b(out);
  for (auto& x : w) x = static_cast<T>(uni(rng));
  for (auto& x : b) x = static_cast<T>(uni(rng));
  Linear layer;
  layer.weight = params.add(name + ".weight", in, out, std::move(w));
  layer.bias = params.add(name + ".bias", 1, out, std::move(b));
  return layer;
}

template <typename T>
LayerNorm<T> LayerNorm<T>::create(ParameterSet<T>& params, const std::string& name,
                                  std::size_t features) {
  LayerNorm ln;
  ln.gamma = params.add(name + ".gamma", 1, features, std::vector<T>(features, T(1)));
  ln.beta = params.add(name + ".beta", 1, features, std::vector<T>(features, T(0)));
  return ln;
}

template <typename T>
CrossAttention<T> CrossAttention<T>::create(ParameterSet<T>& params, const std::string& name,
                                            std::size_t dim, std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError("cross attention: dim " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  CrossAttention attn;
  attn.q = Linear<T>::create(params, name + ".q", dim, dim, rng);
  attn.k = Linear<T>::create(params, name + ".k", dim, dim, rng);
  attn.v = Linear<T>::create(params, name + ".v", dim, dim, rng);
  attn.out = Linear<T>::create(params, name + ".out", dim, dim, rng);
  attn.heads = heads;
  return attn;
}

template <typename T>
Tensor<T> CrossAttention<T>::operator()(const Tensor<T>& queries, const Tensor<T>& keys_values) const {
  const std::size_t dim = q.in_features();
  if (queries.cols() != dim || keys_values.cols() != dim) {
    throw ShapeError("cross attention: expected token width " + std::to_string(dim) + ", got " +
                     queries.shape_str() + " and " + keys_values.shape_str());
  }
  if (heads == 0 || dim % heads != 0) throw ShapeError("cross attention: dim not divisible by heads");
  const std::size_t dh = dim / heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  // Scaling the [Nq, d] queries is cheaper than scaling the [Nq, Nk] logits.
  const Tensor<T> Q = scale(q(queries), inv_sqrt);
  const Tensor<T> K = k(keys_values);
  const Tensor<T> V = v(keys_values);
  std::vector<Tensor<T>> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = heads == 1 ? Q : slice(Q, 1, h * dh, (h + 1) * dh);
    const auto kh = heads == 1 ? K : slice(K, 1, h * dh, (h + 1) * dh);
    const auto vh = heads == 1 ? V : slice(V, 1, h * dh, (h + 1) * dh);
    const auto weights = softmax(matmul_nt(qh, kh), 1);
    per_head.push_back(matmul(weights, vh));
  }
  const Tensor<T> merged = heads == 1 ? per_head.front() : concat(per_head, 1);
  return out(merged);
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct CrossAttention<float>;
template struct CrossAttention<double>;

}  // namespace cordvip::nn

#include "cordvip/nn/optim.hpp"

#include <cmath>

namespace cordvip::nn {

template <typename T>
AdamW<T>::AdamW(std::vector<std::pair<std::string, Tensor<T>>> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template <typename T>
void AdamW<T>::step() {
  for (const auto& [name, p] : params_) {
    for (T g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("adamw: non-finite gradient in parameter '" + name + "'");
      }
    }
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double decay = 1.0 - config_.lr * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    auto w = p.mutable_data();
    const auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = (mj / bias1) / (std::sqrt(vj / bias2) + config_.eps);
      w[j] = static_cast<T>(static_cast<double>(w[j]) * decay - config_.lr * update);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace cordvip::nn

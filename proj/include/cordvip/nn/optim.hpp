#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cordvip/nn/layers.hpp"

namespace cordvip::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Decoupled-weight-decay Adam over a fixed list of parameters.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor<T>>> params, AdamWConfig config);

  /// Applies one update from the accumulated gradients (missing gradients count as zero).
  /// Throws NumericError before touching any parameter if a gradient is not finite.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return steps_; }
  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  const std::vector<std::pair<std::string, Tensor<T>>>& params() const { return params_; }
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  void restore_steps(std::uint64_t steps) { steps_ = steps; }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  AdamWConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace cordvip::nn

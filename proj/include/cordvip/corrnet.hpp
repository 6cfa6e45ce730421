#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "cordvip/nn/layers.hpp"
#include "cordvip/obsbuild.hpp"

namespace cordvip {

struct EncoderConfig {
  std::size_t d = 128;          // token width
  std::size_t heads = 4;
  std::size_t state_dim = 16;   // projection width for arm/hand states
  std::size_t state_heads = 4;
  std::size_t head_hidden = 256;
  std::size_t horizon = 12;     // coordination sequence length
  std::size_t arm_dim = 3;
  std::size_t hand_dim = 2;
  double lambda = 1.0;
  double gamma = 1.0;
  double theta = 10.0;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  /// Width of the per-frame conditioning vector [pooled_H, pooled_O, psi_A, psi_H].
  std::size_t feature_dim() const { return 2 * d + 2 * state_dim; }
};

template <typename T>
struct CorrFeatures {
  nn::Tensor<T> phi_h;     // [N, d]
  nn::Tensor<T> phi_o;     // [N, d]
  nn::Tensor<T> pooled_h;  // [1, d]
  nn::Tensor<T> pooled_o;  // [1, d]
  nn::Tensor<T> psi_a;     // [1, s]
  nn::Tensor<T> psi_h;     // [1, s]

  /// [1, 2d + 2s] concatenation used to condition the policy.
  nn::Tensor<T> condition() const;
};

/// One pretraining frame: normalized clouds and states, raw contact targets in [0, 1],
/// and normalized future action sequences.
template <typename T>
struct PretrainSample {
  nn::Tensor<T> obj_pc;      // [N, 3]
  nn::Tensor<T> hand_pc;     // [N, 3]
  nn::Tensor<T> arm_state;   // [1, Da]
  nn::Tensor<T> hand_state;  // [1, Dh]
  nn::Tensor<T> contact;     // [N, 1]
  nn::Tensor<T> arm_seq;     // [H, Da]
  nn::Tensor<T> hand_seq;    // [H, Dh]
};

template <typename T>
struct PretrainTerms {
  nn::Tensor<T> total;
  nn::Tensor<T> contact;
  nn::Tensor<T> coordination;
};

/// Shared per-point stack: (linear, layer norm, relu) x 3.
template <typename T>
struct PointEncoder {
  nn::Linear<T> fc[3];
  nn::LayerNorm<T> ln[3];

  static PointEncoder create(nn::ParameterSet<T>& params, const std::string& name, std::size_t d,
                             std::mt19937_64& rng);
  nn::Tensor<T> operator()(const nn::Tensor<T>& cloud) const;
};

template <typename T>
struct Mlp3 {
  nn::Linear<T> fc[3];

  static Mlp3 create(nn::ParameterSet<T>& params, const std::string& name, std::size_t in,
                     std::size_t hidden1, std::size_t hidden2, std::size_t out, std::mt19937_64& rng);
  nn::Tensor<T> operator()(const nn::Tensor<T>& x) const;
};

template <typename T>
struct EncoderInputs {
  nn::Tensor<T> obj_pc;      // [N, 3]
  nn::Tensor<T> hand_pc;     // [N, 3]
  nn::Tensor<T> arm_state;   // [1, Da]
  nn::Tensor<T> hand_state;  // [1, Dh]
};

/// Normalized encoder inputs from raw flattened clouds (x,y,z rows) and states.
template <typename T>
EncoderInputs<T> make_encoder_inputs(std::span<const double> obj_pc, std::span<const double> hand_pc,
                                     std::span<const double> arm_state, std::span<const double> hand_state,
                                     const Normalizer& norm);
template <typename T>
EncoderInputs<T> make_encoder_inputs(const Observation& obs, const Normalizer& norm);

/// Hand/object correspondence encoder with contact and coordination heads.
template <typename T>
class CorrEncoder {
 public:
  CorrEncoder(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

  nn::Tensor<T> encode_hand_tokens(const nn::Tensor<T>& cloud) const;
  nn::Tensor<T> encode_object_tokens(const nn::Tensor<T>& cloud) const;
  std::pair<nn::Tensor<T>, nn::Tensor<T>> cross_fuse(const nn::Tensor<T>& hand_tokens,
                                                     const nn::Tensor<T>& obj_tokens) const;
  std::pair<nn::Tensor<T>, nn::Tensor<T>> project_states(const nn::Tensor<T>& arm_state,
                                                         const nn::Tensor<T>& hand_state) const;

  CorrFeatures<T> forward(const EncoderInputs<T>& in) const {
    return forward(in.hand_pc, in.obj_pc, in.arm_state, in.hand_state);
  }
  CorrFeatures<T> forward(const nn::Tensor<T>& hand_pc, const nn::Tensor<T>& obj_pc,
                          const nn::Tensor<T>& arm_state, const nn::Tensor<T>& hand_state) const;

  /// [N, 1] contact predictions in (0, 1).
  nn::Tensor<T> predict_contact(const CorrFeatures<T>& f) const;
  /// [H, Da] from pooled clouds and the hand-state token.
  nn::Tensor<T> predict_arm_seq(const CorrFeatures<T>& f) const;
  /// [H, Dh] from pooled clouds and the arm-state token.
  nn::Tensor<T> predict_hand_seq(const CorrFeatures<T>& f) const;

  PretrainTerms<T> pretrain_loss(const PretrainSample<T>& sample) const;

 private:
  EncoderConfig config_;
  nn::ParameterSet<T> params_;
  PointEncoder<T> hand_enc_, obj_enc_;
  nn::CrossAttention<T> attn_h_, attn_o_;
  nn::Linear<T> arm_proj_, hand_proj_;
  nn::CrossAttention<T> state_attn_a_, state_attn_h_;
  Mlp3<T> contact_head_, arm_head_, hand_head_;
};

}  // namespace cordvip

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cordvip/corrnet.hpp"
#include "cordvip/obsbuild.hpp"
#include "cordvip/toyenv.hpp"

namespace cordvip {

enum class ScheduleKind { kSquaredCosine, kLinear };

const char* to_string(ScheduleKind kind);
/// "squaredcos" or "linear"; anything else raises ConfigError.
ScheduleKind parse_schedule_kind(const std::string& name);

/// Cumulative signal coefficients for steps k = 1..K. Step 0 is the clean sample.
struct DiffusionSchedule {
  ScheduleKind kind = ScheduleKind::kSquaredCosine;
  std::size_t K = 0;
  std::vector<double> betas;      // [K], beta_k at index k-1
  std::vector<double> alpha_bar;  // [K], prod_{i<=k} (1 - beta_i) at index k-1

  /// alpha_bar for k in [0, K]; k = 0 gives 1.
  double alpha_bar_at(std::size_t k) const;
};

DiffusionSchedule make_schedule(std::size_t K, ScheduleKind kind = ScheduleKind::kSquaredCosine);

/// sqrt(ab_k) * a0 + sqrt(1 - ab_k) * eps.
std::vector<double> forward_noise(std::span<const double> a0, std::size_t k, std::span<const double> eps,
                                  const DiffusionSchedule& schedule);

/// Descending step subset of size n over 1..K with even trailing spacing (K, K - K/n, ...).
std::vector<std::size_t> ddim_timesteps(std::size_t K, std::size_t n);

/// Predicts the injected noise for a flattened action sequence at step k.
using NoisePredictor = std::function<std::vector<double>(std::span<const double> a_k, std::size_t k)>;

/// States visited by deterministic DDIM: the initial draw followed by one entry per step.
/// With `clip_x0` each clean-sample estimate is clipped to [-1, 1] before it is re-noised;
/// otherwise nothing is clipped.
std::vector<std::vector<double>> ddim_trajectory(std::vector<double> a_init, const NoisePredictor& predict,
                                                 const DiffusionSchedule& schedule,
                                                 std::span<const std::size_t> timesteps, bool clip_x0 = false);

/// Seeded Gaussian start, deterministic DDIM over `timesteps`, result clipped to [-1, 1].
std::vector<double> ddim_sample(std::size_t dim, const NoisePredictor& predict, const DiffusionSchedule& schedule,
                                std::span<const std::size_t> timesteps, std::uint64_t seed,
                                bool clip_x0 = false);

/// Sinusoidal embedding of a diffusion step, [1, dim].
std::vector<double> step_embedding(std::size_t k, std::size_t dim);

struct DenoiserConfig {
  std::size_t action_dim = 0;  // H * (Da + Dh)
  std::size_t cond_dim = 0;
  std::size_t hidden = 512;
  std::size_t blocks = 3;
  std::size_t embed_dim = 64;

  void validate() const;
  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j);
};

/// Residual feed-forward noise predictor over [a_k, condition, embed(k)].
template <typename T>
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

  /// a_k [B, A], cond [B, C], one step per row -> predicted noise [B, A].
  nn::Tensor<T> operator()(const nn::Tensor<T>& a_k, const nn::Tensor<T>& cond,
                           std::span<const std::size_t> steps) const;

 private:
  struct Block {
    nn::LayerNorm<T> ln;
    nn::Linear<T> fc1, fc2;
  };
  DenoiserConfig config_;
  nn::ParameterSet<T> params_;
  nn::Linear<T> in_;
  std::vector<Block> blocks_;
  nn::LayerNorm<T> out_ln_;
  nn::Linear<T> out_;
};

/// Noise-prediction objective: per-sample sum of squared errors, averaged over the batch.
/// Steps and noise are drawn from `rng` (k uniform on 1..K). Throws NumericError when the loss
/// is not finite.
template <typename T>
nn::Tensor<T> diffusion_loss(const Denoiser<T>& denoiser, const nn::Tensor<T>& a0, const nn::Tensor<T>& cond,
                             const DiffusionSchedule& schedule, std::mt19937_64& rng);

/// Same objective with caller-supplied steps and noise, and any predictor graph.
template <typename T>
nn::Tensor<T> diffusion_loss_with(const std::function<nn::Tensor<T>(const nn::Tensor<T>&, std::span<const std::size_t>)>& predict,
                                  const nn::Tensor<T>& a0, std::span<const std::size_t> steps,
                                  const nn::Tensor<T>& eps, const DiffusionSchedule& schedule);

struct PolicyConfig {
  std::size_t horizon = 12;
  std::size_t n_obs_steps = 4;
  std::size_t n_action_steps = 6;
  std::size_t ddim_steps = 10;

  void validate() const;
};

/// One observation in a rollout; `id` is its step index and identifies the frame for caching.
struct FrameRef {
  std::size_t id = 0;
  const Observation* obs = nullptr;
};

/// Chooses an H-step plan of raw (denormalized) actions from the recent observations.
class Planner {
 public:
  virtual ~Planner() = default;
  /// `history` holds exactly n_obs_steps frames, oldest first; the last is the current one.
  virtual std::vector<toy::Action> plan(const std::vector<FrameRef>& history,
                                        const toy::EnvState& state, std::uint64_t plan_seed) = 0;
};

/// Learned policy: encoder features of each frame, concatenated, condition the sampler.
class DiffusionPlanner : public Planner {
 public:
  DiffusionPlanner(std::shared_ptr<const CorrEncoder<float>> encoder,
                   std::shared_ptr<const Denoiser<float>> denoiser, DiffusionSchedule schedule,
                   Normalizer normalizer, PolicyConfig config);

  std::vector<toy::Action> plan(const std::vector<FrameRef>& history, const toy::EnvState& state,
                                std::uint64_t plan_seed) override;

  /// Encoder features of one frame, [feature_dim] (no graph).
  std::vector<float> frame_features(const Observation& obs) const;
  void reset_cache() { cache_.clear(); }

 private:
  std::shared_ptr<const CorrEncoder<float>> encoder_;
  std::shared_ptr<const Denoiser<float>> denoiser_;
  DiffusionSchedule schedule_;
  Normalizer normalizer_;
  PolicyConfig config_;
  std::vector<std::size_t> timesteps_;
  std::vector<std::pair<std::size_t, std::vector<float>>> cache_;  // by frame id
};

/// Test stand-in: runs the scripted expert ahead on a copy of the state, then recovers that plan
/// through DDIM with a noise predictor that is consistent with it.
class ExpertDenoiserPlanner : public Planner {
 public:
  ExpertDenoiserPlanner(Normalizer normalizer, PolicyConfig config, DiffusionSchedule schedule);
  std::vector<toy::Action> plan(const std::vector<FrameRef>& history, const toy::EnvState& state,
                                std::uint64_t plan_seed) override;

 private:
  Normalizer normalizer_;
  PolicyConfig config_;
  DiffusionSchedule schedule_;
};

struct RolloutStep {
  toy::EnvState state;  // after the action
  toy::Action action;
};

struct RolloutRecord {
  std::uint64_t seed = 0;
  bool success = false;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
  std::vector<RolloutStep> trace;

  double steps_per_second() const { return wall_seconds > 0 ? static_cast<double>(steps) / wall_seconds : 0.0; }
};

/// Receding-horizon loop: plan H actions from the last n_obs_steps frames (earliest padded by
/// repetition), execute the first n_action_steps, repeat until success or `max_steps`.
RolloutRecord rollout_policy(Planner& planner, const PolicyConfig& config, std::uint64_t env_seed,
                             std::uint64_t sampler_seed, std::size_t max_steps = toy::kDefaultMaxSteps,
                             const toy::ToyWorld& world = toy::ToyWorld::instance());

/// Normalized [H, Da + Dh] action rows -> raw actions.
std::vector<toy::Action> denormalize_plan(std::span<const double> flat, std::size_t horizon, const Normalizer& norm);
/// Raw actions -> normalized, flattened [H * (Da + Dh)].
std::vector<double> normalize_plan(std::span<const toy::Action> plan, const Normalizer& norm);

}  // namespace cordvip

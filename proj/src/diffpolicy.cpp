#include "cordvip/diffpolicy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace cordvip {

using nn::Tensor;

const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kSquaredCosine:
      return "squaredcos";
    case ScheduleKind::kLinear:
      return "linear";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "squaredcos") return ScheduleKind::kSquaredCosine;
  if (name == "linear") return ScheduleKind::kLinear;
  throw ConfigError("unknown noise schedule '" + name + "' (expected squaredcos or linear)");
}

double DiffusionSchedule::alpha_bar_at(std::size_t k) const {
  if (k == 0) return 1.0;
  if (k > K) throw ShapeError("schedule: step " + std::to_string(k) + " beyond K=" + std::to_string(K));
  return alpha_bar[k - 1];
}

DiffusionSchedule make_schedule(std::size_t K, ScheduleKind kind) {
  if (K < 2) throw ConfigError("schedule: K must be at least 2");
  constexpr double kMaxBeta = 0.999;
  DiffusionSchedule s;
  s.kind = kind;
  s.K = K;
  s.betas.resize(K);
  const double Kd = static_cast<double>(K);
  if (kind == ScheduleKind::kSquaredCosine) {
    constexpr double kOffset = 0.008;
    auto f = [&](double k) {
      const double c = std::cos((k / Kd + kOffset) / (1.0 + kOffset) * std::numbers::pi / 2);
      return c * c;
    };
    for (std::size_t k = 1; k <= K; ++k) {
      s.betas[k - 1] = std::min(1.0 - f(static_cast<double>(k)) / f(static_cast<double>(k - 1)), kMaxBeta);
    }
  } else {
    // Endpoints of the classic 1000-step linear schedule, rescaled to K steps.
    const double scale = 1000.0 / Kd;
    const double b0 = 1e-4 * scale, b1 = 0.02 * scale;
    for (std::size_t k = 1; k <= K; ++k) {
      const double beta = b0 + (b1 - b0) * static_cast<double>(k - 1) / (Kd - 1.0);
      s.betas[k - 1] = std::min(beta, kMaxBeta);
    }
  }
  s.alpha_bar.resize(K);
  double prod = 1.0;
  for (std::size_t k = 0; k < K; ++k) {
    prod *= 1.0 - s.betas[k];
    s.alpha_bar[k] = prod;
  }
  return s;
}

std::vector<double> forward_noise(std::span<const double> a0, std::size_t k, std::span<const double> eps,
                                  const DiffusionSchedule& schedule) {
  if (a0.size() != eps.size()) {
    throw ShapeError("forward_noise: sample has " + std::to_string(a0.size()) + " values, noise has " +
                     std::to_string(eps.size()));
  }
  const double ab = schedule.alpha_bar_at(k);
  const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
  std::vector<double> out(a0.size());
  for (std::size_t i = 0; i < a0.size(); ++i) out[i] = sa * a0[i] + sn * eps[i];
  return out;
}

std::vector<std::size_t> ddim_timesteps(std::size_t K, std::size_t n) {
  if (n == 0 || n > K) {
    throw ConfigError("ddim: step count " + std::to_string(n) + " must be in [1, " + std::to_string(K) + "]");
  }
  std::vector<std::size_t> ts(n);
  const double stride = static_cast<double>(K) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    ts[i] = static_cast<std::size_t>(std::llround(static_cast<double>(K) - stride * static_cast<double>(i)));
  }
  return ts;
}

std::vector<std::vector<double>> ddim_trajectory(std::vector<double> a_init, const NoisePredictor& predict,
                                                 const DiffusionSchedule& schedule,
                                                 std::span<const std::size_t> timesteps, bool clip_x0) {
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    if (timesteps[i] == 0 || timesteps[i] > schedule.K || (i > 0 && timesteps[i] >= timesteps[i - 1])) {
      throw ConfigError("ddim: timesteps must be strictly decreasing within [1, K]");
    }
  }
  std::vector<std::vector<double>> traj;
  traj.reserve(timesteps.size() + 1);
  traj.push_back(std::move(a_init));
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    const std::size_t k = timesteps[i];
    const std::size_t k_prev = i + 1 < timesteps.size() ? timesteps[i + 1] : 0;
    const auto& x = traj.back();
    const std::vector<double> eps = predict(x, k);
    if (eps.size() != x.size()) throw ShapeError("ddim: noise prediction has the wrong length");
    const double ab = schedule.alpha_bar_at(k), ab_prev = schedule.alpha_bar_at(k_prev);
    const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
    const double sa_prev = std::sqrt(ab_prev), sn_prev = std::sqrt(1.0 - ab_prev);
    std::vector<double> next(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      double x0 = (x[j] - sn * eps[j]) / sa;
      if (clip_x0) x0 = std::clamp(x0, -1.0, 1.0);
      next[j] = sa_prev * x0 + sn_prev * eps[j];
    }
    traj.push_back(std::move(next));
  }
  return traj;
}

std::vector<double> ddim_sample(std::size_t dim, const NoisePredictor& predict, const DiffusionSchedule& schedule,
                                std::span<const std::size_t> timesteps, std::uint64_t seed, bool clip_x0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> x(dim);
  for (auto& v : x) v = normal(rng);
  auto traj = ddim_trajectory(std::move(x), predict, schedule, timesteps, clip_x0);
  std::vector<double> out = std::move(traj.back());
  for (auto& v : out) {
    if (!std::isfinite(v)) throw NumericError("ddim: non-finite sample");
    v = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

std::vector<double> step_embedding(std::size_t k, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("step embedding width must be even and positive");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(static_cast<double>(k) * freq);
    out[half + i] = std::cos(static_cast<double>(k) * freq);
  }
  return out;
}

void DenoiserConfig::validate() const {
  if (action_dim == 0 || cond_dim == 0 || hidden == 0) {
    throw ConfigError("denoiser: action_dim, cond_dim and hidden must be positive");
  }
  if (embed_dim == 0 || embed_dim % 2 != 0) throw ConfigError("denoiser: embed_dim must be even");
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"action_dim", action_dim}, {"cond_dim", cond_dim}, {"hidden", hidden},
          {"blocks", blocks},         {"embed_dim", embed_dim}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  try {
    c.action_dim = j.at("action_dim").get<std::size_t>();
    c.cond_dim = j.at("cond_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.blocks = j.at("blocks").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformedHeader, std::string("denoiser config: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
Denoiser<T>::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& c = config_;
  in_ = nn::Linear<T>::create(params_, "den.in", c.action_dim + c.cond_dim + c.embed_dim, c.hidden, rng);
  for (std::size_t b = 0; b < c.blocks; ++b) {
    const std::string tag = "den.block" + std::to_string(b);
    Block blk;
    blk.ln = nn::LayerNorm<T>::create(params_, tag + ".ln", c.hidden);
    blk.fc1 = nn::Linear<T>::create(params_, tag + ".fc1", c.hidden, c.hidden, rng);
    blk.fc2 = nn::Linear<T>::create(params_, tag + ".fc2", c.hidden, c.hidden, rng);
    blocks_.push_back(blk);
  }
  out_ln_ = nn::LayerNorm<T>::create(params_, "den.out_ln", c.hidden);
  out_ = nn::Linear<T>::create(params_, "den.out", c.hidden, c.action_dim, rng);
}

template <typename T>
Tensor<T> Denoiser<T>::operator()(const Tensor<T>& a_k, const Tensor<T>& cond,
                                  std::span<const std::size_t> steps) const {
  const std::size_t B = a_k.rows();
  if (a_k.cols() != config_.action_dim || cond.cols() != config_.cond_dim || cond.rows() != B ||
      steps.size() != B) {
    throw ShapeError("denoiser: expected [B, " + std::to_string(config_.action_dim) + "] actions, [B, " +
                     std::to_string(config_.cond_dim) + "] condition and B steps; got " + a_k.shape_str() +
                     ", " + cond.shape_str() + ", " + std::to_string(steps.size()));
  }
  std::vector<T> emb;
  emb.reserve(B * config_.embed_dim);
  for (std::size_t b = 0; b < B; ++b) {
    for (double v : step_embedding(steps[b], config_.embed_dim)) emb.push_back(static_cast<T>(v));
  }
  const Tensor<T> e(B, config_.embed_dim, std::move(emb));
  Tensor<T> h = in_(nn::concat<T>({a_k, cond, e}, 1));
  for (const auto& blk : blocks_) {
    h = nn::add(h, blk.fc2(nn::relu(blk.fc1(nn::relu(blk.ln(h))))));
  }
  return out_(nn::relu(out_ln_(h)));
}

template <typename T>
Tensor<T> diffusion_loss_with(const std::function<Tensor<T>(const Tensor<T>&, std::span<const std::size_t>)>& predict,
                              const Tensor<T>& a0, std::span<const std::size_t> steps, const Tensor<T>& eps,
                              const DiffusionSchedule& schedule) {
  const std::size_t B = a0.rows(), A = a0.cols();
  if (eps.rows() != B || eps.cols() != A || steps.size() != B) {
    throw ShapeError("diffusion loss: targets " + a0.shape_str() + ", noise " + eps.shape_str() + ", " +
                     std::to_string(steps.size()) + " steps");
  }
  std::vector<T> noisy(B * A);
  const auto x0 = a0.data();
  const auto e = eps.data();
  for (std::size_t b = 0; b < B; ++b) {
    const double ab = schedule.alpha_bar_at(steps[b]);
    const T sa = static_cast<T>(std::sqrt(ab)), sn = static_cast<T>(std::sqrt(1.0 - ab));
    for (std::size_t j = 0; j < A; ++j) noisy[b * A + j] = sa * x0[b * A + j] + sn * e[b * A + j];
  }
  const Tensor<T> pred = predict(Tensor<T>(B, A, std::move(noisy)), steps);
  Tensor<T> loss = nn::scale(nn::mse(pred, eps.detach()), static_cast<T>(A));
  if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("diffusion loss is not finite");
  return loss;
}

template <typename T>
Tensor<T> diffusion_loss(const Denoiser<T>& denoiser, const Tensor<T>& a0, const Tensor<T>& cond,
                         const DiffusionSchedule& schedule, std::mt19937_64& rng) {
  const std::size_t B = a0.rows(), A = a0.cols();
  std::uniform_int_distribution<std::size_t> pick(1, schedule.K);
  std::normal_distribution<double> normal;
  std::vector<std::size_t> steps(B);
  std::vector<T> eps(B * A);
  for (std::size_t b = 0; b < B; ++b) {
    steps[b] = pick(rng);
    for (std::size_t j = 0; j < A; ++j) eps[b * A + j] = static_cast<T>(normal(rng));
  }
  return diffusion_loss_with<T>(
      [&](const Tensor<T>& a_k, std::span<const std::size_t> ks) { return denoiser(a_k, cond, ks); }, a0, steps,
      Tensor<T>(B, A, std::move(eps)), schedule);
}

void PolicyConfig::validate() const {
  if (horizon == 0 || n_obs_steps == 0 || n_action_steps == 0 || ddim_steps == 0) {
    throw ConfigError("policy: horizon, n_obs_steps, n_action_steps and ddim_steps must be positive");
  }
  if (n_action_steps > horizon) throw ConfigError("policy: n_action_steps exceeds the horizon");
}

std::vector<toy::Action> denormalize_plan(std::span<const double> flat, std::size_t horizon, const Normalizer& norm) {
  constexpr std::size_t W = toy::kArmDim + toy::kHandDim;
  if (flat.size() != horizon * W) throw ShapeError("plan: expected " + std::to_string(horizon * W) + " values");
  std::vector<toy::Action> plan(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    const auto arm = norm.denormalize(flat.subspan(h * W, toy::kArmDim), stream::kArmAction);
    const auto hand = norm.denormalize(flat.subspan(h * W + toy::kArmDim, toy::kHandDim), stream::kHandAction);
    std::copy(arm.begin(), arm.end(), plan[h].arm.begin());
    std::copy(hand.begin(), hand.end(), plan[h].hand.begin());
  }
  return plan;
}

std::vector<double> normalize_plan(std::span<const toy::Action> plan, const Normalizer& norm) {
  std::vector<double> out;
  out.reserve(plan.size() * (toy::kArmDim + toy::kHandDim));
  for (const auto& a : plan) {
    const auto arm = norm.normalize(a.arm, stream::kArmAction);
    const auto hand = norm.normalize(a.hand, stream::kHandAction);
    out.insert(out.end(), arm.begin(), arm.end());
    out.insert(out.end(), hand.begin(), hand.end());
  }
  return out;
}

DiffusionPlanner::DiffusionPlanner(std::shared_ptr<const CorrEncoder<float>> encoder,
                                   std::shared_ptr<const Denoiser<float>> denoiser, DiffusionSchedule schedule,
                                   Normalizer normalizer, PolicyConfig config)
    : encoder_(std::move(encoder)),
      denoiser_(std::move(denoiser)),
      schedule_(std::move(schedule)),
      normalizer_(std::move(normalizer)),
      config_(config) {
  config_.validate();
  timesteps_ = ddim_timesteps(schedule_.K, config_.ddim_steps);
  const std::size_t F = encoder_->config().feature_dim();
  if (denoiser_->config().cond_dim != F * config_.n_obs_steps) {
    throw ConfigError("policy: denoiser condition width does not match encoder features");
  }
  if (denoiser_->config().action_dim != config_.horizon * (toy::kArmDim + toy::kHandDim)) {
    throw ConfigError("policy: denoiser action width does not match the horizon");
  }
}

std::vector<float> DiffusionPlanner::frame_features(const Observation& obs) const {
  nn::NoGradGuard no_grad;
  const auto f = encoder_->forward(make_encoder_inputs<float>(obs, normalizer_));
  const auto c = f.condition();
  return {c.data().begin(), c.data().end()};
}

std::vector<toy::Action> DiffusionPlanner::plan(const std::vector<FrameRef>& history, const toy::EnvState&,
                                                std::uint64_t plan_seed) {
  if (history.size() != config_.n_obs_steps) throw ShapeError("policy: history length differs from n_obs_steps");
  std::vector<std::pair<std::size_t, std::vector<float>>> keep;
  std::vector<float> cond;
  for (const auto& frame : history) {
    auto it = std::find_if(keep.begin(), keep.end(), [&](const auto& e) { return e.first == frame.id; });
    if (it == keep.end()) {
      auto cached = std::find_if(cache_.begin(), cache_.end(), [&](const auto& e) { return e.first == frame.id; });
      if (cached != cache_.end()) {
        keep.push_back(std::move(*cached));
        cache_.erase(cached);
      } else {
        keep.emplace_back(frame.id, frame_features(*frame.obs));
      }
      it = keep.end() - 1;
    }
    cond.insert(cond.end(), it->second.begin(), it->second.end());
  }
  cache_ = std::move(keep);

  const std::size_t A = denoiser_->config().action_dim;
  const std::size_t C = cond.size();
  const Tensor<float> cond_t(1, C, std::move(cond));
  NoisePredictor predict = [&](std::span<const double> a_k, std::size_t k) {
    nn::NoGradGuard no_grad;
    const Tensor<float> x(1, A, std::vector<float>(a_k.begin(), a_k.end()));
    const std::size_t steps[1] = {k};
    const auto eps = (*denoiser_)(x, cond_t, steps);
    return std::vector<double>(eps.data().begin(), eps.data().end());
  };
  const auto flat = ddim_sample(A, predict, schedule_, timesteps_, plan_seed, true);
  return denormalize_plan(flat, config_.horizon, normalizer_);
}

ExpertDenoiserPlanner::ExpertDenoiserPlanner(Normalizer normalizer, PolicyConfig config, DiffusionSchedule schedule)
    : normalizer_(std::move(normalizer)), config_(config), schedule_(std::move(schedule)) {
  config_.validate();
}

std::vector<toy::Action> ExpertDenoiserPlanner::plan(const std::vector<FrameRef>&, const toy::EnvState& state,
                                                     std::uint64_t plan_seed) {
  std::vector<toy::Action> expert(config_.horizon);
  toy::EnvState s = state;
  for (auto& a : expert) {
    a = toy::expert_action(s);
    s = toy::step(s, a);
  }
  const std::vector<double> a0 = normalize_plan(expert, normalizer_);
  NoisePredictor predict = [&](std::span<const double> a_k, std::size_t k) {
    const double ab = schedule_.alpha_bar_at(k);
    std::vector<double> eps(a_k.size());
    for (std::size_t j = 0; j < eps.size(); ++j) eps[j] = (a_k[j] - std::sqrt(ab) * a0[j]) / std::sqrt(1.0 - ab);
    return eps;
  };
  const auto ts = ddim_timesteps(schedule_.K, config_.ddim_steps);
  return denormalize_plan(ddim_sample(a0.size(), predict, schedule_, ts, plan_seed), config_.horizon, normalizer_);
}

RolloutRecord rollout_policy(Planner& planner, const PolicyConfig& config, std::uint64_t env_seed,
                             std::uint64_t sampler_seed, std::size_t max_steps, const toy::ToyWorld& world) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  RolloutRecord rec;
  rec.seed = env_seed;
  toy::EnvState state = toy::reset(env_seed);
  std::deque<std::pair<std::size_t, Observation>> frames;
  frames.emplace_back(0, toy::observe(state, world));
  std::uint64_t plan_index = 0;
  while (!toy::success(state) && rec.steps < max_steps) {
    std::vector<FrameRef> history;
    const std::size_t have = frames.size();
    for (std::size_t i = 0; i < config.n_obs_steps; ++i) {
      const std::size_t pad = config.n_obs_steps - std::min(have, config.n_obs_steps);
      const std::size_t idx = i < pad ? 0 : have - config.n_obs_steps + i;
      history.push_back({frames[idx].first, &frames[idx].second});
    }
    const auto plan = planner.plan(history, state, derive_seed(sampler_seed, plan_index++));
    for (std::size_t j = 0; j < config.n_action_steps && rec.steps < max_steps && !toy::success(state); ++j) {
      state = toy::step(state, plan.at(j), world);
      ++rec.steps;
      rec.trace.push_back({state, plan[j]});
      frames.emplace_back(rec.steps, toy::observe(state, world));
      if (frames.size() > config.n_obs_steps) frames.pop_front();
    }
  }
  rec.success = toy::success(state);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

template class Denoiser<float>;
template class Denoiser<double>;
template Tensor<float> diffusion_loss(const Denoiser<float>&, const Tensor<float>&, const Tensor<float>&,
                                      const DiffusionSchedule&, std::mt19937_64&);
template Tensor<double> diffusion_loss(const Denoiser<double>&, const Tensor<double>&, const Tensor<double>&,
                                       const DiffusionSchedule&, std::mt19937_64&);
template Tensor<float> diffusion_loss_with(
    const std::function<Tensor<float>(const Tensor<float>&, std::span<const std::size_t>)>&, const Tensor<float>&,
    std::span<const std::size_t>, const Tensor<float>&, const DiffusionSchedule&);
template Tensor<double> diffusion_loss_with(
    const std::function<Tensor<double>(const Tensor<double>&, std::span<const std::size_t>)>&,
    const Tensor<double>&, std::span<const std::size_t>, const Tensor<double>&, const DiffusionSchedule&);

}  // namespace cordvip

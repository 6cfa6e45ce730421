#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cordvip/diffpolicy.hpp"
#include "gradcheck.hpp"

using namespace cordvip;
using nn::Tensor;

namespace {

DiffusionSchedule hand_schedule(std::vector<double> alpha_bar) {
  DiffusionSchedule s;
  s.K = alpha_bar.size();
  s.alpha_bar = std::move(alpha_bar);
  s.betas.assign(s.K, 0.0);
  return s;
}

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Noise predictor consistent with a known clean sample.
NoisePredictor oracle_for(const std::vector<double>& a0, const DiffusionSchedule& s) {
  return [a0, &s](std::span<const double> a_k, std::size_t k) {
    const double ab = s.alpha_bar_at(k);
    std::vector<double> eps(a_k.size());
    for (std::size_t j = 0; j < eps.size(); ++j) eps[j] = (a_k[j] - std::sqrt(ab) * a0[j]) / std::sqrt(1.0 - ab);
    return eps;
  };
}

const std::vector<EpisodePack>& demo_packs() {
  static const std::vector<EpisodePack> packs = [] {
    std::vector<EpisodePack> out;
    for (std::uint64_t s = 0; s < 30; ++s) out.push_back(toy::record_demo(derive_seed(77, s)));
    return out;
  }();
  return packs;
}

}  // namespace

TEST_CASE("schedule shape") {
  const auto s = make_schedule(100);
  CHECK(s.alpha_bar.size() == 100);
  CHECK(std::abs(s.alpha_bar.front() - 1.0) < 1e-3);
  CHECK(s.alpha_bar.back() < 0.02);
  for (std::size_t k = 1; k < 100; ++k) CHECK(s.alpha_bar[k] < s.alpha_bar[k - 1]);
  CHECK(s.alpha_bar_at(0) == 1.0);

  const auto lin = make_schedule(100, ScheduleKind::kLinear);
  CHECK(lin.alpha_bar.back() < 0.02);
  for (std::size_t k = 1; k < 100; ++k) CHECK(lin.alpha_bar[k] < lin.alpha_bar[k - 1]);

  SUBCASE("cumulative product oracle") {
    // Squared-cosine: below the beta cap the product telescopes to f(k) / f(0).
    auto f = [](double k) {
      const double c = std::cos((k / 100.0 + 0.008) / 1.008 * std::numbers::pi / 2);
      return c * c;
    };
    for (std::size_t k = 1; k < 100; ++k) CHECK(std::abs(s.alpha_bar[k - 1] - f(double(k)) / f(0.0)) < 1e-12);
    double prod = 1.0;
    for (std::size_t k = 1; k <= 100; ++k) {
      const double beta = 1e-3 + (0.2 - 1e-3) * double(k - 1) / 99.0;
      prod *= 1.0 - beta;
      CHECK(std::abs(lin.alpha_bar_at(k) - prod) < 1e-12);
    }
  }
  CHECK(parse_schedule_kind("squaredcos") == ScheduleKind::kSquaredCosine);
  CHECK(parse_schedule_kind("linear") == ScheduleKind::kLinear);
  CHECK_THROWS_AS(parse_schedule_kind("sigmoid"), ConfigError);
  CHECK_THROWS_AS(make_schedule(1), ConfigError);
  CHECK_THROWS_AS(s.alpha_bar_at(101), ShapeError);
}

TEST_CASE("forward noise") {
  const std::vector<double> a0 = {0.4, -1.0, 2.0};
  const std::vector<double> eps = {1.0, 0.5, -0.3};
  const auto s = hand_schedule({1.0, 0.25, 0.0});
  CHECK(forward_noise(a0, 1, eps, s) == a0);
  CHECK(forward_noise(a0, 3, eps, s) == eps);
  const auto mid = forward_noise(a0, 2, eps, s);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(mid[i] - (0.5 * a0[i] + 0.8660254037844386 * eps[i])) < 1e-12);
  CHECK_THROWS_AS(forward_noise(a0, 2, std::vector<double>{1.0}, s), ShapeError);

  SUBCASE("marginals over 1e5 draws") {
    const auto sched = make_schedule(100);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    for (std::size_t k : {10u, 30u, 60u}) {
      const std::vector<double> x0 = {0.8, -0.6};
      const double ab = sched.alpha_bar_at(k);
      std::vector<double> sum(2, 0.0), sq(2, 0.0);
      const int n = 100000;
      for (int i = 0; i < n; ++i) {
        const std::vector<double> e = {g(rng), g(rng)};
        const auto x = forward_noise(x0, k, e, sched);
        for (int j = 0; j < 2; ++j) {
          sum[j] += x[j];
          sq[j] += x[j] * x[j];
        }
      }
      for (int j = 0; j < 2; ++j) {
        const double mean = sum[j] / n, var = sq[j] / n - mean * mean;
        const double want_mean = std::sqrt(ab) * x0[j];
        CHECK(std::abs(mean - want_mean) < 0.02 * std::abs(want_mean));
        CHECK(std::abs(var - (1.0 - ab)) < 0.02 * (1.0 - ab));
      }
    }
  }
}

TEST_CASE("training loss endpoints") {
  const auto sched = make_schedule(100);
  std::mt19937_64 rng(12);
  const std::size_t B = 10000, A = 60;
  const Tensor<double> a0(B, A, gaussian(B * A, rng));
  const Tensor<double> eps(B, A, gaussian(B * A, rng));
  std::uniform_int_distribution<std::size_t> pick(1, 100);
  std::vector<std::size_t> steps(B);
  for (auto& k : steps) k = pick(rng);

  const auto zero = diffusion_loss_with<double>(
      [&](const Tensor<double>&, std::span<const std::size_t>) {
        return Tensor<double>(B, A, std::vector<double>(B * A, 0.0));
      },
      a0, steps, eps, sched);
  CHECK(std::abs(zero.item() - double(A)) < 0.05 * A);

  const auto perfect = diffusion_loss_with<double>(
      [&](const Tensor<double>&, std::span<const std::size_t>) { return eps; }, a0, steps, eps, sched);
  CHECK(perfect.item() == 0.0);

  DenoiserConfig dc;
  dc.action_dim = 4;
  dc.cond_dim = 3;
  dc.hidden = 8;
  dc.blocks = 1;
  dc.embed_dim = 4;
  Denoiser<double> den(dc, 1);
  std::vector<double> bad(8, 0.0);
  bad[3] = std::nan("");
  std::mt19937_64 r2(1);
  CHECK_THROWS_AS(diffusion_loss(den, Tensor<double>(2, 4, bad), Tensor<double>(2, 3, std::vector<double>(6, 0.0)),
                                 sched, r2),
                  NumericError);
}

TEST_CASE("denoiser gradient check (64-bit)") {
  const auto sched = make_schedule(20);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    DenoiserConfig dc;
    dc.action_dim = 3 + trial;
    dc.cond_dim = 2 + trial % 3;
    dc.hidden = 6 + trial;
    dc.blocks = 1 + trial % 2;
    dc.embed_dim = 4;
    Denoiser<double> den(dc, 20 + trial);
    const std::size_t B = 2 + trial % 2;
    const Tensor<double> a0(B, dc.action_dim, gaussian(B * dc.action_dim, rng));
    auto cond = testutil::random_leaf(B, dc.cond_dim, rng);
    const Tensor<double> eps(B, dc.action_dim, gaussian(B * dc.action_dim, rng));
    std::vector<std::size_t> steps;
    for (std::size_t b = 0; b < B; ++b) steps.push_back(1 + (7 * b + trial) % 20);
    std::vector<Tensor<double>> leaves = {cond};  // clean actions are data, not a graph input
    for (const auto& [name, t] : den.params().entries()) leaves.push_back(t);
    auto loss = [&] {
      return diffusion_loss_with<double>(
          [&](const Tensor<double>& a_k, std::span<const std::size_t> k) { return den(a_k, cond, k); }, a0, steps,
          eps, sched);
    };
    CHECK(testutil::gradcheck(loss, leaves, 1e-5) < 1e-3);
  }
}

TEST_CASE("ddim timesteps and determinism") {
  CHECK(ddim_timesteps(100, 10) == std::vector<std::size_t>{100, 90, 80, 70, 60, 50, 40, 30, 20, 10});
  CHECK(ddim_timesteps(5, 5) == std::vector<std::size_t>{5, 4, 3, 2, 1});
  CHECK_THROWS_AS(ddim_timesteps(10, 11), ConfigError);
  CHECK_THROWS_AS(ddim_timesteps(10, 0), ConfigError);

  const auto sched = make_schedule(100);
  const auto ts = ddim_timesteps(100, 10);
  NoisePredictor wobble = [](std::span<const double> a, std::size_t k) {
    std::vector<double> e(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) e[j] = std::sin(a[j] + 0.01 * double(k));
    return e;
  };
  const auto x = ddim_sample(24, wobble, sched, ts, 5);
  CHECK(x == ddim_sample(24, wobble, sched, ts, 5));
  CHECK(x != ddim_sample(24, wobble, sched, ts, 6));
  for (double v : x) CHECK((v >= -1.0 && v <= 1.0));
  const std::vector<std::size_t> rising = {10, 20};
  CHECK_THROWS_AS(ddim_trajectory({0.0}, wobble, sched, rising), ConfigError);
}

TEST_CASE("perfect denoiser recovers the clean sample") {
  const auto sched = make_schedule(100);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-0.95, 0.95);
  std::vector<double> a0(60);
  for (auto& v : a0) v = u(rng);
  const auto predict = oracle_for(a0, sched);

  auto check_subset = [&](const std::vector<std::size_t>& ts) {
    const auto traj = ddim_trajectory(gaussian(60, rng), predict, sched, ts);
    for (std::size_t j = 0; j < 60; ++j) CHECK(std::abs(traj.back()[j] - a0[j]) < 1e-6);
  };
  check_subset({100});
  check_subset(ddim_timesteps(100, 10));
  check_subset(ddim_timesteps(100, 100));
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> all(100);
    for (std::size_t k = 0; k < 100; ++k) all[k] = k + 1;
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<std::size_t> ts(all.begin(), all.begin() + 1 + trial % 20);
    std::sort(ts.rbegin(), ts.rend());
    check_subset(ts);
  }
  const auto sampled = ddim_sample(60, predict, sched, ddim_timesteps(100, 10), 3);
  for (std::size_t j = 0; j < 60; ++j) CHECK(std::abs(sampled[j] - a0[j]) < 1e-6);
}

TEST_CASE("zero denoiser follows the closed-form recurrence") {
  const auto sched = make_schedule(100);
  std::mt19937_64 rng(15);
  NoisePredictor zero = [](std::span<const double> a, std::size_t) { return std::vector<double>(a.size(), 0.0); };
  for (std::size_t n : {1u, 4u, 10u, 100u}) {
    const auto ts = ddim_timesteps(100, n);
    const auto x0 = gaussian(8, rng);
    const auto traj = ddim_trajectory(x0, zero, sched, ts);
    REQUIRE(traj.size() == n + 1);
    // Each step scales by sqrt(ab_prev / ab), so entry i is x0 * sqrt(ab(t_i) / ab(t_0)).
    for (std::size_t i = 1; i <= n; ++i) {
      const std::size_t landed = i < n ? ts[i] : 0;
      const double factor = std::sqrt(sched.alpha_bar_at(landed) / sched.alpha_bar_at(ts[0]));
      for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(traj[i][j] - x0[j] * factor) < 1e-9 * std::max(1.0, factor));
    }
    const auto clipped = ddim_sample(8, zero, sched, ts, 9);
    for (double v : clipped) CHECK((v >= -1.0 && v <= 1.0));
  }
}

TEST_CASE("step embedding and denoiser config") {
  const auto e1 = step_embedding(1, 16), e2 = step_embedding(2, 16);
  CHECK(e1.size() == 16);
  CHECK(e1 != e2);
  CHECK(step_embedding(1, 16) == e1);
  for (double v : e1) CHECK(std::abs(v) <= 1.0);

  DenoiserConfig dc;
  dc.action_dim = 60;
  dc.cond_dim = 10;
  CHECK(DenoiserConfig::from_json(dc.to_json()).to_json() == dc.to_json());
  Denoiser<float> den(dc, 3);
  const std::vector<std::size_t> steps = {4, 50};
  const auto out = den(Tensor<float>(2, 60, std::vector<float>(120, 0.1f)),
                       Tensor<float>(2, 10, std::vector<float>(20, 0.2f)), steps);
  CHECK(out.rows() == 2);
  CHECK(out.cols() == 60);
  CHECK_THROWS_AS(den(Tensor<float>(2, 59, std::vector<float>(118, 0.1f)),
                      Tensor<float>(2, 10, std::vector<float>(20, 0.2f)), steps),
                  ShapeError);
  DenoiserConfig bad = dc;
  bad.action_dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("plan normalization round trip") {
  const Normalizer norm = fit_normalizer(demo_packs());
  std::vector<toy::Action> plan(12);
  for (std::size_t i = 0; i < plan.size(); ++i) plan[i] = toy::expert_action(toy::reset(i));
  const auto flat = normalize_plan(plan, norm);
  CHECK(flat.size() == 12 * 5);
  const auto back = denormalize_plan(flat, 12, norm);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(back[i].arm[j] - plan[i].arm[j]) < 1e-9);
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(back[i].hand[j] - plan[i].hand[j]) < 1e-9);
  }
  CHECK_THROWS_AS(denormalize_plan(flat, 11, norm), ShapeError);
}

TEST_CASE("expert-as-denoiser rollouts") {
  const Normalizer norm = fit_normalizer(demo_packs());
  const PolicyConfig pc;
  ExpertDenoiserPlanner planner(norm, pc, make_schedule(100));
  int wins = 0;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto expert = toy::record_demo(derive_seed(77, i));
    const auto rec = rollout_policy(planner, pc, derive_seed(77, i), 100 + i);
    CHECK(rec.success);
    CHECK(rec.steps <= expert.header.steps + pc.n_action_steps);
    CHECK(rec.trace.size() == rec.steps);
    wins += rec.success;
  }
  CHECK(wins == 5);

  SUBCASE("reproducible from env and sampler seeds") {
    const auto a = rollout_policy(planner, pc, 9, 4, 40);
    const auto b = rollout_policy(planner, pc, 9, 4, 40);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].state == b.trace[i].state);
      CHECK(a.trace[i].action.arm == b.trace[i].action.arm);
    }
    CHECK(a.steps <= 40);
  }
}

TEST_CASE("clean-sample clipping inside the sampler") {
  const auto sched = make_schedule(100);
  const auto ts = ddim_timesteps(100, 10);
  std::mt19937_64 rng(16);
  // A biased predictor: without clipping the first estimate is scaled by 1/sqrt(ab_K).
  NoisePredictor biased = [](std::span<const double> a, std::size_t) {
    std::vector<double> e(a.begin(), a.end());
    for (auto& v : e) v = 0.9 * v + 0.05;
    return e;
  };
  const auto x0 = gaussian(12, rng);
  const auto raw = ddim_trajectory(x0, biased, sched, ts);
  const auto clipped = ddim_trajectory(x0, biased, sched, ts, true);
  double raw_peak = 0.0, clipped_peak = 0.0;
  for (std::size_t i = 1; i < raw.size(); ++i)
    for (std::size_t j = 0; j < 12; ++j) {
      raw_peak = std::max(raw_peak, std::abs(raw[i][j]));
      clipped_peak = std::max(clipped_peak, std::abs(clipped[i][j]));
    }
  CHECK(raw_peak > 10.0);
  // Each state is sqrt(ab) * x0_hat + sqrt(1 - ab) * eps with |x0_hat| <= 1.
  CHECK(clipped_peak < 1.0 + 5.0);
  for (double v : clipped.back()) CHECK(std::abs(v) <= 1.0 + 1e-12);

  // Clipping is inert for the oracle predictor when the clean sample is inside [-1, 1].
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  std::vector<double> a0(12);
  for (auto& v : a0) v = u(rng);
  const auto rec = ddim_trajectory(gaussian(12, rng), oracle_for(a0, sched), sched, ts, true);
  for (std::size_t j = 0; j < 12; ++j) CHECK(std::abs(rec.back()[j] - a0[j]) < 1e-6);
}

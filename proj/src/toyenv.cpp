#include "cordvip/toyenv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace cordvip::toy {

namespace {

constexpr std::uint64_t kModelSeed = 0x7011D15C;
constexpr std::size_t kArmLinkSamples = 64;
constexpr std::size_t kNormalNeighbors = 12;
constexpr double kHomeX = 0.0;
constexpr double kHomeY = 0.36;
constexpr double kHomeYaw = -std::numbers::pi / 2;
constexpr double kFingerAmplitude = 0.3;
constexpr double kFingerPeriod = 20.0;

// Expert geometry, in meters along the goal direction relative to the object center.
constexpr double kStageOffset = 0.13;
constexpr double kPushOffset = 0.06;
constexpr double kPushBehind = -0.06;
constexpr double kPushLateral = 0.02;
constexpr double kPushYaw = 0.15;
constexpr double kHoldRadius = 0.005;

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2 * std::numbers::pi);
  if (a < 0) a += 2 * std::numbers::pi;
  return a - std::numbers::pi;
}

double clamp_abs(double v, double limit) { return std::clamp(v, -limit, limit); }

KinematicChain make_toy_chain() {
  const double pi = std::numbers::pi;
  std::vector<Link> links = {
      {"base", Box{Vec3(0.02, 0.02, 0.02)}},
      {"slider_x", Box{Vec3(0.02, 0.02, 0.02)}},
      {"slider_y", Box{Vec3(0.02, 0.02, 0.02)}},
      {"palm", Box{Vec3(0.02, 0.1, 0.02)}},
      {"finger_left", Cylinder{0.01, 0.06}},
      {"finger_right", Cylinder{0.01, 0.06}},
  };
  const auto finger_rot = Eigen::Quaterniond(Eigen::AngleAxisd(pi / 2, Vec3::UnitY()));
  std::vector<Joint> joints(5);
  joints[0] = {JointType::kPrismatic, Vec3::UnitX(), 0, Pose(), -0.4, 0.4};
  joints[1] = {JointType::kPrismatic, Vec3::UnitY(), 1, Pose(), -0.4, 0.5};
  joints[2] = {JointType::kRevolute, Vec3::UnitZ(), 2, Pose(), -pi, pi};
  joints[3] = {JointType::kRevolute, -Vec3::UnitX(), 3, Pose(finger_rot, Vec3(0.03, 0.035, 0.0)), -0.6, 0.6};
  joints[4] = {JointType::kRevolute, -Vec3::UnitX(), 3, Pose(finger_rot, Vec3(0.03, -0.035, 0.0)), -0.6, 0.6};
  return KinematicChain(std::move(links), std::move(joints));
}

std::vector<double> joint_values(const EnvState& s) {
  return {s.q_arm[0], s.q_arm[1], s.q_arm[2], s.q_hand[0], s.q_hand[1]};
}

PointSet hand_cloud(const EnvState& s, const ToyWorld& world) {
  const JointVector q(world.hand.chain, joint_values(s));
  return fk_pointcloud(world.hand.chain, q, world.hand.link_samples, world.hand.hand_links, world.n_points);
}

}  // namespace

ToyWorld ToyWorld::build(std::size_t n_points) {
  if (n_points < 2) throw ConfigError("toy world: need at least 2 points per cloud");
  KinematicChain chain = make_toy_chain();
  std::vector<PointSet> samples;
  const std::uint64_t link_seed = derive_seed(kModelSeed, seed_offset::kLinkSampling);
  for (std::size_t i = 0; i < chain.num_links(); ++i) {
    std::size_t n = kArmLinkSamples;
    if (i == 4) n = n_points / 2;
    if (i == 5) n = n_points - n_points / 2;
    samples.push_back(sample_link_surface(chain.links()[i], n, link_seed + i));
  }
  const Link disc{"disc", Cylinder{kDiscRadius, kDiscHeight}};
  ToyWorld w{HandModel{std::move(chain), std::move(samples), {4, 5}, kArmDim},
             sample_link_surface(disc, n_points, derive_seed(kModelSeed, seed_offset::kObjectCloud)),
             n_points};
  return w;
}

const ToyWorld& ToyWorld::instance() {
  static const ToyWorld world = build();
  return world;
}

EnvState reset(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, seed_offset::kEnvReset));
  std::uniform_real_distribution<double> ux(kStartLo[0], kStartHi[0]);
  std::uniform_real_distribution<double> uy(kStartLo[1], kStartHi[1]);
  std::uniform_real_distribution<double> uyaw(-kStartYaw, kStartYaw);
  EnvState s;
  s.obj_x = ux(rng);
  s.obj_y = uy(rng);
  s.obj_yaw = uyaw(rng);
  s.q_arm = {kHomeX, kHomeY, kHomeYaw};
  s.q_hand = {0.0, 0.0};
  s.seed = seed;
  return s;
}

std::array<double, 2> resolve_push(std::array<double, 2> center, double radius, const PointSet& points) {
  constexpr int kMaxIterations = 32;
  constexpr double kTolerance = 1e-12;
  for (int it = 0; it < kMaxIterations; ++it) {
    double best = kTolerance;
    std::size_t best_i = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double dx = points[i].x() - center[0];
      const double dy = points[i].y() - center[1];
      const double depth = radius - std::sqrt(dx * dx + dy * dy);
      if (depth > best) {
        best = depth;
        best_i = i;
      }
    }
    if (best_i == points.size()) break;
    double dx = center[0] - points[best_i].x();
    double dy = center[1] - points[best_i].y();
    const double norm = std::sqrt(dx * dx + dy * dy);
    if (norm > 0.0) {
      dx /= norm;
      dy /= norm;
    } else {
      dx = 1.0;
      dy = 0.0;
    }
    center[0] += dx * best;
    center[1] += dy * best;
  }
  return center;
}

EnvState step(const EnvState& state, const Action& action, const ToyWorld& world) {
  for (double v : action.arm) {
    if (!std::isfinite(v)) throw NumericError("toy step: non-finite arm action");
  }
  for (double v : action.hand) {
    if (!std::isfinite(v)) throw NumericError("toy step: non-finite hand action");
  }
  EnvState next = state;
  next.q_arm[0] += clamp_abs(action.arm[0] - state.q_arm[0], kMaxTranslationStep);
  next.q_arm[1] += clamp_abs(action.arm[1] - state.q_arm[1], kMaxTranslationStep);
  next.q_arm[2] += clamp_abs(action.arm[2] - state.q_arm[2], kMaxAngleStep);
  for (std::size_t i = 0; i < kHandDim; ++i) {
    next.q_hand[i] += clamp_abs(action.hand[i] - state.q_hand[i], kMaxAngleStep);
  }
  const JointVector q(world.hand.chain, joint_values(next));
  for (std::size_t i = 0; i < kArmDim; ++i) next.q_arm[i] = q.values()[i];
  for (std::size_t i = 0; i < kHandDim; ++i) next.q_hand[i] = q.values()[kArmDim + i];

  auto c = resolve_push({next.obj_x, next.obj_y}, kDiscRadius, hand_cloud(next, world));
  next.obj_x = std::clamp(c[0], kWorkspaceLo[0], kWorkspaceHi[0]);
  next.obj_y = std::clamp(c[1], kWorkspaceLo[1], kWorkspaceHi[1]);
  ++next.step;
  return next;
}

Action expert_action(const EnvState& s) {
  Action a;
  const double phase = 2 * std::numbers::pi * static_cast<double>(s.step + 1) / kFingerPeriod;
  const double open = kFingerAmplitude * std::sin(phase);
  a.hand[0] = s.q_hand[0] + clamp_abs(open - s.q_hand[0], kMaxAngleStep);
  a.hand[1] = s.q_hand[1] + clamp_abs(-open - s.q_hand[1], kMaxAngleStep);
  a.arm = s.q_arm;

  const double gx = s.goal_x - s.obj_x, gy = s.goal_y - s.obj_y;
  const double dist = std::hypot(gx, gy);
  if (dist < kHoldRadius) return a;
  const double ux = gx / dist, uy = gy / dist;
  const double rx = s.q_arm[0] - s.obj_x, ry = s.q_arm[1] - s.obj_y;
  const double along = rx * ux + ry * uy;
  const double lateral = -rx * uy + ry * ux;
  const double yaw_err = wrap_angle(std::atan2(uy, ux) - s.q_arm[2]);
  const bool pushing = std::abs(lateral) < kPushLateral && along < kPushBehind && std::abs(yaw_err) < kPushYaw;
  const double offset = pushing ? kPushOffset : kStageOffset;
  double dx = s.obj_x - offset * ux - s.q_arm[0];
  double dy = s.obj_y - offset * uy - s.q_arm[1];
  const double len = std::hypot(dx, dy);
  if (len > kMaxTranslationStep) {
    dx *= kMaxTranslationStep / len;
    dy *= kMaxTranslationStep / len;
  }
  a.arm[0] = s.q_arm[0] + dx;
  a.arm[1] = s.q_arm[1] + dy;
  a.arm[2] = s.q_arm[2] + clamp_abs(yaw_err, kMaxAngleStep);
  return a;
}

bool success(const EnvState& s) { return std::hypot(s.obj_x - s.goal_x, s.obj_y - s.goal_y) < kSuccessRadius; }

Observation observe(const EnvState& s, const ToyWorld& world) {
  return build_observation(world.canonical_object, s.object_pose(), world.hand, s.q_arm, s.q_hand,
                           world.n_points);
}

std::vector<double> contact_targets(const PointSet& obj_pc, const PointSet& hand_pc, double gamma,
                                    double theta) {
  const NormalSet normals = estimate_normals(obj_pc, std::min(kNormalNeighbors, obj_pc.size()));
  const auto d = aligned_distance(obj_pc, normals, hand_pc, gamma);
  return contact_map(d, theta);
}

RenderedFrame render_observation(const EnvState& s, const ToyWorld& world, double gamma, double theta) {
  RenderedFrame f;
  f.obs = observe(s, world);
  f.contact = contact_targets(f.obs.obj_pc, f.obs.hand_pc, gamma, theta);
  return f;
}

EpisodePack record_demo(std::uint64_t seed, std::size_t max_steps, const ToyWorld& world) {
  EpisodePack pack;
  pack.header.task = kTaskName;
  pack.header.dt = kDt;
  pack.header.n_points = world.n_points;
  pack.header.arm_dim = kArmDim;
  pack.header.hand_dim = kHandDim;
  auto put_cloud = [](std::vector<float>& out, const PointSet& pts) {
    for (const auto& p : pts) {
      out.push_back(static_cast<float>(p.x()));
      out.push_back(static_cast<float>(p.y()));
      out.push_back(static_cast<float>(p.z()));
    }
  };
  EnvState s = reset(seed);
  std::size_t t = 0;
  while (!success(s) && t < max_steps) {
    const Observation obs = observe(s, world);
    const Action a = expert_action(s);
    put_cloud(pack.object_pc, obs.obj_pc);
    put_cloud(pack.hand_pc, obs.hand_pc);
    for (double v : obs.arm_state) pack.arm_state.push_back(static_cast<float>(v));
    for (double v : obs.hand_state) pack.hand_state.push_back(static_cast<float>(v));
    for (double v : a.arm) pack.arm_action.push_back(static_cast<float>(v));
    for (double v : a.hand) pack.hand_action.push_back(static_cast<float>(v));
    const auto q = s.object_pose().wxyz();
    for (double v : q) pack.object_pose.push_back(static_cast<float>(v));
    pack.object_pose.push_back(static_cast<float>(s.obj_x));
    pack.object_pose.push_back(static_cast<float>(s.obj_y));
    pack.object_pose.push_back(0.0f);
    s = step(s, a, world);
    ++t;
  }
  pack.header.steps = t;
  pack.validate();
  return pack;
}

}  // namespace cordvip::toy

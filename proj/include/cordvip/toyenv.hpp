#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cordvip/episode.hpp"
#include "cordvip/obsbuild.hpp"
#include "cordvip/pcgeom.hpp"

namespace cordvip::toy {

inline constexpr std::size_t kArmDim = 3;
inline constexpr std::size_t kHandDim = 2;
inline constexpr double kDiscRadius = 0.05;
inline constexpr double kDiscHeight = 0.02;
inline constexpr double kSuccessRadius = 0.02;
inline constexpr double kMaxTranslationStep = 0.01;
inline constexpr double kMaxAngleStep = 0.1;
inline constexpr double kDt = 0.2;
inline constexpr std::size_t kDefaultMaxSteps = 200;
inline constexpr const char* kTaskName = "planar-push";

/// Axis-aligned region the object center is confined to.
inline constexpr double kWorkspaceLo[2] = {-0.45, -0.45};
inline constexpr double kWorkspaceHi[2] = {0.45, 0.45};
/// Start rectangle for the object center (0.2 m by 0.1 m).
inline constexpr double kStartLo[2] = {-0.1, 0.12};
inline constexpr double kStartHi[2] = {0.1, 0.22};
inline constexpr double kStartYaw = 0.5235987755982988;  // pi / 6

struct EnvState {
  double obj_x = 0.0;
  double obj_y = 0.0;
  double obj_yaw = 0.0;
  std::array<double, kArmDim> q_arm{};
  std::array<double, kHandDim> q_hand{};
  double goal_x = 0.0;
  double goal_y = 0.0;
  std::size_t step = 0;
  std::uint64_t seed = 0;

  Pose object_pose() const { return Pose::planar(obj_x, obj_y, obj_yaw); }
  bool operator==(const EnvState&) const = default;
};

/// Arm: prismatic x, prismatic y, revolute yaw carrying a palm; hand: two revolute finger
/// cylinders. Also holds the canonical disc cloud.
struct ToyWorld {
  HandModel hand;
  PointSet canonical_object;
  std::size_t n_points = kDefaultCloudSize;

  /// Deterministic model: link and disc samples are drawn from fixed seeds.
  static const ToyWorld& instance();
  static ToyWorld build(std::size_t n_points = kDefaultCloudSize);
};

struct Action {
  std::array<double, kArmDim> arm{};
  std::array<double, kHandDim> hand{};
};

EnvState reset(std::uint64_t seed);

/// Moves joints toward the targets under the per-step rate limits, then resolves contact.
/// Throws NumericError on a non-finite action.
EnvState step(const EnvState& state, const Action& action, const ToyWorld& world = ToyWorld::instance());

/// Pushes a disc of `radius` centered at `center` (xy) out of every point of `points` (xy used),
/// deepest penetration first. Returns the new center.
std::array<double, 2> resolve_push(std::array<double, 2> center, double radius, const PointSet& points);

Action expert_action(const EnvState& state);

bool success(const EnvState& state);

struct RenderedFrame {
  Observation obs;
  std::vector<double> contact;  // ground truth, one per object point
};

Observation observe(const EnvState& state, const ToyWorld& world = ToyWorld::instance());
RenderedFrame render_observation(const EnvState& state, const ToyWorld& world = ToyWorld::instance(),
                                 double gamma = kDefaultAlignGamma, double theta = kDefaultContactTheta);

/// Ground-truth contact map for a pair of clouds (normals estimated on the object cloud).
std::vector<double> contact_targets(const PointSet& obj_pc, const PointSet& hand_pc,
                                    double gamma = kDefaultAlignGamma,
                                    double theta = kDefaultContactTheta);

/// Scripted demonstration: records observation and expert action each step until success or
/// `max_steps`.
EpisodePack record_demo(std::uint64_t seed, std::size_t max_steps = kDefaultMaxSteps,
                        const ToyWorld& world = ToyWorld::instance());

}  // namespace cordvip::toy

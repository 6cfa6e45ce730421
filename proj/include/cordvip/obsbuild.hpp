#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "cordvip/common.hpp"
#include "cordvip/se3kin.hpp"

namespace cordvip {

/// Kinematic chain plus per-link surface samples; the trailing joints drive the hand.
struct HandModel {
  KinematicChain chain;
  std::vector<PointSet> link_samples;
  std::vector<std::size_t> hand_links;  // links kept in the hand cloud
  std::size_t arm_joints = 0;           // joints [0, arm_joints) belong to the arm

  std::size_t hand_joints() const { return chain.num_joints() - arm_joints; }
};

struct Observation {
  PointSet obj_pc;
  PointSet hand_pc;
  std::vector<double> arm_state;
  std::vector<double> hand_state;
};

/// Object cloud posed from its centroid-centered canonical copy; hand cloud from the hand
/// links only (arm links are left out).
Observation build_observation(const PointSet& canonical_obj_pc, const Pose& obj_pose,
                              const HandModel& model, std::span<const double> q_arm,
                              std::span<const double> q_hand,
                              std::size_t n_points = kDefaultCloudSize);

struct EpisodePack;

namespace stream {
inline constexpr const char* kObjPc = "obj_pc";
inline constexpr const char* kHandPc = "hand_pc";
inline constexpr const char* kArmState = "arm_state";
inline constexpr const char* kHandState = "hand_state";
inline constexpr const char* kArmAction = "arm_action";
inline constexpr const char* kHandAction = "hand_action";
}  // namespace stream

struct StreamRange {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> degenerate;  // min == max
  std::size_t dims() const { return min.size(); }
};

/// Per-dimension min/max scaling into [-1, 1]. Point clouds share one range per axis.
class Normalizer {
 public:
  Normalizer() = default;
  explicit Normalizer(std::map<std::string, StreamRange> ranges);

  /// x holds whole rows of the stream's width; rows are normalized independently.
  std::vector<double> normalize(std::span<const double> x, const std::string& stream) const;
  std::vector<double> denormalize(std::span<const double> x, const std::string& stream) const;

  const StreamRange& range(const std::string& stream) const;
  const std::map<std::string, StreamRange>& ranges() const { return ranges_; }

  std::string to_json() const;
  static Normalizer from_json(const std::string& text);

 private:
  std::map<std::string, StreamRange> ranges_;
};

Normalizer fit_normalizer(std::span<const EpisodePack> episodes);

}  // namespace cordvip

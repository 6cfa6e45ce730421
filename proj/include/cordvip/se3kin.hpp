#pragma once

#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cordvip/common.hpp"

namespace cordvip {

/// Rigid transform: unit quaternion (w,x,y,z) followed by a translation in meters.
class Pose {
 public:
  Pose() = default;
  Pose(const Eigen::Quaterniond& rotation, const Vec3& translation);

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t);
  static Pose from_axis_angle(const Vec3& axis, double angle);
  static Pose from_wxyz(const std::array<double, 4>& quat_wxyz, const Vec3& translation);
  /// Planar pose: yaw about +z, translation (x, y, 0).
  static Pose planar(double x, double y, double yaw);

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  std::array<double, 4> wxyz() const;

  Pose inverse() const;
  Vec3 apply(const Vec3& p) const;
  Vec3 rotate(const Vec3& v) const;
  Eigen::Matrix4d matrix() const;

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Applies b first, then a.
Pose pose_compose(const Pose& a, const Pose& b);

/// Rotates then translates every point. Throws NumericError on non-finite input.
PointSet pose_apply(const Pose& p, const PointSet& pts);

struct Box {
  Vec3 size;  // full edge lengths along x, y, z
};
struct Cylinder {
  double radius = 0.0;
  double height = 0.0;  // along the link z axis, centered at the origin
};
struct Sphere {
  double radius = 0.0;
};
using Geometry = std::variant<Box, Cylinder, Sphere>;

struct Link {
  std::string name;
  Geometry geometry;
};

enum class JointType { kRevolute, kPrismatic };

struct Joint {
  JointType type = JointType::kRevolute;
  Vec3 axis = Vec3::UnitZ();
  std::size_t parent = 0;
  Pose origin;
  double lower = 0.0;
  double upper = 0.0;
};

/// Tree of links; joint j connects links[joint.parent] to links[j + 1].
class KinematicChain {
 public:
  /// Validates structure; throws ConfigError when an invariant fails.
  KinematicChain(std::vector<Link> links, std::vector<Joint> joints);

  const std::vector<Link>& links() const { return links_; }
  const std::vector<Joint>& joints() const { return joints_; }
  std::size_t num_links() const { return links_.size(); }
  std::size_t num_joints() const { return joints_.size(); }

  /// Parses the JSON chain-description document.
  static KinematicChain from_json(const std::string& text);
  static KinematicChain load(const std::string& path);
  std::string to_json() const;

 private:
  std::vector<Link> links_;
  std::vector<Joint> joints_;
};

/// Joint positions, clamped into the chain's limits on construction.
class JointVector {
 public:
  JointVector(const KinematicChain& chain, std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  bool clamped() const { return clamped_; }

 private:
  std::vector<double> values_;
  bool clamped_ = false;
};

PointSet sample_link_surface(const Link& link, std::size_t n, std::uint64_t seed);

/// One pose per link in the base frame. Link 0 is the identity.
std::vector<Pose> chain_fk(const KinematicChain& chain, const JointVector& q);

inline constexpr std::size_t kDefaultCloudSize = 1024;

/// Posed union of per-link samples over `subset` (all links when empty),
/// downsampled to `n_points` with farthest-point sampling when larger.
PointSet fk_pointcloud(const KinematicChain& chain, const JointVector& q,
                       const std::vector<PointSet>& link_samples,
                       const std::optional<std::vector<std::size_t>>& subset = std::nullopt,
                       std::size_t n_points = kDefaultCloudSize);

/// Serial chain of `n_links` alternating-axis revolute links used for throughput benchmarks.
KinematicChain make_benchmark_chain(std::size_t n_links);

}  // namespace cordvip

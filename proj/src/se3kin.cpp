#include "cordvip/se3kin.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

#include "cordvip/pcgeom.hpp"

namespace cordvip {

namespace {

Eigen::Quaterniond normalized_if_needed(const Eigen::Quaterniond& q) {
  const double sq = q.squaredNorm();
  if (!std::isfinite(sq) || sq == 0.0) {
    throw NumericError("pose: quaternion is zero or non-finite");
  }
  // Leave exact unit quaternions untouched so identity compositions are bit-exact.
  if (std::abs(sq - 1.0) <= 1e-12) return q;
  return q.normalized();
}

}  // namespace

Pose::Pose(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : rotation_(normalized_if_needed(rotation)), translation_(translation) {
  if (!translation_.allFinite()) throw NumericError("pose: non-finite translation");
}

Pose Pose::from_translation(const Vec3& t) { return Pose(Eigen::Quaterniond::Identity(), t); }

Pose Pose::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw NumericError("pose: zero rotation axis");
  return Pose(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis / n)), Vec3::Zero());
}

Pose Pose::from_wxyz(const std::array<double, 4>& q, const Vec3& translation) {
  return Pose(Eigen::Quaterniond(q[0], q[1], q[2], q[3]), translation);
}

Pose Pose::planar(double x, double y, double yaw) {
  return Pose(Eigen::Quaterniond(std::cos(yaw / 2), 0.0, 0.0, std::sin(yaw / 2)), Vec3(x, y, 0.0));
}

std::array<double, 4> Pose::wxyz() const {
  return {rotation_.w(), rotation_.x(), rotation_.y(), rotation_.z()};
}

Pose Pose::inverse() const {
  const Eigen::Quaterniond inv = rotation_.conjugate();
  return Pose(inv, -(inv * translation_));
}

Vec3 Pose::apply(const Vec3& p) const { return rotation_ * p + translation_; }

Vec3 Pose::rotate(const Vec3& v) const { return rotation_ * v; }

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = rotation_.toRotationMatrix();
  m.block<3, 1>(0, 3) = translation_;
  return m;
}

Pose pose_compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

PointSet pose_apply(const Pose& p, const PointSet& pts) {
  PointSet out;
  out.reserve(pts.size());
  for (const auto& v : pts) {
    if (!v.allFinite()) throw NumericError("pose_apply: non-finite point");
    out.push_back(p.apply(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chain structure

namespace {

void validate_geometry(const Link& link) {
  const bool ok = std::visit(
      [](const auto& g) {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, Box>) {
          return (g.size.array() > 0.0).all() && g.size.allFinite();
        } else if constexpr (std::is_same_v<G, Cylinder>) {
          return g.radius > 0.0 && g.height > 0.0 && std::isfinite(g.radius) &&
                 std::isfinite(g.height);
        } else {
          return g.radius > 0.0 && std::isfinite(g.radius);
        }
      },
      link.geometry);
  if (!ok) throw ConfigError("link '" + link.name + "': geometry dimensions must be positive");
}

}  // namespace

KinematicChain::KinematicChain(std::vector<Link> links, std::vector<Joint> joints)
    : links_(std::move(links)), joints_(std::move(joints)) {
  if (links_.empty()) throw ConfigError("chain: at least one link required");
  if (joints_.size() + 1 != links_.size()) {
    throw ConfigError("chain: expected " + std::to_string(links_.size() - 1) + " joints, got " +
                      std::to_string(joints_.size()));
  }
  for (const auto& link : links_) validate_geometry(link);
  for (std::size_t j = 0; j < joints_.size(); ++j) {
    auto& joint = joints_[j];
    // Parent must already exist: link j+1 may only hang off links 0..j.
    if (joint.parent > j) {
      throw ConfigError("chain: joint " + std::to_string(j) + " parent " +
                        std::to_string(joint.parent) + " does not precede its child");
    }
    const double n = joint.axis.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw ConfigError("chain: joint " + std::to_string(j) + " has a zero axis");
    }
    joint.axis /= n;
    if (!(joint.lower <= joint.upper)) {
      throw ConfigError("chain: joint " + std::to_string(j) + " has lower limit above upper");
    }
  }
}

namespace {

using nlohmann::json;

Vec3 vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(std::string("chain: ") + what + " must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

KinematicChain KinematicChain::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("chain: invalid JSON: ") + e.what());
  }
  try {
    std::vector<Link> links;
    for (const auto& jl : doc.at("links")) {
      Link link;
      link.name = jl.at("name").get<std::string>();
      const auto kind = jl.at("geometry").at("kind").get<std::string>();
      const auto dims = jl.at("geometry").at("dims").get<std::vector<double>>();
      if (kind == "box" && dims.size() == 3) {
        link.geometry = Box{Vec3(dims[0], dims[1], dims[2])};
      } else if (kind == "cylinder" && dims.size() == 2) {
        link.geometry = Cylinder{dims[0], dims[1]};
      } else if (kind == "sphere" && dims.size() == 1) {
        link.geometry = Sphere{dims[0]};
      } else {
        throw ConfigError("chain: unsupported geometry '" + kind + "' with " +
                          std::to_string(dims.size()) + " dims");
      }
      links.push_back(std::move(link));
    }
    std::vector<Joint> joints;
    for (const auto& jj : doc.at("joints")) {
      Joint joint;
      const auto type = jj.at("type").get<std::string>();
      if (type == "revolute") {
        joint.type = JointType::kRevolute;
      } else if (type == "prismatic") {
        joint.type = JointType::kPrismatic;
      } else {
        throw ConfigError("chain: unknown joint type '" + type + "'");
      }
      joint.axis = vec3_from(jj.at("axis"), "axis");
      joint.parent = jj.at("parent").get<std::size_t>();
      const auto q = jj.at("origin").at("quat_wxyz").get<std::vector<double>>();
      if (q.size() != 4) throw ConfigError("chain: quat_wxyz must have 4 entries");
      joint.origin = Pose::from_wxyz({q[0], q[1], q[2], q[3]}, vec3_from(jj.at("origin").at("xyz"), "xyz"));
      const auto lim = jj.at("limits").get<std::vector<double>>();
      if (lim.size() != 2) throw ConfigError("chain: limits must be [lo, hi]");
      joint.lower = lim[0];
      joint.upper = lim[1];
      joints.push_back(joint);
    }
    return KinematicChain(std::move(links), std::move(joints));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("chain: ") + e.what());
  }
}

KinematicChain KinematicChain::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open chain file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string KinematicChain::to_json() const {
  json doc;
  doc["links"] = json::array();
  for (const auto& link : links_) {
    json geo;
    std::visit(
        [&](const auto& g) {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, Box>) {
            geo = {{"kind", "box"}, {"dims", {g.size.x(), g.size.y(), g.size.z()}}};
          } else if constexpr (std::is_same_v<G, Cylinder>) {
            geo = {{"kind", "cylinder"}, {"dims", {g.radius, g.height}}};
          } else {
            geo = {{"kind", "sphere"}, {"dims", {g.radius}}};
          }
        },
        link.geometry);
    doc["links"].push_back({{"name", link.name}, {"geometry", geo}});
  }
  doc["joints"] = json::array();
  for (const auto& j : joints_) {
    const auto q = j.origin.wxyz();
    const auto& t = j.origin.translation();
    doc["joints"].push_back(
        {{"type", j.type == JointType::kRevolute ? "revolute" : "prismatic"},
         {"axis", {j.axis.x(), j.axis.y(), j.axis.z()}},
         {"parent", j.parent},
         {"origin", {{"quat_wxyz", {q[0], q[1], q[2], q[3]}}, {"xyz", {t.x(), t.y(), t.z()}}}},
         {"limits", {j.lower, j.upper}}});
  }
  return doc.dump(2);
}

JointVector::JointVector(const KinematicChain& chain, std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.size() != chain.num_joints()) {
    throw ShapeError("joint vector: expected " + std::to_string(chain.num_joints()) +
                     " values, got " + std::to_string(values_.size()));
  }
  for (std::size_t j = 0; j < values_.size(); ++j) {
    const auto& joint = chain.joints()[j];
    if (!std::isfinite(values_[j])) throw NumericError("joint vector: non-finite value");
    const double c = std::clamp(values_[j], joint.lower, joint.upper);
    if (c != values_[j]) {
      clamped_ = true;
      values_[j] = c;
    }
  }
}

// ---------------------------------------------------------------------------
// Surface sampling

PointSet sample_link_surface(const Link& link, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ShapeError("sample_link_surface: n must be >= 1");
  validate_geometry(link);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  PointSet out;
  out.reserve(n);

  std::visit(
      [&](const auto& g) {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, Sphere>) {
          std::normal_distribution<double> normal(0.0, 1.0);
          while (out.size() < n) {
            Vec3 v(normal(rng), normal(rng), normal(rng));
            const double len = v.norm();
            if (len < 1e-12) continue;
            out.push_back(v * (g.radius / len));
          }
        } else if constexpr (std::is_same_v<G, Cylinder>) {
          const double side = kTwoPi * g.radius * g.height;
          const double cap = std::numbers::pi * g.radius * g.radius;
          const double total = side + 2.0 * cap;
          for (std::size_t i = 0; i < n; ++i) {
            const double pick = uni(rng) * total;
            const double a = uni(rng) * kTwoPi;
            const double b = uni(rng);
            if (pick < side) {
              out.emplace_back(g.radius * std::cos(a), g.radius * std::sin(a), (b - 0.5) * g.height);
            } else {
              const double r = g.radius * std::sqrt(b);
              const double z = pick < side + cap ? 0.5 * g.height : -0.5 * g.height;
              out.emplace_back(r * std::cos(a), r * std::sin(a), z);
            }
          }
        } else {
          const Vec3 h = 0.5 * g.size;
          // Face pairs normal to x, y, z.
          const std::array<double, 3> area = {g.size.y() * g.size.z(), g.size.x() * g.size.z(),
                                              g.size.x() * g.size.y()};
          const double total = 2.0 * (area[0] + area[1] + area[2]);
          for (std::size_t i = 0; i < n; ++i) {
            double pick = uni(rng) * total;
            const double u = uni(rng) * 2.0 - 1.0;
            const double v = uni(rng) * 2.0 - 1.0;
            int face = 0;
            while (face < 5 && pick >= area[face / 2]) {
              pick -= area[face / 2];
              ++face;
            }
            const int axis = face / 2;
            const double sign = (face % 2 == 0) ? 1.0 : -1.0;
            Vec3 p;
            p[axis] = sign * h[axis];
            p[(axis + 1) % 3] = u * h[(axis + 1) % 3];
            p[(axis + 2) % 3] = v * h[(axis + 2) % 3];
            out.push_back(p);
          }
        }
      },
      link.geometry);
  return out;
}

// ---------------------------------------------------------------------------
// Forward kinematics

std::vector<Pose> chain_fk(const KinematicChain& chain, const JointVector& q) {
  if (q.size() != chain.num_joints()) {
    throw ShapeError("chain_fk: expected " + std::to_string(chain.num_joints()) +
                     " joint values, got " + std::to_string(q.size()));
  }
  std::vector<Pose> poses(chain.num_links());
  for (std::size_t j = 0; j < chain.num_joints(); ++j) {
    const auto& joint = chain.joints()[j];
    const double value = q.values()[j];
    const Pose motion = joint.type == JointType::kRevolute
                            ? Pose::from_axis_angle(joint.axis, value)
                            : Pose::from_translation(joint.axis * value);
    poses[j + 1] = pose_compose(pose_compose(poses[joint.parent], joint.origin), motion);
  }
  return poses;
}

PointSet fk_pointcloud(const KinematicChain& chain, const JointVector& q,
                       const std::vector<PointSet>& link_samples,
                       const std::optional<std::vector<std::size_t>>& subset, std::size_t n_points) {
  if (link_samples.size() != chain.num_links()) {
    throw ShapeError("fk_pointcloud: need one sample set per link (" +
                     std::to_string(chain.num_links()) + "), got " +
                     std::to_string(link_samples.size()));
  }
  std::vector<std::size_t> selected;
  if (subset) {
    selected = *subset;
    for (auto i : selected) {
      if (i >= chain.num_links()) throw ShapeError("fk_pointcloud: link index out of range");
    }
  } else {
    for (std::size_t i = 0; i < chain.num_links(); ++i) selected.push_back(i);
  }
  if (selected.empty()) throw ShapeError("fk_pointcloud: empty link selection");

  const auto poses = chain_fk(chain, q);
  std::size_t total = 0;
  for (auto i : selected) total += link_samples[i].size();
  PointSet all;
  all.reserve(total);
  for (auto i : selected) {
    const auto& pose = poses[i];
    for (const auto& p : link_samples[i]) all.push_back(pose.apply(p));
  }
  if (all.empty()) throw ShapeError("fk_pointcloud: selected links carry no samples");
  if (all.size() <= n_points) return all;

  const auto picks = farthest_point_sample(all, n_points, 0);
  PointSet out;
  out.reserve(n_points);
  for (auto i : picks) out.push_back(all[i]);
  return out;
}

KinematicChain make_benchmark_chain(std::size_t n_links) {
  if (n_links == 0) throw ConfigError("benchmark chain needs at least one link");
  std::vector<Link> links;
  std::vector<Joint> joints;
  for (std::size_t i = 0; i < n_links; ++i) {
    Link link;
    link.name = "link" + std::to_string(i);
    if (i % 2 == 0) {
      link.geometry = Cylinder{0.01, 0.04};
    } else {
      link.geometry = Box{Vec3(0.04, 0.02, 0.02)};
    }
    links.push_back(link);
    if (i > 0) {
      Joint j;
      j.type = JointType::kRevolute;
      j.axis = (i % 2 == 0) ? Vec3::UnitZ() : Vec3::UnitY();
      j.parent = i - 1;
      j.origin = Pose::from_translation(Vec3(0.04, 0.0, 0.0));
      j.lower = -std::numbers::pi;
      j.upper = std::numbers::pi;
      joints.push_back(j);
    }
  }
  return KinematicChain(std::move(links), std::move(joints));
}

}  // namespace cordvip

#pragma once

// Brute-force reference implementations shared by the unit suites and the acceptance driver.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "cordvip/pcgeom.hpp"
#include "cordvip/se3kin.hpp"

namespace oracle {

using cordvip::PointSet;
using cordvip::Vec3;

inline PointSet random_cloud(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PointSet pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return pts;
}

inline std::vector<std::size_t> knn(const Vec3& q, const PointSet& ref, std::size_t k) {
  std::vector<std::size_t> idx(ref.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return cordvip::squared_distance(q, ref[a]) < cordvip::squared_distance(q, ref[b]);
  });
  idx.resize(k);
  return idx;
}

inline std::vector<std::size_t> fps(const PointSet& cloud, std::size_t m, std::size_t start) {
  std::vector<std::size_t> out = {start};
  while (out.size() < m) {
    double best = -1;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (auto s : out) d = std::min(d, cordvip::squared_distance(cloud[i], cloud[s]));
      if (d > best) {
        best = d;
        arg = i;
      }
    }
    out.push_back(arg);
  }
  return out;
}

inline std::vector<double> aligned(const PointSet& obj, const cordvip::NormalSet& normals, const PointSet& hand,
                                   double gamma) {
  std::vector<double> out;
  for (std::size_t o = 0; o < obj.size(); ++o) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& h : hand) {
      const Vec3 d = h - obj[o];
      const double len = d.norm();
      const double cosang = len > 0 ? std::abs(d.dot(normals.normals[o])) / len : 1.0;
      best = std::min(best, std::exp(gamma * (1.0 - cosang)) * len);
    }
    out.push_back(best);
  }
  return out;
}

// Homogeneous-matrix forward kinematics, written independently of chain_fk.
inline std::vector<Eigen::Matrix4d> matrix_fk(const cordvip::KinematicChain& chain, const std::vector<double>& q) {
  std::vector<Eigen::Matrix4d> out(chain.num_links(), Eigen::Matrix4d::Identity());
  for (std::size_t j = 0; j < chain.num_joints(); ++j) {
    const cordvip::Joint& joint = chain.joints()[j];
    Eigen::Matrix4d motion = Eigen::Matrix4d::Identity();
    const Vec3 axis = joint.axis.normalized();
    if (joint.type == cordvip::JointType::kRevolute) {
      motion.block<3, 3>(0, 0) = Eigen::AngleAxisd(q[j], axis).toRotationMatrix();
    } else {
      motion.block<3, 1>(0, 3) = axis * q[j];
    }
    out[j + 1] = out[joint.parent] * joint.origin.matrix() * motion;
  }
  return out;
}

inline Vec3 transform(const Eigen::Matrix4d& m, const Vec3& p) {
  return m.block<3, 3>(0, 0) * p + m.block<3, 1>(0, 3);
}

}  // namespace oracle

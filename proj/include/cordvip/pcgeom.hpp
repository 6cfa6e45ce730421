#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "cordvip/common.hpp"

namespace cordvip {

/// Per-query neighbor lists of fixed width k, sorted by distance then index.
class NeighborTable {
 public:
  NeighborTable(std::size_t rows, std::size_t k) : k_(k), indices_(rows * k), sq_dist_(rows * k) {}

  std::size_t rows() const { return k_ == 0 ? 0 : indices_.size() / k_; }
  std::size_t k() const { return k_; }
  std::span<const std::size_t> row(std::size_t i) const { return {indices_.data() + i * k_, k_}; }
  std::span<const double> sq_distances(std::size_t i) const { return {sq_dist_.data() + i * k_, k_}; }
  std::span<std::size_t> row(std::size_t i) { return {indices_.data() + i * k_, k_}; }
  std::span<double> sq_distances(std::size_t i) { return {sq_dist_.data() + i * k_, k_}; }

 private:
  std::size_t k_;
  std::vector<std::size_t> indices_;
  std::vector<double> sq_dist_;
};

/// Exact k-nearest-neighbor search over a uniform grid.
class KnnIndex {
 public:
  explicit KnnIndex(const PointSet& reference);

  /// Writes the k nearest reference indices of `query` into out/out_sq (ascending, ties by index).
  void query(const Vec3& query, std::size_t k, std::span<std::size_t> out,
             std::span<double> out_sq) const;
  std::size_t size() const { return points_.size(); }

 private:
  PointSet points_;
  Vec3 origin_;
  double cell_ = 1.0;
  std::array<long, 3> dims_{1, 1, 1};
  std::vector<std::size_t> cell_start_;  // CSR offsets, size n_cells + 1
  std::vector<std::size_t> cell_items_;
};

/// Squared Euclidean distance with a fixed summation order (x, then y, then z).
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

NeighborTable knn(const PointSet& query, const PointSet& reference, std::size_t k);

struct NormalSet {
  std::vector<Vec3> normals;
  std::vector<bool> degenerate;  // true where the neighborhood had rank < 2
};

/// PCA normals over the k nearest neighbors (point itself included).
NormalSet estimate_normals(const PointSet& cloud, std::size_t k);

/// Closed axis-aligned box.
struct Aabb {
  Vec3 lo = Vec3::Constant(-std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::infinity());
};

PointSet crop_aabb(const PointSet& cloud, const Aabb& bounds);

/// Greedy max-min subset of size m starting at `start`; ties go to the lowest index.
std::vector<std::size_t> farthest_point_sample(const PointSet& cloud, std::size_t m,
                                               std::size_t start = 0);

inline constexpr double kDefaultAlignGamma = 1.0;
inline constexpr double kDefaultContactTheta = 10.0;

/// Per object point: min over hand points of exp(gamma * (1 - |cos|)) * distance, where cos is
/// between the object normal and the unit direction towards the hand point.
std::vector<double> aligned_distance(const PointSet& obj, const NormalSet& normals,
                                     const PointSet& hand, double gamma = kDefaultAlignGamma);

/// c = 1 - 2 (sigmoid(theta d) - 0.5), evaluated as 2 / (1 + exp(theta d)).
std::vector<double> contact_map(std::span<const double> distances,
                                double theta = kDefaultContactTheta);

}  // namespace cordvip

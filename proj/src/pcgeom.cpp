#include "cordvip/pcgeom.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace cordvip {

KnnIndex::KnnIndex(const PointSet& reference) : points_(reference) {
  if (points_.empty()) throw ShapeError("knn: reference set is empty");
  if (!all_finite(points_)) throw NumericError("knn: non-finite reference point");
  Vec3 lo = points_.front();
  Vec3 hi = points_.front();
  for (const auto& p : points_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  origin_ = lo;
  const Vec3 extent = hi - lo;
  const double max_extent = extent.maxCoeff();
  const double per_axis = std::ceil(std::cbrt(static_cast<double>(points_.size())));
  cell_ = max_extent > 0.0 ? max_extent / per_axis : 1.0;
  std::size_t n_cells = 1;
  for (int a = 0; a < 3; ++a) {
    dims_[a] = std::max<long>(1, static_cast<long>(std::floor(extent[a] / cell_)) + 1);
    n_cells *= static_cast<std::size_t>(dims_[a]);
  }

  auto cell_index = [&](const Vec3& p) {
    std::array<long, 3> c{};
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp<long>(static_cast<long>(std::floor((p[a] - origin_[a]) / cell_)), 0,
                              dims_[a] - 1);
    }
    return static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
  };
  std::vector<std::size_t> owner(points_.size());
  cell_start_.assign(n_cells + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    owner[i] = cell_index(points_[i]);
    ++cell_start_[owner[i] + 1];
  }
  for (std::size_t c = 0; c < n_cells; ++c) cell_start_[c + 1] += cell_start_[c];
  cell_items_.resize(points_.size());
  std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) cell_items_[fill[owner[i]]++] = i;
}

void KnnIndex::query(const Vec3& q, std::size_t k, std::span<std::size_t> out,
                     std::span<double> out_sq) const {
  if (k > points_.size()) {
    throw ShapeError("knn: k=" + std::to_string(k) + " exceeds reference size " +
                     std::to_string(points_.size()));
  }
  if (k == 0) return;
  // Sorted ascending by (squared distance, index); at most k entries.
  std::vector<std::pair<double, std::size_t>> best;
  best.reserve(k + 1);
  auto offer = [&](std::size_t idx) {
    const std::pair<double, std::size_t> cand{squared_distance(q, points_[idx]), idx};
    if (best.size() == k && !(cand < best.back())) return;
    best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
    if (best.size() > k) best.pop_back();
  };

  std::array<long, 3> qc{};
  long r_start = 0;
  long r_end = 0;
  for (int a = 0; a < 3; ++a) {
    const double f = std::floor((q[a] - origin_[a]) / cell_);
    qc[a] = static_cast<long>(std::clamp(f, -1e15, 1e15));
    r_start = std::max({r_start, -qc[a], qc[a] - (dims_[a] - 1)});
    r_end = std::max({r_end, qc[a], (dims_[a] - 1) - qc[a]});
  }
  auto visit_cell = [&](long x, long y, long z) {
    const auto c = static_cast<std::size_t>((x * dims_[1] + y) * dims_[2] + z);
    for (std::size_t j = cell_start_[c]; j < cell_start_[c + 1]; ++j) offer(cell_items_[j]);
  };
  for (long r = r_start; r <= r_end; ++r) {
    const long x0 = std::max(0L, qc[0] - r), x1 = std::min(dims_[0] - 1, qc[0] + r);
    const long y0 = std::max(0L, qc[1] - r), y1 = std::min(dims_[1] - 1, qc[1] + r);
    for (long x = x0; x <= x1; ++x) {
      for (long y = y0; y <= y1; ++y) {
        const bool on_shell = std::abs(x - qc[0]) == r || std::abs(y - qc[1]) == r;
        if (on_shell) {
          const long z0 = std::max(0L, qc[2] - r), z1 = std::min(dims_[2] - 1, qc[2] + r);
          for (long z = z0; z <= z1; ++z) visit_cell(x, y, z);
        } else {
          if (qc[2] - r >= 0 && qc[2] - r < dims_[2]) visit_cell(x, y, qc[2] - r);
          if (r > 0 && qc[2] + r >= 0 && qc[2] + r < dims_[2]) visit_cell(x, y, qc[2] + r);
        }
      }
    }
    // Unvisited points lie more than r*cell away; keep one cell of slack against rounding.
    if (best.size() == k && r >= 1) {
      const double bound = static_cast<double>(r - 1) * cell_;
      if (best.back().first < bound * bound) break;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = best[i].second;
    out_sq[i] = best[i].first;
  }
}

NeighborTable knn(const PointSet& query, const PointSet& reference, std::size_t k) {
  if (reference.empty()) throw ShapeError("knn: reference set is empty");
  if (k > reference.size()) {
    throw ShapeError("knn: k=" + std::to_string(k) + " exceeds reference size " +
                     std::to_string(reference.size()));
  }
  if (!all_finite(query)) throw NumericError("knn: non-finite query point");
  const KnnIndex index(reference);
  NeighborTable table(query.size(), k);
  for (std::size_t i = 0; i < query.size(); ++i) {
    index.query(query[i], k, table.row(i), table.sq_distances(i));
  }
  return table;
}

NormalSet estimate_normals(const PointSet& cloud, std::size_t k) {
  if (k < 3) throw ShapeError("estimate_normals: k must be >= 3");
  if (cloud.size() < k) {
    throw ShapeError("estimate_normals: cloud has " + std::to_string(cloud.size()) +
                     " points, fewer than k=" + std::to_string(k));
  }
  const auto table = knn(cloud, cloud, k);
  NormalSet out;
  out.normals.resize(cloud.size());
  out.degenerate.assign(cloud.size(), false);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Vec3 mean = Vec3::Zero();
    for (auto j : table.row(i)) mean += cloud[j];
    mean /= static_cast<double>(k);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (auto j : table.row(i)) {
      const Vec3 d = cloud[j] - mean;
      cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(k);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    const Vec3 ev = solver.eigenvalues();  // ascending
    if (!(ev[2] > 0.0) || ev[1] <= 1e-10 * ev[2]) {
      out.normals[i] = Vec3::UnitZ();
      out.degenerate[i] = true;
      continue;
    }
    Vec3 n = solver.eigenvectors().col(0).normalized();
    int dominant = 0;
    for (int a = 1; a < 3; ++a) {
      if (std::abs(n[a]) > std::abs(n[dominant])) dominant = a;
    }
    if (n[dominant] < 0.0) n = -n;
    out.normals[i] = n;
  }
  return out;
}

PointSet crop_aabb(const PointSet& cloud, const Aabb& bounds) {
  for (int a = 0; a < 3; ++a) {
    if (!(bounds.lo[a] <= bounds.hi[a])) throw ConfigError("crop_aabb: lower bound above upper");
  }
  PointSet out;
  for (const auto& p : cloud) {
    if ((p.array() >= bounds.lo.array()).all() && (p.array() <= bounds.hi.array()).all()) {
      out.push_back(p);
    }
  }
  return out;
}

std::vector<std::size_t> farthest_point_sample(const PointSet& cloud, std::size_t m,
                                               std::size_t start) {
  const std::size_t n = cloud.size();
  if (m < 1) throw ShapeError("farthest_point_sample: m must be >= 1");
  if (m > n) {
    throw ShapeError("farthest_point_sample: m=" + std::to_string(m) + " exceeds cloud size " +
                     std::to_string(n));
  }
  if (start >= n) throw ShapeError("farthest_point_sample: start index out of range");
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> picks;
  picks.reserve(m);
  std::size_t last = start;
  picks.push_back(last);
  min_sq[last] = -1.0;  // selected points never win again
  while (picks.size() < m) {
    const Vec3& s = cloud[last];
    std::size_t arg = n;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_sq[i] < 0.0) continue;
      const double d = squared_distance(cloud[i], s);
      if (d < min_sq[i]) min_sq[i] = d;
      if (min_sq[i] > best) {
        best = min_sq[i];
        arg = i;
      }
    }
    last = arg;
    picks.push_back(last);
    min_sq[last] = -1.0;
  }
  return picks;
}

std::vector<double> aligned_distance(const PointSet& obj, const NormalSet& normals,
                                     const PointSet& hand, double gamma) {
  if (hand.empty()) throw ShapeError("aligned_distance: hand set is empty");
  if (normals.normals.size() != obj.size()) {
    throw ShapeError("aligned_distance: " + std::to_string(normals.normals.size()) +
                     " normals for " + std::to_string(obj.size()) + " object points");
  }
  if (!all_finite(obj) || !all_finite(hand)) throw NumericError("aligned_distance: non-finite input");
  // exp(gamma * x) >= 1 for gamma >= 0, so plain distance lower-bounds each candidate.
  const bool can_prune = gamma >= 0.0;
  std::vector<double> out(obj.size());
  for (std::size_t i = 0; i < obj.size(); ++i) {
    const Vec3& vo = obj[i];
    const Vec3& n = normals.normals[i];
    double best = std::numeric_limits<double>::infinity();
    for (const auto& vh : hand) {
      const double sq = squared_distance(vh, vo);
      if (sq == 0.0) {
        best = 0.0;
        break;
      }
      const double dist = std::sqrt(sq);
      if (can_prune && dist >= best) continue;
      const Vec3 dir = (vh - vo) / dist;
      const double c = std::abs(dir.dot(n));
      const double value = std::exp(gamma * (1.0 - c)) * dist;
      if (value < best) best = value;
    }
    out[i] = best;
  }
  return out;
}

std::vector<double> contact_map(std::span<const double> distances, double theta) {
  if (!(theta > 0.0)) throw ConfigError("contact_map: theta must be positive");
  std::vector<double> out(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double d = distances[i];
    if (std::isnan(d)) throw NumericError("contact_map: NaN distance");
    if (d < 0.0) throw NumericError("contact_map: negative distance");
    // 1 - 2 (1/(1+e^{-x}) - 1/2) == 2/(1+e^{x}); this form avoids cancellation for large x.
    out[i] = 2.0 / (1.0 + std::exp(theta * d));
  }
  return out;
}

}  // namespace cordvip

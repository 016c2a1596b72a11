#include "tfpc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tfpc {

PositionEncoder::PositionEncoder(int pose_dim, double pose_alpha, double pose_beta)
    : dim_(pose_dim), alpha_(pose_alpha) {
  if (pose_dim <= 0 || pose_dim % 6 != 0) {
    fail(ErrorCode::ConfigError,
         "pose_dim " + std::to_string(pose_dim) + " is not a positive multiple of 6");
  }
  const int freqs = pose_dim / 6;
  omega_.resize(static_cast<std::size_t>(freqs));
  for (int i = 0; i < freqs; ++i) {
    omega_[static_cast<std::size_t>(i)] = std::pow(pose_beta, -6.0 * i / pose_dim);
  }
}

void PositionEncoder::encode(const Vec3& p, std::span<double> out) const {
  const std::size_t freqs = omega_.size();
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const double c = alpha_ * p[axis];
    double* sines = out.data() + axis * 2 * freqs;
    double* cosines = sines + freqs;
    for (std::size_t i = 0; i < freqs; ++i) {
      const double arg = c * omega_[i];
      sines[i] = std::sin(arg);
      cosines[i] = std::cos(arg);
    }
  }
}

Matrix pos_encode(std::span<const Vec3> points, int pose_dim, double pose_alpha,
                  double pose_beta) {
  const PositionEncoder encoder(pose_dim, pose_alpha, pose_beta);
  Matrix out(points.size(), static_cast<std::size_t>(pose_dim));
  for (std::size_t r = 0; r < points.size(); ++r) encoder.encode(points[r], out.row(r));
  return out;
}

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points,
                                               std::size_t m, std::uint64_t seed) {
  const std::size_t n = points.size();
  if (m == 0) fail(ErrorCode::InvalidInput, "FPS target count must be positive");
  if (m > n) {
    fail(ErrorCode::InvalidInput, "FPS target " + std::to_string(m) +
                                      " exceeds point count " + std::to_string(n));
  }
  std::vector<std::size_t> selected;
  selected.reserve(m);
  std::vector<char> taken(n, 0);
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());

  std::size_t current = static_cast<std::size_t>(seed % n);
  for (;;) {
    selected.push_back(current);
    taken[current] = 1;
    if (selected.size() == m) break;
    std::size_t best = n;
    double best_sq = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_sq[i] = std::min(min_sq[i], squared_distance(points[i], points[current]));
      if (min_sq[i] > best_sq) {
        best_sq = min_sq[i];
        best = i;
      }
    }
    current = best;
  }
  return selected;
}

NeighborIndex knn(std::span<const Vec3> queries, std::span<const Vec3> references,
                  std::size_t k) {
  const std::size_t n = references.size();
  if (k > n) {
    fail(ErrorCode::InvalidInput, "k=" + std::to_string(k) + " exceeds reference count " +
                                      std::to_string(n));
  }
  NeighborIndex out;
  out.queries = queries.size();
  out.k = k;
  out.indices.resize(queries.size() * k);
  out.distances.resize(queries.size() * k);
  if (k == 0) return out;

  std::vector<std::pair<double, std::size_t>> scratch(n);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t r = 0; r < n; ++r) {
      scratch[r] = {squared_distance(queries[q], references[r]), r};
    }
    // Pair ordering compares distance then index, which is the tie rule.
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k),
                      scratch.end());
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[q * k + j] = scratch[j].second;
      out.distances[q * k + j] = std::sqrt(scratch[j].first);
    }
  }
  return out;
}

}  // namespace tfpc

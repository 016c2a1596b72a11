#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tfpc/core.hpp"

namespace tfpc {

/// Trigonometric position encoding. Output row layout per point: x block,
/// y block, z block; each block holds pose_dim/6 sine channels followed by
/// pose_dim/6 cosine channels, frequency index ascending.
Matrix pos_encode(std::span<const Vec3> points, int pose_dim, double pose_alpha,
                  double pose_beta);

/// Position encoder with its frequency table precomputed.
class PositionEncoder {
 public:
  PositionEncoder(int pose_dim, double pose_alpha, double pose_beta);

  int dim() const { return dim_; }
  // Writes dim() channels into out.
  void encode(const Vec3& p, std::span<double> out) const;

 private:
  int dim_;
  double alpha_;
  std::vector<double> omega_;
};

/// Greedy max-min sampling. Starts at seed mod N; ties broken by lowest index.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points,
                                               std::size_t m, std::uint64_t seed);

struct NeighborIndex {
  std::size_t queries = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // queries x k
  std::vector<double> distances;     // queries x k, Euclidean

  std::span<const std::size_t> index_row(std::size_t q) const {
    return {indices.data() + q * k, k};
  }
  std::span<const double> distance_row(std::size_t q) const {
    return {distances.data() + q * k, k};
  }
};

/// Exact brute-force k nearest neighbors. Rows sorted by distance, ties by
/// ascending reference index. Self-matches are kept.
NeighborIndex knn(std::span<const Vec3> queries, std::span<const Vec3> references,
                  std::size_t k);

}  // namespace tfpc

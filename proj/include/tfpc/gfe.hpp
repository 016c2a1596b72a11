#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "tfpc/core.hpp"

namespace tfpc {

inline constexpr std::size_t kGfeWidth = 17;

struct SphericalAngles {
  double theta_x = 0, phi_x = 0;
  double theta_y = 0, phi_y = 0;
  double theta_z = 0, phi_z = 0;
};

/// Zenith/azimuth pair for each of the three axes taken as the zenith.
/// theta in [0, pi], phi in (-pi, pi]; the origin maps to all zeros.
SphericalAngles spherical_triplet(const Vec3& p);

struct EdgeFeature {
  std::size_t j1 = 0, j2 = 0;  // nearest and second-nearest other point
  Vec3 e1{}, e2{};
  double l1 = 0, l2 = 0;
  Vec3 nv{};  // e1 x e2, unnormalized
};

/// Two-nearest-neighbor edges for every point. The point itself is excluded,
/// duplicates at zero distance are not. Requires at least 3 points.
std::vector<EdgeFeature> edge_features(std::span<const Vec3> points);

struct GfeRecord {
  SphericalAngles angles;
  EdgeFeature edges;

  // theta_x, phi_x, theta_y, phi_y, theta_z, phi_z, nv, e1, e2, l1, l2
  std::array<double, kGfeWidth> flatten() const;
};

std::vector<GfeRecord> gfe_records(std::span<const Vec3> points);

/// N x 17 matrix of flattened records.
Matrix gfe(std::span<const Vec3> points);

}  // namespace tfpc

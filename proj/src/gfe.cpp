#include "tfpc/gfe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace tfpc {

namespace {

// atan2 folded into (-pi, pi], with atan2(0, 0) = 0.
double azimuth(double y, double x) {
  if (y == 0.0 && x == 0.0) return 0.0;
  const double a = std::atan2(y, x);
  return a <= -std::numbers::pi ? std::numbers::pi : a;
}

double zenith(double component, double r) {
  return std::acos(std::clamp(component / r, -1.0, 1.0));
}

}  // namespace

SphericalAngles spherical_triplet(const Vec3& p) {
  const double r = norm(p);
  if (r == 0.0) return {};
  SphericalAngles a;
  a.theta_x = zenith(p[0], r);
  a.phi_x = azimuth(p[2], p[1]);
  a.theta_y = zenith(p[1], r);
  a.phi_y = azimuth(p[0], p[2]);
  a.theta_z = zenith(p[2], r);
  a.phi_z = azimuth(p[1], p[0]);
  return a;
}

std::vector<EdgeFeature> edge_features(std::span<const Vec3> points) {
  const std::size_t n = points.size();
  if (n < 3) {
    fail(ErrorCode::InvalidInput,
         "edge features need at least 3 points, got " + std::to_string(n));
  }
  std::vector<EdgeFeature> out(n);
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j1 = n, j2 = n;
    double d1 = inf, d2 = inf;
    // Ascending scan with strict comparisons keeps the lower index on ties.
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = squared_distance(points[i], points[j]);
      if (d < d1) {
        j2 = j1;
        d2 = d1;
        j1 = j;
        d1 = d;
      } else if (d < d2) {
        j2 = j;
        d2 = d;
      }
    }
    EdgeFeature& f = out[i];
    f.j1 = j1;
    f.j2 = j2;
    f.e1 = points[j1] - points[i];
    f.e2 = points[j2] - points[i];
    f.l1 = norm(f.e1);
    f.l2 = norm(f.e2);
    f.nv = cross(f.e1, f.e2);
  }
  return out;
}

std::array<double, kGfeWidth> GfeRecord::flatten() const {
  const auto& a = angles;
  const auto& e = edges;
  return {a.theta_x, a.phi_x, a.theta_y, a.phi_y, a.theta_z, a.phi_z,
          e.nv[0],   e.nv[1], e.nv[2],   e.e1[0], e.e1[1],   e.e1[2],
          e.e2[0],   e.e2[1], e.e2[2],   e.l1,    e.l2};
}

std::vector<GfeRecord> gfe_records(std::span<const Vec3> points) {
  const auto edges = edge_features(points);
  std::vector<GfeRecord> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i].angles = spherical_triplet(points[i]);
    out[i].edges = edges[i];
  }
  return out;
}

Matrix gfe(std::span<const Vec3> points) {
  const auto records = gfe_records(points);
  Matrix out(points.size(), kGfeWidth);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto flat = records[i].flatten();
    std::copy(flat.begin(), flat.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace tfpc

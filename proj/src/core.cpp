#include "tfpc/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tfpc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::DegenerateFeature: return "DegenerateFeature";
    case ErrorCode::MemoryMismatch: return "MemoryMismatch";
    case ErrorCode::ZeroShotUnavailable: return "ZeroShotUnavailable";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message,
                     std::optional<std::size_t> line) {
  std::string out(to_string(code));
  out += ": ";
  if (line) out += "line " + std::to_string(*line) + ": ";
  out += message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::optional<std::size_t> line)
    : std::runtime_error(decorate(code, message, line)), code_(code), line_(line) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

void PointCloud::validate() const {
  if (points.empty()) fail(ErrorCode::InvalidInput, "point cloud is empty");
  for (const auto& p : points) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      fail(ErrorCode::InvalidInput, "point cloud has a non-finite coordinate");
    }
  }
  if (normals && normals->size() != points.size()) {
    fail(ErrorCode::InvalidInput, "normal count differs from point count");
  }
}

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
  cloud.validate();
  const double n = static_cast<double>(cloud.size());
  Vec3 centroid{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points) centroid = centroid + p;
  centroid = (1.0 / n) * centroid;

  PointCloud out = cloud;
  double max_norm = 0.0;
  for (auto& p : out.points) {
    p = p - centroid;
    max_norm = std::max(max_norm, norm(p));
  }
  if (max_norm == 0.0) {
    for (auto& p : out.points) p = {0.0, 0.0, 0.0};
    return out;
  }
  for (auto& p : out.points) {
    p = {p[0] / max_norm, p[1] / max_norm, p[2] / max_norm};
  }
  return out;
}

FeatureVector::FeatureVector(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!std::isfinite(v)) fail(ErrorCode::InvalidInput, "feature has a non-finite entry");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Normalized l2_normalize(const FeatureVector& v) {
  const double sq = dot(v.values(), v.values());
  if (sq == 0.0) return {v, true};
  // A freshly normalized vector has |sq - 1| on the order of dim * eps.
  const double unit_slack =
      8.0 * static_cast<double>(v.dim() + 1) * std::numeric_limits<double>::epsilon();
  if (std::abs(sq - 1.0) <= unit_slack) return {v, false};
  const double n = std::sqrt(sq);
  std::vector<double> out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] = v[i] / n;
  return {FeatureVector(std::move(out)), false};
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) fail(ErrorCode::InvalidInput, "row width mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

ClassCatalog::ClassCatalog(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], i).second) {
      fail(ErrorCode::InvalidInput, "duplicate class name '" + names_[i] + "'");
    }
  }
}

std::optional<std::size_t> ClassCatalog::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

}  // namespace tfpc

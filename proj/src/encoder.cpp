#include "tfpc/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tfpc/geometry.hpp"
#include "tfpc/gfe.hpp"

namespace tfpc {

namespace {

std::vector<Vec3> gather(std::span<const Vec3> coords, std::span<const std::size_t> idx) {
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(coords[i]);
  return out;
}

int round_up_to_six(std::size_t width) {
  return static_cast<int>((width + 5) / 6 * 6);
}

}  // namespace

StageState lga(const StageState& state, std::size_t point_count, std::size_t neighbor_k,
               double pose_alpha, double pose_beta) {
  const std::size_t m = state.coords.size();
  if (state.feats.rows() != m) {
    fail(ErrorCode::InvalidInput, "stage coordinates and features disagree in count");
  }
  if (neighbor_k == 0 || neighbor_k > m) {
    fail(ErrorCode::ConfigError, "neighbor_k=" + std::to_string(neighbor_k) +
                                     " is invalid for " + std::to_string(m) + " points");
  }
  if (point_count == 0 || point_count > m) {
    fail(ErrorCode::ConfigError, "stage point count " + std::to_string(point_count) +
                                     " is invalid for " + std::to_string(m) + " points");
  }

  // Later stages always start FPS at the first (already farthest-sampled) point.
  const auto centers = farthest_point_sample(state.coords, point_count, 0);
  StageState next;
  next.coords = gather(state.coords, centers);
  const auto groups = knn(next.coords, state.coords, neighbor_k);

  const std::size_t d = state.feats.cols();
  const std::size_t width = 2 * d;
  const int pe_dim = round_up_to_six(width);
  next.feats = Matrix(point_count, width);

  std::vector<Vec3> rel(neighbor_k);
  const PositionEncoder encoder(pe_dim, pose_alpha, pose_beta);
  std::vector<double> weight(static_cast<std::size_t>(pe_dim));
  std::vector<double> grouped(width);
  std::vector<double> max_acc(width);
  std::vector<double> sum_acc(width);

  for (std::size_t c = 0; c < point_count; ++c) {
    const auto nbrs = groups.index_row(c);
    const Vec3& center = next.coords[c];
    const auto center_feat = state.feats.row(centers[c]);

    Vec3 mean{0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < neighbor_k; ++j) {
      rel[j] = state.coords[nbrs[j]] - center;
      mean = mean + rel[j];
    }
    mean = (1.0 / static_cast<double>(neighbor_k)) * mean;
    Vec3 stddev{0.0, 0.0, 0.0};
    for (std::size_t j = 0; j < neighbor_k; ++j) {
      for (std::size_t a = 0; a < 3; ++a) {
        const double t = rel[j][a] - mean[a];
        stddev[a] += t * t;
      }
    }
    for (std::size_t a = 0; a < 3; ++a) {
      stddev[a] = std::max(std::sqrt(stddev[a] / static_cast<double>(neighbor_k)),
                           kLgaStdFloor);
    }

    std::fill(max_acc.begin(), max_acc.end(), -std::numeric_limits<double>::infinity());
    std::fill(sum_acc.begin(), sum_acc.end(), 0.0);
    for (std::size_t j = 0; j < neighbor_k; ++j) {
      const Vec3 z{(rel[j][0] - mean[0]) / stddev[0], (rel[j][1] - mean[1]) / stddev[1],
                   (rel[j][2] - mean[2]) / stddev[2]};
      encoder.encode(z, weight);
      const auto nbr_feat = state.feats.row(nbrs[j]);
      for (std::size_t f = 0; f < d; ++f) {
        grouped[f] = center_feat[f] * weight[f];
        grouped[d + f] = (nbr_feat[f] - center_feat[f]) * weight[d + f];
      }
      for (std::size_t f = 0; f < width; ++f) {
        max_acc[f] = std::max(max_acc[f], grouped[f]);
        sum_acc[f] += grouped[f];
      }
    }
    auto out = next.feats.row(c);
    const double inv_k = 1.0 / static_cast<double>(neighbor_k);
    for (std::size_t f = 0; f < width; ++f) out[f] = max_acc[f] + sum_acc[f] * inv_k;
  }
  return next;
}

StageState initial_stage(const PointCloud& normalized, const PipelineConfig& config) {
  const std::size_t m = config.stages.front().point_count;
  if (normalized.size() < m) {
    fail(ErrorCode::InvalidInput, "cloud has " + std::to_string(normalized.size()) +
                                      " points, first stage needs " + std::to_string(m));
  }
  const Matrix encoded =
      pos_encode(normalized.points, config.pose_dim, config.pose_alpha, config.pose_beta);
  const auto sampled = farthest_point_sample(normalized.points, m, config.seed);

  StageState state;
  state.coords = gather(normalized.points, sampled);
  const std::size_t pose = static_cast<std::size_t>(config.pose_dim);
  const std::size_t width = pose + (config.use_gfe ? kGfeWidth : 0);
  state.feats = Matrix(m, width);
  for (std::size_t r = 0; r < m; ++r) {
    const auto src = encoded.row(sampled[r]);
    std::copy(src.begin(), src.end(), state.feats.row(r).begin());
  }
  if (config.use_gfe) {
    const Matrix extra = gfe(state.coords);
    for (std::size_t r = 0; r < m; ++r) {
      const auto src = extra.row(r);
      std::copy(src.begin(), src.end(), state.feats.row(r).begin() + static_cast<std::ptrdiff_t>(pose));
    }
  }
  return state;
}

FeatureVector encode_geometric(const PointCloud& cloud, const PipelineConfig& config) {
  config.validate();
  cloud.validate();
  if (cloud.size() < config.stages.front().point_count) {
    fail(ErrorCode::InvalidInput, "cloud '" + cloud.id + "' has too few points");
  }
  StageState state = initial_stage(normalize_unit_sphere(cloud), config);
  for (const auto& stage : config.stages) {
    state = lga(state, stage.point_count, stage.neighbor_k, config.pose_alpha,
                config.pose_beta);
  }

  const std::size_t width = state.feats.cols();
  const std::size_t m = state.feats.rows();
  std::vector<double> pooled(2 * width, 0.0);
  for (std::size_t f = 0; f < width; ++f) {
    double mx = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      mx = std::max(mx, state.feats(r, f));
      sum += state.feats(r, f);
    }
    pooled[f] = mx;
    pooled[width + f] = sum / static_cast<double>(m);
  }
  auto normalized = l2_normalize(FeatureVector(std::move(pooled)));
  if (normalized.zero_norm) {
    fail(ErrorCode::DegenerateFeature, "geometric feature of '" + cloud.id + "' is zero");
  }
  return std::move(normalized.vector);
}

std::size_t geometric_dim(const PipelineConfig& config) {
  const std::size_t base =
      static_cast<std::size_t>(config.pose_dim) + (config.use_gfe ? kGfeWidth : 0);
  return 2 * base * (std::size_t{1} << config.stages.size());
}

}  // namespace tfpc

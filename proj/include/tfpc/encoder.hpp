#pragma once

#include <cstddef>
#include <vector>

#include "tfpc/config.hpp"
#include "tfpc/core.hpp"

namespace tfpc {

struct StageState {
  std::vector<Vec3> coords;
  Matrix feats;  // coords.size() x D
};

inline constexpr double kLgaStdFloor = 1e-5;

/// One local geometric aggregation stage: sample `point_count` centers by FPS,
/// group `neighbor_k` coordinate-space neighbors per center, weight the
/// [center, neighbor - center] features by a position encoding of the
/// standardized relative coordinates, and reduce with max + mean. Output
/// feature width is twice the input width.
StageState lga(const StageState& state, std::size_t point_count,
               std::size_t neighbor_k, double pose_alpha, double pose_beta);

/// Position encoding, initial FPS and GFE concatenation for an already
/// normalized cloud.
StageState initial_stage(const PointCloud& normalized, const PipelineConfig& config);

/// Full geometric branch; returns a unit-norm feature.
FeatureVector encode_geometric(const PointCloud& cloud, const PipelineConfig& config);

/// 2 * (pose_dim [+ 17]) * 2^stages.
std::size_t geometric_dim(const PipelineConfig& config);

}  // namespace tfpc

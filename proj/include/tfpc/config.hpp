#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nlohmann/json.hpp"

namespace tfpc {

enum class FusionMode { Feature, Score };

// Which branch features enter the memory. Fused is the normal pipeline; the
// other two are the single-branch ablations.
enum class Branch { Fused, Geometric, Semantic };

// How k-shot memory keys are chosen from a class's support features.
enum class KeySelection { MffCentroid, MffNearest, Random };

std::string_view to_string(FusionMode mode);
std::string_view to_string(Branch branch);
std::string_view to_string(KeySelection selection);
FusionMode fusion_mode_from_string(std::string_view s);
Branch branch_from_string(std::string_view s);
KeySelection key_selection_from_string(std::string_view s);

struct Stage {
  std::size_t point_count = 0;
  std::size_t neighbor_k = 0;
  friend bool operator==(const Stage&, const Stage&) = default;
};

/// Parses "512:32,256:32".
std::vector<Stage> parse_stages(std::string_view text);
std::string format_stages(const std::vector<Stage>& stages);

struct PipelineConfig {
  double alpha = 0.5;
  double gamma = 5.0;
  double lambda_ensemble = 0.5;
  int pose_dim = 72;
  double pose_alpha = 1000.0;
  double pose_beta = 100.0;
  std::vector<Stage> stages{{512, 32}, {256, 32}};
  // nullopt means full-shot memory.
  std::optional<std::size_t> k_shot;
  std::uint64_t seed = 0;
  FusionMode fusion_mode = FusionMode::Feature;

  // Points per cloud after resampling.
  std::size_t points = 1024;
  bool use_gfe = true;
  Branch branch = Branch::Fused;
  KeySelection selection = KeySelection::MffCentroid;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;

  // Throws ConfigError on any violated constraint.
  void validate() const;

  /// 64-bit FNV-1a over every field that changes the encoded features of a
  /// query. Memories and queries must agree on it.
  std::uint64_t digest() const;
  std::string digest_hex() const;

  /// The smaller configuration used for desk-scale runs.
  static PipelineConfig desk_scale();
};

nlohmann::ordered_json config_to_json(const PipelineConfig& config);
/// Missing keys keep their defaults; the result is validated.
PipelineConfig config_from_json(const nlohmann::json& j);

}  // namespace tfpc

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tfpc/config.hpp"
#include "tfpc/core.hpp"

namespace tfpc {

/// A query or support representation. In feature mode `values` is the unit
/// fused vector and `sem` is empty. In score mode `values` is the unit
/// geometric vector and `sem` the unit semantic vector; weighting happens at
/// similarity time.
struct FusedFeature {
  FeatureVector values;
  FeatureVector sem;
  double alpha_used = 1.0;
  FusionMode mode = FusionMode::Feature;
};

/// Chunk-mean reduction to `target_dim` contiguous, near-equal chunks (the
/// first dim % target_dim chunks are one element longer).
FeatureVector align_dims(const FeatureVector& v, std::size_t target_dim);

/// Weighted fusion of two unit vectors. Feature mode aligns the geometric
/// vector to the semantic width first.
FusedFeature fuse(const FeatureVector& f_geo, const FeatureVector& f_sem,
                  double alpha, FusionMode mode = FusionMode::Feature);

/// Wraps a single-branch feature (already unit norm) for memory use.
FusedFeature single_branch(const FeatureVector& f, FusionMode mode);

struct MffResult {
  Matrix centroids;
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::size_t k_used = 0;
  bool clamped = false;
  // Cluster index for each input row.
  std::vector<std::size_t> assignment;
  // Inertia after seeding and after every Lloyd iteration.
  std::vector<double> inertia_history;
};

inline constexpr std::size_t kMffMaxIterations = 100;
inline constexpr double kMffTolerance = 1e-6;

/// K-Means++ seeding followed by Lloyd iterations. K >= S returns the input
/// rows themselves with K clamped to S.
MffResult mff_select(const Matrix& class_features, std::size_t k, std::uint64_t seed);

/// Independent RNG stream for class `class_index`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t class_index);

struct SupportItem {
  std::string sample_id;
  std::size_t class_index = 0;
  FusedFeature feature;
};

struct FeatureMemory {
  Matrix keys;      // R x D (fused in feature mode, geometric in score mode)
  Matrix sem_keys;  // R x Ds in score mode, empty otherwise
  std::vector<std::size_t> key_class;
  ClassCatalog catalog;
  std::uint64_t config_digest = 0;
  FusionMode mode = FusionMode::Feature;

  std::size_t size() const { return key_class.size(); }
  /// R x N one-hot matrix.
  Matrix labels_onehot() const;
  std::vector<std::size_t> keys_per_class() const;
};

/// Builds full-shot (k_shot unset) or k-shot memory. Deterministic in seed.
FeatureMemory build_memory(const std::vector<SupportItem>& support,
                           const ClassCatalog& catalog,
                           std::optional<std::size_t> k_shot, std::uint64_t seed,
                           std::uint64_t config_digest,
                           KeySelection selection = KeySelection::MffCentroid);

/// Per-key cosine similarity (score mode blends the two branches by the
/// query's alpha).
std::vector<double> key_similarities(const FusedFeature& query,
                                     const FeatureMemory& memory);

/// logits_c = sum over keys of class c of exp(-gamma * (1 - s_r)).
std::vector<double> classify(const FusedFeature& query, const FeatureMemory& memory,
                             double gamma, std::uint64_t query_digest);

/// Cosine similarity of a unit semantic feature against unit class-text rows.
std::vector<double> zero_shot_logits(const FeatureVector& f_sem, const Matrix& class_text);

/// Scales to [0,1]; a constant vector maps to zeros.
std::vector<double> min_max_normalize(std::span<const double> v);

/// lambda * minmax(memory) + (1 - lambda) * minmax(zeroshot).
std::vector<double> ensemble(std::span<const double> memory_logits,
                             std::span<const double> zeroshot_logits, double lambda);

std::size_t argmax(std::span<const double> v);

/// Writes <prefix>.keys.semb and <prefix>.meta.json.
void save_memory(const FeatureMemory& memory, const PipelineConfig& config,
                 const std::filesystem::path& prefix);

struct LoadedMemory {
  FeatureMemory memory;
  PipelineConfig config;
};
LoadedMemory load_memory(const std::filesystem::path& prefix);

std::filesystem::path memory_keys_path(const std::filesystem::path& prefix);
std::filesystem::path memory_meta_path(const std::filesystem::path& prefix);

}  // namespace tfpc

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"
#include "tfpc/config.hpp"
#include "tfpc/core.hpp"
#include "tfpc/dataset_io.hpp"
#include "tfpc/fusion_memory.hpp"
#include "tfpc/semantic_io.hpp"

namespace tfpc {

/// Both branch features of one manifest entry, unit norm. `geo` is empty
/// for the semantic-only branch; `sem` is empty when no provider is used.
struct EncodedSample {
  std::string id;
  std::size_t class_index = 0;
  Split split = Split::Support;
  FeatureVector geo;
  FeatureVector sem;
};

/// Loads, resamples and encodes every entry. A semantic provider is required
/// unless config.branch is Geometric; every id missing from it is collected
/// into a single MissingEmbedding error. threads = 0 uses the hardware count.
std::vector<EncodedSample> encode_entries(const std::vector<ManifestEntry>& entries,
                                          const ClassCatalog& catalog,
                                          const PipelineConfig& config,
                                          const SemanticProvider* provider,
                                          std::size_t threads = 0);

/// The memory/query representation of a sample under config.branch and
/// config.fusion_mode. The geometric branch is aligned to the semantic width
/// in feature mode whenever a semantic feature is present, so that it matches
/// fusion at alpha = 1.
FusedFeature make_feature(const EncodedSample& sample, const PipelineConfig& config);

FeatureMemory build_memory_from(const std::vector<EncodedSample>& support,
                                const ClassCatalog& catalog,
                                const PipelineConfig& config);

struct Prediction {
  std::string id;
  std::size_t truth = 0;
  std::size_t predicted = 0;
};

struct EvalReport {
  ClassCatalog catalog;
  PipelineConfig config;
  std::string memory_digest;
  std::size_t total = 0;
  std::size_t correct = 0;
  double overall_accuracy = 0.0;  // percent
  std::vector<double> per_class_accuracy;  // percent, catalog order
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  bool ensemble = false;
  std::vector<Prediction> predictions;
  std::vector<std::pair<std::string, double>> timing;  // seconds per phase
};

/// Percentage used for every accuracy figure: 100 * correct / total.
double accuracy_percent(std::size_t correct, std::size_t total);

/// Classifies every test sample. When class_text is given, memory logits are
/// ensembled with zero-shot logits using config.lambda_ensemble.
EvalReport evaluate(const std::vector<EncodedSample>& test, const FeatureMemory& memory,
                    const PipelineConfig& config, const Matrix* class_text = nullptr);

/// Schema 1 report. Timing is included only when asked for, since it is the
/// one non-deterministic field.
nlohmann::ordered_json report_to_json(const EvalReport& report, bool include_timing);
std::string report_table(const EvalReport& report);

enum class Ablation { GeoOnly, SemOnly, NoGfe, NoMff, Full };
std::string_view to_string(Ablation a);
Ablation ablation_from_string(std::string_view s);

struct AblationRow {
  Ablation variant = Ablation::Full;
  bool sem_enc = true;
  bool geo_enc = true;
  bool gfe = true;
  bool mff = true;
  EvalReport report;
};

/// The configuration a given ablation row runs with.
PipelineConfig ablation_config(const PipelineConfig& base, Ablation variant);

/// Runs the listed variants against the manifest's support/test split,
/// rebuilding the memory for each.
std::vector<AblationRow> run_ablations(const DatasetManifest& manifest,
                                       const PipelineConfig& base,
                                       const SemanticProvider* provider,
                                       const std::vector<Ablation>& variants,
                                       bool use_ensemble);

inline const std::vector<Ablation> kAblationMatrix = {
    Ablation::GeoOnly, Ablation::SemOnly, Ablation::NoGfe, Ablation::NoMff,
    Ablation::Full};

std::string ablation_table(const std::vector<AblationRow>& rows);

struct SweepGrid {
  std::vector<double> alpha;
  std::vector<double> gamma;
  std::vector<double> lambda;
};

struct SweepRow {
  double alpha = 0, gamma = 0, lambda = 0;
  double accuracy = 0;
};

/// Rows ordered alpha-major, then gamma, then lambda. Lambda only has an
/// effect when class text is supplied.
std::vector<SweepRow> run_sweep(const std::vector<EncodedSample>& support,
                                const std::vector<EncodedSample>& test,
                                const ClassCatalog& catalog, const PipelineConfig& base,
                                const SweepGrid& grid, const Matrix* class_text);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace tfpc

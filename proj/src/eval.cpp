#include "tfpc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <sstream>
#include <thread>

#include "tfpc/encoder.hpp"

namespace tfpc {

namespace {

// Runs body(i) for i in [0, n). Results land in caller-owned slots, so the
// outcome does not depend on scheduling. The lowest-index failure rethrows.
void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::vector<EncodedSample> encode_entries(const std::vector<ManifestEntry>& entries,
                                          const ClassCatalog& catalog,
                                          const PipelineConfig& config,
                                          const SemanticProvider* provider,
                                          std::size_t threads) {
  config.validate();
  const bool need_sem = config.branch != Branch::Geometric;
  if (need_sem && provider == nullptr) {
    fail(ErrorCode::MissingEmbedding, "semantic embeddings are required for branch '" +
                                          std::string(to_string(config.branch)) + "'");
  }
  if (need_sem) {
    std::string missing;
    std::size_t count = 0;
    for (const auto& e : entries) {
      if (!provider->contains(e.id)) {
        missing += (count++ ? ", " : "") + e.id;
      }
    }
    if (count) {
      fail(ErrorCode::MissingEmbedding,
           std::to_string(count) + " sample(s) lack semantic embeddings: " + missing);
    }
  }

  std::vector<EncodedSample> out(entries.size());
  parallel_for(entries.size(), threads, [&](std::size_t i) {
    const auto& e = entries[i];
    EncodedSample& s = out[i];
    s.id = e.id;
    s.split = e.split;
    const auto cls = catalog.index_of(e.label);
    if (!cls) fail(ErrorCode::InvalidInput, "label '" + e.label + "' is not in the catalog");
    s.class_index = *cls;
    if (config.branch != Branch::Semantic) {
      PointCloud cloud = load_cloud(e.path);
      cloud.id = e.id;
      s.geo = encode_geometric(resample(cloud, config.points, config.seed), config);
    }
    if (provider != nullptr && provider->contains(e.id)) {
      auto sem = provider->semantic_feature(e.id);
      if (sem.zero_norm) {
        fail(ErrorCode::DegenerateFeature, "semantic embedding of '" + e.id + "' is zero");
      }
      s.sem = std::move(sem.vector);
    }
  });
  return out;
}

FusedFeature make_feature(const EncodedSample& sample, const PipelineConfig& config) {
  switch (config.branch) {
    case Branch::Fused:
      if (sample.sem.empty() || sample.geo.empty()) {
        fail(ErrorCode::MissingEmbedding, "sample '" + sample.id + "' lacks a branch feature");
      }
      return fuse(sample.geo, sample.sem, config.alpha, config.fusion_mode);
    case Branch::Geometric:
      if (sample.geo.empty()) {
        fail(ErrorCode::InvalidInput, "sample '" + sample.id + "' has no geometric feature");
      }
      if (config.fusion_mode == FusionMode::Feature && !sample.sem.empty()) {
        return single_branch(align_dims(sample.geo, sample.sem.dim()), FusionMode::Feature);
      }
      return single_branch(sample.geo, config.fusion_mode);
    case Branch::Semantic:
      if (sample.sem.empty()) {
        fail(ErrorCode::MissingEmbedding, "sample '" + sample.id + "' has no semantic feature");
      }
      return single_branch(sample.sem, config.fusion_mode);
  }
  fail(ErrorCode::ConfigError, "unknown branch");
}

FeatureMemory build_memory_from(const std::vector<EncodedSample>& support,
                                const ClassCatalog& catalog, const PipelineConfig& config) {
  std::vector<SupportItem> items;
  items.reserve(support.size());
  for (const auto& s : support) items.push_back({s.id, s.class_index, make_feature(s, config)});
  return build_memory(items, catalog, config.k_shot, config.seed, config.digest(),
                      config.selection);
}

double accuracy_percent(std::size_t correct, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

EvalReport evaluate(const std::vector<EncodedSample>& test, const FeatureMemory& memory,
                    const PipelineConfig& config, const Matrix* class_text) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = memory.catalog.size();
  EvalReport report;
  report.catalog = memory.catalog;
  report.config = config;
  report.memory_digest = config.digest_hex();
  report.ensemble = class_text != nullptr;
  report.confusion.assign(n, std::vector<std::size_t>(n, 0));
  report.predictions.resize(test.size());

  const std::uint64_t digest = config.digest();
  parallel_for(test.size(), 0, [&](std::size_t i) {
    const auto& sample = test[i];
    auto logits = classify(make_feature(sample, config), memory, config.gamma, digest);
    if (class_text != nullptr) {
      if (sample.sem.empty()) {
        fail(ErrorCode::ZeroShotUnavailable, "sample '" + sample.id + "' has no semantic feature");
      }
      logits = ensemble(logits, zero_shot_logits(sample.sem, *class_text), config.lambda_ensemble);
    }
    report.predictions[i] = {sample.id, sample.class_index, argmax(logits)};
  });

  for (const auto& p : report.predictions) {
    if (p.truth >= n) fail(ErrorCode::InvalidInput, "test label outside the memory catalog");
    ++report.confusion[p.truth][p.predicted];
  }
  report.total = test.size();
  report.per_class_accuracy.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t row = 0;
    for (auto v : report.confusion[c]) row += v;
    report.correct += report.confusion[c][c];
    report.per_class_accuracy[c] = accuracy_percent(report.confusion[c][c], row);
  }
  report.overall_accuracy = accuracy_percent(report.correct, report.total);
  report.timing.emplace_back("classify", seconds_since(start));
  return report;
}

nlohmann::ordered_json report_to_json(const EvalReport& report, bool include_timing) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["overall_accuracy"] = report.overall_accuracy;
  j["correct"] = report.correct;
  j["total"] = report.total;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < report.catalog.size(); ++c) {
    std::size_t row = 0;
    for (auto v : report.confusion[c]) row += v;
    per_class[report.catalog.name(c)] =
        row == 0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(report.per_class_accuracy[c]);
  }
  j["per_class_accuracy"] = per_class;
  j["classes"] = report.catalog.names();
  j["confusion"] = report.confusion;
  j["ensemble"] = report.ensemble;
  j["memory_digest"] = report.memory_digest;
  j["config"] = config_to_json(report.config);
  if (include_timing) {
    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    for (const auto& [phase, secs] : report.timing) t[phase] = secs;
    j["timing"] = t;
  }
  return j;
}

std::string report_table(const EvalReport& report) {
  std::size_t width = 5;
  for (const auto& name : report.catalog.names()) width = std::max(width, name.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %6s\n", static_cast<int>(width), "class", "acc(%)", "n");
  out << buf;
  for (std::size_t c = 0; c < report.catalog.size(); ++c) {
    std::size_t row = 0;
    for (auto v : report.confusion[c]) row += v;
    std::snprintf(buf, sizeof buf, "%-*s  %8.2f  %6zu\n", static_cast<int>(width),
                  report.catalog.name(c).c_str(), report.per_class_accuracy[c], row);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%-*s  %8.2f  %6zu\n", static_cast<int>(width), "overall",
                report.overall_accuracy, report.total);
  out << buf;
  return out.str();
}

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::GeoOnly: return "geo";
    case Ablation::SemOnly: return "sem";
    case Ablation::NoGfe: return "no-gfe";
    case Ablation::NoMff: return "no-mff";
    case Ablation::Full: return "full";
  }
  return "full";
}

Ablation ablation_from_string(std::string_view s) {
  for (auto a : kAblationMatrix) {
    if (to_string(a) == s) return a;
  }
  fail(ErrorCode::ConfigError, "unknown ablation '" + std::string(s) + "'");
}

PipelineConfig ablation_config(const PipelineConfig& base, Ablation variant) {
  PipelineConfig c = base;
  c.branch = Branch::Fused;
  switch (variant) {
    case Ablation::GeoOnly: c.branch = Branch::Geometric; break;
    case Ablation::SemOnly: c.branch = Branch::Semantic; break;
    case Ablation::NoGfe: c.use_gfe = false; break;
    case Ablation::NoMff: c.selection = KeySelection::Random; break;
    case Ablation::Full: break;
  }
  return c;
}

std::vector<AblationRow> run_ablations(const DatasetManifest& manifest,
                                       const PipelineConfig& base,
                                       const SemanticProvider* provider,
                                       const std::vector<Ablation>& variants,
                                       bool use_ensemble) {
  const ClassCatalog catalog = manifest.catalog();
  const auto support_entries = manifest.split(Split::Support);
  const auto test_entries = manifest.split(Split::Test);

  struct Encoded {
    std::vector<EncodedSample> support, test;
  };
  auto encode = [&](bool gfe) {
    PipelineConfig c = base;
    c.branch = Branch::Fused;
    c.use_gfe = gfe;
    return Encoded{encode_entries(support_entries, catalog, c, provider),
                   encode_entries(test_entries, catalog, c, provider)};
  };
  std::optional<Encoded> with_gfe, without_gfe;
  std::optional<Matrix> class_text;
  if (use_ensemble) {
    if (provider == nullptr) fail(ErrorCode::ZeroShotUnavailable, "ensemble needs embeddings");
    class_text = provider->class_text_matrix(catalog);
  }

  std::vector<AblationRow> rows;
  for (auto v : variants) {
    const PipelineConfig cfg = ablation_config(base, v);
    auto& enc = cfg.use_gfe ? with_gfe : without_gfe;
    if (!enc) enc = encode(cfg.use_gfe);
    AblationRow row;
    row.variant = v;
    row.sem_enc = v != Ablation::GeoOnly;
    row.geo_enc = v != Ablation::SemOnly;
    row.gfe = v != Ablation::NoGfe;
    row.mff = v != Ablation::NoMff;
    const FeatureMemory memory = build_memory_from(enc->support, catalog, cfg);
    const Matrix* text = row.sem_enc && class_text ? &*class_text : nullptr;
    row.report = evaluate(enc->test, memory, cfg, text);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %-6s %-6s %-4s %-4s %9s\n", "variant", "SemEnc", "GeoEnc",
                "GFE", "MFF", "Accuracy");
  out << buf;
  auto mark = [](bool b) { return b ? "x" : "-"; };
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-8s %-6s %-6s %-4s %-4s %9.2f\n",
                  std::string(to_string(r.variant)).c_str(), mark(r.sem_enc), mark(r.geo_enc),
                  mark(r.gfe), mark(r.mff), r.report.overall_accuracy);
    out << buf;
  }
  return out.str();
}

std::vector<SweepRow> run_sweep(const std::vector<EncodedSample>& support,
                                const std::vector<EncodedSample>& test,
                                const ClassCatalog& catalog, const PipelineConfig& base,
                                const SweepGrid& grid, const Matrix* class_text) {
  if (grid.alpha.empty() || grid.gamma.empty() || grid.lambda.empty()) {
    fail(ErrorCode::ConfigError, "sweep grid has an empty axis");
  }
  std::vector<SweepRow> rows;
  for (double a : grid.alpha) {
    PipelineConfig cfg = base;
    cfg.alpha = a;
    cfg.validate();
    const FeatureMemory memory = build_memory_from(support, catalog, cfg);
    for (double g : grid.gamma) {
      for (double l : grid.lambda) {
        cfg.gamma = g;
        cfg.lambda_ensemble = l;
        cfg.validate();
        const auto report = evaluate(test, memory, cfg, class_text);
        rows.push_back({a, g, l, report.overall_accuracy});
      }
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "alpha,gamma,lambda,accuracy\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", r.alpha, r.gamma, r.lambda,
                  r.accuracy);
    out += buf;
  }
  return out;
}

}  // namespace tfpc

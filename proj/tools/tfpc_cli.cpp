// tfpc: training-free point cloud recognition from the command line.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tfpc/config.hpp"
#include "tfpc/dataset_io.hpp"
#include "tfpc/eval.hpp"
#include "tfpc/fusion_memory.hpp"
#include "tfpc/semantic_io.hpp"

namespace fs = std::filesystem;
using namespace tfpc;

namespace {

struct ConfigFlags {
  std::optional<double> alpha, gamma, lambda, pose_alpha, pose_beta;
  std::optional<std::size_t> k_shot, points;
  std::optional<std::uint64_t> seed;
  std::optional<int> pose_dim;
  std::optional<std::string> stages, fusion_mode, selection;
  bool geo_only = false, sem_only = false, no_gfe = false;

  // Sweeps take alpha, gamma and lambda as grids instead.
  void attach(CLI::App& app, bool with_weights = true) {
    if (with_weights) {
      app.add_option("--alpha", alpha, "fusion weight of the geometric branch, [0,1]");
      app.add_option("--gamma", gamma, "activation sharpness of the memory classifier");
      app.add_option("--lambda", lambda, "ensemble weight of the memory logits, [0,1]");
    }
    app.add_option("--k-shot", k_shot, "keys per class (omit for full-shot)");
    app.add_option("--seed", seed, "seed for sampling and clustering");
    app.add_option("--points", points, "points per cloud after resampling");
    app.add_option("--pose-dim", pose_dim, "position encoding width (multiple of 6)");
    app.add_option("--pose-alpha", pose_alpha, "position encoding scale");
    app.add_option("--pose-beta", pose_beta, "position encoding frequency base");
    app.add_option("--stages", stages, "aggregation stages, e.g. 512:32,256:32");
    app.add_option("--fusion-mode", fusion_mode, "feature | score");
    app.add_option("--selection", selection, "k-shot key selection: mff | mff-nearest | random");
    app.add_flag("--geo-only", geo_only, "geometric branch only");
    app.add_flag("--sem-only", sem_only, "semantic branch only");
    app.add_flag("--no-gfe", no_gfe, "drop the geometric feature enhancement channels");
  }

  PipelineConfig apply(PipelineConfig c) const {
    if (alpha) c.alpha = *alpha;
    if (gamma) c.gamma = *gamma;
    if (lambda) c.lambda_ensemble = *lambda;
    if (k_shot) c.k_shot = *k_shot == 0 ? std::nullopt : std::optional<std::size_t>(*k_shot);
    if (seed) c.seed = *seed;
    if (points) c.points = *points;
    if (pose_dim) c.pose_dim = *pose_dim;
    if (pose_alpha) c.pose_alpha = *pose_alpha;
    if (pose_beta) c.pose_beta = *pose_beta;
    if (stages) c.stages = parse_stages(*stages);
    if (fusion_mode) c.fusion_mode = fusion_mode_from_string(*fusion_mode);
    if (selection) c.selection = key_selection_from_string(*selection);
    if (geo_only && sem_only) fail(ErrorCode::ConfigError, "--geo-only and --sem-only conflict");
    if (geo_only) c.branch = Branch::Geometric;
    if (sem_only) c.branch = Branch::Semantic;
    if (no_gfe) c.use_gfe = false;
    c.validate();
    return c;
  }
};

std::optional<SemanticProvider> load_provider(const std::optional<std::string>& embeddings,
                                              const std::optional<std::string>& class_text) {
  if (!embeddings) {
    if (class_text) fail(ErrorCode::ConfigError, "--class-text requires --embeddings");
    return std::nullopt;
  }
  std::optional<fs::path> text;
  if (class_text) text = *class_text;
  return SemanticProvider::load(*embeddings, text);
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorCode::ConfigError, std::string("bad value '") + item + "' in " + flag);
    }
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t support = 64, test = 40, points = 512;
  double noise = 0.02;
  std::uint64_t seed = 0;
  std::size_t sem_dim = 64;
  double sem_noise = 0.15;
  std::string classes = "sphere,cube,cylinder,cone,torus";
};

std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t dim, double sigma) {
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> v(dim);
  for (auto& x : v) x = g(rng);
  return v;
}

// Writes primitive clouds, a manifest, and class-informative stand-in
// semantic embeddings (class prototype plus Gaussian noise).
int run_synth(const SynthArgs& a) {
  const fs::path root(a.out);
  fs::create_directories(root / "clouds");
  std::vector<PrimitiveKind> kinds;
  {
    std::stringstream ss(a.classes);
    std::string name;
    while (std::getline(ss, name, ',')) kinds.push_back(primitive_from_string(name));
  }
  std::mt19937_64 rng(a.seed ^ 0x5eb5eb5eb5ULL);
  std::vector<std::vector<double>> proto;
  for (std::size_t c = 0; c < kinds.size(); ++c) proto.push_back(gaussian_vector(rng, a.sem_dim, 1.0));

  DatasetManifest manifest;
  std::vector<EmbeddingRecord> samples, text;
  std::uint64_t serial = 0;
  for (std::size_t c = 0; c < kinds.size(); ++c) {
    const std::string label(to_string(kinds[c]));
    const double proto_norm = l2_norm(proto[c]);
    for (Split split : {Split::Support, Split::Test}) {
      const std::size_t n = split == Split::Support ? a.support : a.test;
      for (std::size_t i = 0; i < n; ++i, ++serial) {
        const std::string id = label + "-" + std::string(to_string(split)) + "-" + std::to_string(i);
        const auto cloud = synth_primitive(kinds[c], a.points, a.noise,
                                           a.seed * 1000003ULL + serial);
        const fs::path rel = fs::path("clouds") / (id + ".xyz");
        write_xyz(cloud, root / rel);
        manifest.entries.push_back({id, rel, label, split});
        auto v = gaussian_vector(rng, a.sem_dim, a.sem_noise);
        for (std::size_t d = 0; d < v.size(); ++d) v[d] += proto[c][d] / proto_norm;
        samples.push_back(make_record(id, v));
      }
    }
    text.push_back(make_record(label, proto[c]));
  }
  write_manifest(manifest, root / "manifest.jsonl");
  write_embedding_file(samples, root / "embeddings.semb");
  write_embedding_file(text, root / "class_text.semb");
  std::cout << "wrote " << manifest.entries.size() << " clouds, manifest and embeddings to "
            << root.string() << "\n";
  return 0;
}

struct BuildArgs {
  std::string manifest, out;
  std::optional<std::string> embeddings;
  ConfigFlags flags;
};

int run_build(const BuildArgs& a) {
  const PipelineConfig config = a.flags.apply(PipelineConfig{});
  const auto provider = load_provider(a.embeddings, std::nullopt);
  const auto manifest = read_manifest(a.manifest);
  const ClassCatalog catalog = manifest.catalog();
  const auto support_entries = manifest.split(Split::Support);
  if (support_entries.empty()) fail(ErrorCode::InvalidInput, "manifest has no support entries");

  const auto t0 = std::chrono::steady_clock::now();
  const auto support =
      encode_entries(support_entries, catalog, config, provider ? &*provider : nullptr);
  const auto memory = build_memory_from(support, catalog, config);
  save_memory(memory, config, a.out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto counts = memory.keys_per_class();
  std::cout << "memory " << a.out << ": " << memory.size() << " keys, digest "
            << config.digest_hex() << "\n";
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    std::cout << "  " << catalog.name(c) << ": " << counts[c] << "\n";
  }
  std::cerr << "built in " << secs << " s\n";
  return 0;
}

struct EvalArgs {
  std::string manifest;
  std::optional<std::string> memory, embeddings, class_text, ablate, out;
  bool ensemble = false, timing = false;
  ConfigFlags flags;
};

int run_evaluate(const EvalArgs& a) {
  const auto provider = load_provider(a.embeddings, a.class_text);
  const SemanticProvider* prov = provider ? &*provider : nullptr;
  const auto manifest = read_manifest(a.manifest);
  if (a.ensemble && !a.class_text) {
    fail(ErrorCode::ZeroShotUnavailable, "--ensemble needs --class-text");
  }

  std::optional<LoadedMemory> loaded;
  PipelineConfig config;
  if (a.memory) {
    loaded = load_memory(*a.memory);
    config = a.flags.apply(loaded->config);
    if (config.digest() != loaded->memory.config_digest) {
      fail(ErrorCode::MemoryMismatch, "flags change the encoder configuration of memory " +
                                          *a.memory + " (digest " + loaded->config.digest_hex() +
                                          " vs " + config.digest_hex() + ")");
    }
  } else {
    config = a.flags.apply(PipelineConfig{});
  }

  if (a.ablate) {
    std::vector<Ablation> variants;
    if (*a.ablate == "matrix") {
      variants = kAblationMatrix;
    } else {
      variants = {ablation_from_string(*a.ablate)};
    }
    const auto rows = run_ablations(manifest, config, prov, variants, a.ensemble);
    nlohmann::ordered_json j;
    j["schema"] = 1;
    j["ablation"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json row;
      row["variant"] = std::string(to_string(r.variant));
      row["sem_enc"] = r.sem_enc;
      row["geo_enc"] = r.geo_enc;
      row["gfe"] = r.gfe;
      row["mff"] = r.mff;
      row["report"] = report_to_json(r.report, a.timing);
      j["ablation"].push_back(row);
    }
    if (a.out) write_text(*a.out, j.dump(2) + "\n");
    std::cout << ablation_table(rows);
    return 0;
  }

  if (!loaded) fail(ErrorCode::ConfigError, "--memory is required unless --ablate is given");
  const ClassCatalog& catalog = loaded->memory.catalog;
  const auto t0 = std::chrono::steady_clock::now();
  const auto test = encode_entries(manifest.split(Split::Test), catalog, config, prov);
  const double encode_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::optional<Matrix> text;
  if (a.ensemble) text = prov->class_text_matrix(catalog);
  EvalReport report = evaluate(test, loaded->memory, config, text ? &*text : nullptr);
  report.timing.insert(report.timing.begin(), {"encode", encode_secs});
  if (a.out) write_text(*a.out, report_to_json(report, a.timing).dump(2) + "\n");
  std::cout << report_table(report);
  return 0;
}

struct SweepArgs {
  std::string manifest;
  std::optional<std::string> embeddings, class_text, out;
  std::string alpha = "0.5", gamma = "5", lambda = "0.5";
  ConfigFlags flags;
};

int run_sweep_cmd(const SweepArgs& a) {
  const PipelineConfig config = a.flags.apply(PipelineConfig{});
  const auto provider = load_provider(a.embeddings, a.class_text);
  const SemanticProvider* prov = provider ? &*provider : nullptr;
  const auto manifest = read_manifest(a.manifest);
  const ClassCatalog catalog = manifest.catalog();
  const SweepGrid grid{parse_list(a.alpha, "--alpha"), parse_list(a.gamma, "--gamma"),
                       parse_list(a.lambda, "--lambda")};
  const auto support = encode_entries(manifest.split(Split::Support), catalog, config, prov);
  const auto test = encode_entries(manifest.split(Split::Test), catalog, config, prov);
  std::optional<Matrix> text;
  if (a.class_text) text = prov->class_text_matrix(catalog);
  const auto csv = sweep_csv(run_sweep(support, test, catalog, config, grid, text ? &*text : nullptr));
  if (a.out) {
    write_text(*a.out, csv);
  } else {
    std::cout << csv;
  }
  return 0;
}

int run_inspect(const std::string& path) {
  const auto file = read_embedding_file(path);
  std::cout << path << ": " << file.records.size() << " records, dim " << file.dim << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free point cloud recognition with geometric and semantic fusion"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic primitive benchmark");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--support", synth.support, "support clouds per class");
  s->add_option("--test", synth.test, "test clouds per class");
  s->add_option("--points", synth.points, "points per generated cloud");
  s->add_option("--noise", synth.noise, "Gaussian noise sigma");
  s->add_option("--seed", synth.seed, "generator seed");
  s->add_option("--sem-dim", synth.sem_dim, "width of the stand-in semantic embeddings");
  s->add_option("--sem-noise", synth.sem_noise, "per-channel noise of the stand-in embeddings");
  s->add_option("--classes", synth.classes, "comma-separated primitive kinds");

  BuildArgs build;
  auto* b = app.add_subcommand("build-memory", "encode the support split into a feature memory");
  b->add_option("--manifest", build.manifest, "JSON-lines manifest")->required();
  b->add_option("--embeddings", build.embeddings, "SEMB semantic embeddings");
  b->add_option("--out", build.out, "memory prefix (writes .keys.semb and .meta.json)")->required();
  build.flags.attach(*b);

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "classify the test split against a memory");
  e->add_option("--manifest", ev.manifest, "JSON-lines manifest")->required();
  e->add_option("--memory", ev.memory, "memory prefix from build-memory");
  e->add_option("--embeddings", ev.embeddings, "SEMB semantic embeddings");
  e->add_option("--class-text", ev.class_text, "SEMB class-text embeddings");
  e->add_flag("--ensemble", ev.ensemble, "mix in zero-shot logits from class text");
  e->add_option("--ablate", ev.ablate, "geo | sem | no-gfe | no-mff | full | matrix");
  e->add_option("--out", ev.out, "JSON report path");
  e->add_flag("--timing", ev.timing, "include wall-clock timing in the JSON report");
  ev.flags.attach(*e);

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "accuracy over a grid of alpha, gamma and lambda");
  w->add_option("--manifest", sw.manifest, "JSON-lines manifest")->required();
  w->add_option("--embeddings", sw.embeddings, "SEMB semantic embeddings");
  w->add_option("--class-text", sw.class_text, "SEMB class-text embeddings (enables ensemble)");
  w->add_option("--alpha", sw.alpha, "comma-separated alpha values");
  w->add_option("--gamma", sw.gamma, "comma-separated gamma values");
  w->add_option("--lambda", sw.lambda, "comma-separated lambda values");
  w->add_option("--out", sw.out, "CSV path (stdout when omitted)");
  sw.flags.attach(*w, false);

  std::string inspect_path;
  auto* i = app.add_subcommand("inspect", "validate a SEMB file");
  i->add_option("file", inspect_path, "SEMB file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s) return run_synth(synth);
    if (*b) return run_build(build);
    if (*e) return run_evaluate(ev);
    if (*w) return run_sweep_cmd(sw);
    if (*i) return run_inspect(inspect_path);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}

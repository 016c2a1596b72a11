#include <filesystem>

#include "doctest.h"
#include "fixture.hpp"
#include "tfpc/eval.hpp"

using namespace tfpc;
namespace fs = std::filesystem;

namespace {

struct Encoded {
  fixture::SynthSet set;
  DatasetManifest manifest;
  ClassCatalog catalog;
  SemanticProvider provider;
  std::vector<EncodedSample> support, test;
};

PipelineConfig small_config() {
  auto c = PipelineConfig::desk_scale();
  c.k_shot = 4;
  return c;
}

// Encoded once and shared: both branches are stored per sample.
const Encoded& shared() {
  static const Encoded e = [] {
    Encoded x;
    x.set = fixture::write_synth(fs::path(TFPC_TEST_TMP) / "eval_set", {});
    x.manifest = read_manifest(x.set.manifest);
    x.catalog = x.manifest.catalog();
    x.provider = SemanticProvider::load(x.set.embeddings, x.set.class_text);
    const auto c = small_config();
    x.support = encode_entries(x.manifest.split(Split::Support), x.catalog, c, &x.provider);
    x.test = encode_entries(x.manifest.split(Split::Test), x.catalog, c, &x.provider);
    return x;
  }();
  return e;
}

EvalReport run(const PipelineConfig& c, const Matrix* text = nullptr) {
  const auto& e = shared();
  return evaluate(e.test, build_memory_from(e.support, e.catalog, c), c, text);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("encode_entries reports every missing id at once") {
  const auto& e = shared();
  EmbeddingFile partial{static_cast<std::uint32_t>(e.provider.dim()), {}};
  const auto entries = e.manifest.split(Split::Support);
  const SemanticProvider none(partial);
  try {
    encode_entries({entries[0], entries[1]}, e.catalog, small_config(), &none);
    FAIL("expected MissingEmbedding");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::MissingEmbedding);
    CHECK(std::string(err.what()).find(entries[0].id) != std::string::npos);
    CHECK(std::string(err.what()).find(entries[1].id) != std::string::npos);
  }
  auto geo = small_config();
  geo.branch = Branch::Geometric;
  CHECK_NOTHROW(encode_entries({entries[0]}, e.catalog, geo, nullptr));
}

TEST_CASE("encoding is independent of the thread count") {
  const auto& e = shared();
  const auto entries = e.manifest.split(Split::Test);
  const std::vector<ManifestEntry> few(entries.begin(), entries.begin() + 6);
  const auto a = encode_entries(few, e.catalog, small_config(), &e.provider, 1);
  const auto b = encode_entries(few, e.catalog, small_config(), &e.provider, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].geo == b[i].geo);
    CHECK(a[i].sem == b[i].sem);
  }
}

TEST_CASE("self-retrieval is exact") {
  const auto& e = shared();
  PipelineConfig c = small_config();
  c.k_shot.reset();
  const auto report = evaluate(e.test, build_memory_from(e.test, e.catalog, c), c);
  CHECK(report.correct == report.total);
  CHECK(report.overall_accuracy == 100.0);
}

TEST_CASE("report arithmetic agrees with the confusion matrix") {
  const auto& e = shared();
  const auto r = run(small_config());
  std::size_t trace = 0, total = 0;
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    std::size_t row = 0;
    for (auto v : r.confusion[t]) row += v;
    CHECK(row == 6);
    trace += r.confusion[t][t];
    total += row;
  }
  CHECK(total == e.test.size());
  CHECK(r.correct == trace);
  CHECK(r.overall_accuracy == accuracy_percent(trace, total));
}

TEST_CASE("alpha endpoints match the single branches") {
  auto c = small_config();
  c.alpha = 1.0;
  auto g = small_config();
  g.branch = Branch::Geometric;
  const auto a1 = run(c), geo = run(g);
  for (std::size_t i = 0; i < a1.predictions.size(); ++i)
    CHECK(a1.predictions[i].predicted == geo.predictions[i].predicted);

  c.alpha = 0.0;
  auto s = small_config();
  s.branch = Branch::Semantic;
  const auto a0 = run(c), sem = run(s);
  for (std::size_t i = 0; i < a0.predictions.size(); ++i)
    CHECK(a0.predictions[i].predicted == sem.predictions[i].predicted);
}

TEST_CASE("ensemble uses class text") {
  const auto& e = shared();
  const Matrix text = e.provider.class_text_matrix(e.catalog);
  auto c = small_config();
  c.lambda_ensemble = 0.0;
  const auto zs = run(c, &text);
  CHECK(zs.ensemble);
  std::size_t correct = 0;
  for (const auto& s : e.test)
    correct += argmax(zero_shot_logits(s.sem, text)) == s.class_index;
  CHECK(zs.correct == correct);
}

TEST_CASE("report JSON is deterministic and versioned") {
  const auto a = report_to_json(run(small_config()), false).dump();
  const auto b = report_to_json(run(small_config()), false).dump();
  CHECK(a == b);
  const auto j = nlohmann::json::parse(a);
  CHECK(j["schema"] == 1);
  CHECK_FALSE(j.contains("timing"));
  CHECK(report_table(run(small_config())).find("overall") != std::string::npos);
}

TEST_CASE("ablation configurations") {
  const auto base = small_config();
  CHECK(ablation_config(base, Ablation::GeoOnly).branch == Branch::Geometric);
  CHECK(ablation_config(base, Ablation::SemOnly).branch == Branch::Semantic);
  CHECK_FALSE(ablation_config(base, Ablation::NoGfe).use_gfe);
  CHECK(ablation_config(base, Ablation::NoMff).selection == KeySelection::Random);
  CHECK(ablation_config(base, Ablation::Full) == base);
  for (auto a : kAblationMatrix) CHECK(ablation_from_string(to_string(a)) == a);

  const auto& e = shared();
  const auto rows = run_ablations(e.manifest, base, &e.provider, kAblationMatrix, false);
  CHECK(rows.size() == 5);
  CHECK(ablation_table(rows).find("no-gfe") != std::string::npos);
}

TEST_CASE("sweep grid shape and endpoints") {
  const auto& e = shared();
  const auto base = small_config();
  const auto rows = run_sweep(e.support, e.test, e.catalog, base,
                              {{0.0, 0.5, 1.0}, {1.0, 5.0, 20.0}, {0.5}}, nullptr);
  CHECK(rows.size() == 9);
  CHECK(rows[1].alpha == 0.0);
  CHECK(rows[1].gamma == 5.0);
  CHECK(rows[3].alpha == 0.5);

  auto g = base;
  g.branch = Branch::Geometric;
  auto s = base;
  s.branch = Branch::Semantic;
  CHECK(rows[7].accuracy == run(g).overall_accuracy);
  CHECK(rows[1].accuracy == run(s).overall_accuracy);
  CHECK(rows[4].accuracy == run(base).overall_accuracy);

  const auto csv = sweep_csv(rows);
  CHECK(csv.rfind("alpha,gamma,lambda,accuracy\n", 0) == 0);

  try {
    run_sweep(e.support, e.test, e.catalog, base, {{}, {5.0}, {0.5}}, nullptr);
    FAIL("expected ConfigError");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::ConfigError);
  }
}

}  // TEST_SUITE

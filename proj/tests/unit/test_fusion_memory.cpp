#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "tfpc/fusion_memory.hpp"

using namespace tfpc;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

FeatureVector unit(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  for (auto& x : v) x = g(rng);
  return l2_normalize(FeatureVector(v)).vector;
}

Matrix rows_of(const std::vector<std::vector<double>>& rows) {
  Matrix m;
  for (const auto& r : rows) m.append_row(r);
  return m;
}

std::vector<SupportItem> random_support(std::mt19937_64& rng, std::size_t classes,
                                        std::size_t per_class, std::size_t d) {
  std::vector<SupportItem> out;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i)
      out.push_back({"s" + std::to_string(c) + "_" + std::to_string(i), c,
                     single_branch(unit(rng, d), FusionMode::Feature)});
  return out;
}

ClassCatalog catalog_of(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("c" + std::to_string(i));
  return ClassCatalog(names);
}

std::multiset<std::vector<double>> row_set(const Matrix& m) {
  std::multiset<std::vector<double>> s;
  for (std::size_t r = 0; r < m.rows(); ++r) s.insert({m.row(r).begin(), m.row(r).end()});
  return s;
}

}  // namespace

TEST_SUITE("fusion_memory") {

TEST_CASE("align_dims examples") {
  CHECK(align_dims(FeatureVector({1, 3, 5, 7}), 2) == FeatureVector({2, 6}));
  CHECK(align_dims(FeatureVector({1, 2, 3, 4, 5}), 2) == FeatureVector({2, 4.5}));
  const FeatureVector v({0.1, 0.2, 0.3});
  CHECK(align_dims(v, 3) == v);
  CHECK(code_of([&] { align_dims(v, 4); }) == ErrorCode::InvalidInput);
}

TEST_CASE("fuse endpoints and midpoint") {
  std::mt19937_64 rng(107);
  const auto g = unit(rng, 12), s = unit(rng, 4);
  const auto g_aligned = l2_normalize(align_dims(g, 4)).vector;
  CHECK(fuse(g, s, 1.0).values == g_aligned);
  CHECK(fuse(g, s, 0.0).values == s);

  const auto mid = fuse(FeatureVector({1, 0}), FeatureVector({0, 1}), 0.5);
  CHECK(mid.values[0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(mid.values[1] == doctest::Approx(std::sqrt(0.5)));
  CHECK(l2_norm(mid.values.values()) == doctest::Approx(1.0));

  const auto score = fuse(g, s, 0.3, FusionMode::Score);
  CHECK(score.values == g);
  CHECK(score.sem == s);
  CHECK(score.alpha_used == 0.3);

  CHECK(code_of([] { fuse(FeatureVector({0, 0}), FeatureVector({0, 1}), 0.5); }) ==
        ErrorCode::DegenerateFeature);
}

TEST_CASE("mff K = S returns the points") {
  std::mt19937_64 rng(109);
  Matrix m;
  for (int i = 0; i < 6; ++i) m.append_row(unit(rng, 5).values());
  const auto r = mff_select(m, 6, 1);
  CHECK(r.k_used == 6);
  CHECK(row_set(r.centroids) == row_set(m));
  const auto c = mff_select(m, 16, 1);
  CHECK(c.clamped);
  CHECK(c.k_used == 6);
  CHECK(c.inertia == 0.0);
}

TEST_CASE("mff K = 1 returns the mean") {
  const Matrix m = rows_of({{0, 0}, {2, 0}, {4, 6}});
  const auto r = mff_select(m, 1, 3);
  CHECK(r.centroids(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.centroids(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("mff two pairs match the exhaustive partition") {
  const std::vector<std::vector<double>> rows{{0, 0}, {0.1, 0}, {5, 5}, {5, 5.2}};
  const auto best = oracle::best_two_partition(rows);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = mff_select(rows_of(rows), 2, seed);
    std::multiset<std::vector<double>> want(best.centroids.begin(), best.centroids.end());
    auto got = row_set(r.centroids);
    auto it = want.begin();
    for (const auto& g : got) {
      CHECK(g[0] == doctest::Approx((*it)[0]).epsilon(1e-12));
      CHECK(g[1] == doctest::Approx((*it)[1]).epsilon(1e-12));
      ++it;
    }
    CHECK(r.inertia == doctest::Approx(best.sse));
  }
}

TEST_CASE("mff inertia never increases and runs are deterministic") {
  std::mt19937_64 rng(113);
  for (int trial = 0; trial < 30; ++trial) {
    Matrix m;
    for (int i = 0; i < 32; ++i) m.append_row(unit(rng, 6).values());
    const auto r = mff_select(m, 4 + trial % 5, trial);
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-12);
    CHECK(r.iterations <= kMffMaxIterations);
    const auto again = mff_select(m, 4 + trial % 5, trial);
    CHECK(again.centroids == r.centroids);
  }
  CHECK(code_of([] { mff_select(Matrix(0, 3), 2, 0); }) == ErrorCode::InvalidInput);
}

TEST_CASE("derive_seed separates classes") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 3) == derive_seed(5, 3));
}

TEST_CASE("build_memory key counts") {
  std::mt19937_64 rng(127);
  const auto support = random_support(rng, 4, 20, 8);
  const auto cat = catalog_of(4);
  const auto full = build_memory(support, cat, std::nullopt, 0, 9);
  CHECK(full.size() == 80);
  const auto k16 = build_memory(support, cat, 16, 0, 9);
  CHECK(k16.size() == 64);
  CHECK(k16.keys_per_class() == std::vector<std::size_t>(4, 16));
  for (std::size_t r = 0; r < k16.size(); ++r)
    CHECK(l2_norm(k16.keys.row(r)) == doctest::Approx(1.0).epsilon(1e-12));
  const Matrix onehot = k16.labels_onehot();
  for (std::size_t r = 0; r < onehot.rows(); ++r) {
    double s = 0;
    for (double v : onehot.row(r)) s += v;
    CHECK(s == 1.0);
  }
  CHECK(build_memory(support, cat, 16, 0, 9).keys == k16.keys);

  auto lonely = random_support(rng, 2, 20, 8);
  lonely.erase(lonely.begin() + 21, lonely.end());
  const auto clamped = build_memory(lonely, catalog_of(2), 16, 0, 9);
  CHECK(clamped.keys_per_class() == std::vector<std::size_t>{16, 1});

  CHECK(code_of([&] { build_memory(lonely, catalog_of(3), 16, 0, 9); }) ==
        ErrorCode::InvalidInput);
}

TEST_CASE("k-shot with K = S equals full-shot as a set") {
  std::mt19937_64 rng(131);
  const auto support = random_support(rng, 3, 5, 6);
  const auto a = build_memory(support, catalog_of(3), std::nullopt, 0, 1);
  const auto b = build_memory(support, catalog_of(3), 5, 0, 1);
  auto sa = row_set(a.keys), sb = row_set(b.keys);
  REQUIRE(sa.size() == sb.size());
  for (auto i = sa.begin(), j = sb.begin(); i != sa.end(); ++i, ++j)
    for (std::size_t k = 0; k < i->size(); ++k) CHECK(std::abs((*i)[k] - (*j)[k]) <= 1e-9);
}

TEST_CASE("nearest and random selections pick real samples") {
  std::mt19937_64 rng(137);
  const auto support = random_support(rng, 2, 12, 5);
  std::set<std::vector<double>> samples;
  for (const auto& s : support) samples.insert(s.feature.values.data());
  for (auto sel : {KeySelection::MffNearest, KeySelection::Random}) {
    const auto m = build_memory(support, catalog_of(2), 4, 3, 1, sel);
    CHECK(m.size() == 8);
    const auto rows = row_set(m.keys);
    CHECK(std::set<std::vector<double>>(rows.begin(), rows.end()).size() == 8);
    for (const auto& r : rows) CHECK(samples.count(r) == 1);
  }
}

TEST_CASE("classify examples") {
  const auto support = std::vector<SupportItem>{
      {"a", 0, single_branch(FeatureVector({1, 0, 0}), FusionMode::Feature)},
      {"b", 1, single_branch(FeatureVector({0, 1, 0}), FusionMode::Feature)},
      {"c", 1, single_branch(FeatureVector({0, 0, 1}), FusionMode::Feature)},
      {"d", 2, single_branch(FeatureVector({0, 0, -1}), FusionMode::Feature)}};
  const auto mem = build_memory(support, catalog_of(3), std::nullopt, 0, 42);

  const auto q = single_branch(FeatureVector({1, 0, 0}), FusionMode::Feature);
  const auto logits = classify(q, mem, 5.0, 42);
  CHECK(argmax(logits) == 0);
  CHECK(logits[0] == doctest::Approx(1.0 + 0.0));
  CHECK(logits[1] == doctest::Approx(2 * std::exp(-5.0)));
  CHECK(logits[2] == doctest::Approx(std::exp(-5.0)));

  // Orthogonal to all but the pair along x: ratios follow key counts.
  const std::vector<SupportItem> ortho{
      {"a", 0, single_branch(FeatureVector({0, 1, 0}), FusionMode::Feature)},
      {"b", 1, single_branch(FeatureVector({0, 0, 1}), FusionMode::Feature)},
      {"c", 1, single_branch(FeatureVector({0, 1, 0}), FusionMode::Feature)}};
  const auto om = build_memory(ortho, catalog_of(2), std::nullopt, 0, 1);
  const auto ol = classify(q, om, 3.0, 1);
  CHECK(ol[0] == doctest::Approx(std::exp(-3.0)));
  CHECK(ol[1] == doctest::Approx(2 * std::exp(-3.0)));

  CHECK(code_of([&] { classify(q, mem, 5.0, 43); }) == ErrorCode::MemoryMismatch);
}

TEST_CASE("large gamma reduces to nearest-neighbor argmax") {
  std::mt19937_64 rng(139);
  for (int trial = 0; trial < 50; ++trial) {
    const auto support = random_support(rng, 5, 3, 10);
    const auto mem = build_memory(support, catalog_of(5), std::nullopt, 0, 1);
    const auto q = single_branch(unit(rng, 10), FusionMode::Feature);
    std::size_t best = 0;
    double best_s = -2;
    for (const auto& s : support) {
      const double v = dot(s.feature.values.values(), q.values.values());
      if (v > best_s) {
        best_s = v;
        best = s.class_index;
      }
    }
    CHECK(argmax(classify(q, mem, 500.0, 1)) == best);
  }
}

TEST_CASE("query scale is absorbed by normalization") {
  std::mt19937_64 rng(149);
  const auto support = random_support(rng, 3, 4, 6);
  const auto mem = build_memory(support, catalog_of(3), std::nullopt, 0, 1);
  const auto raw = unit(rng, 6);
  std::vector<double> scaled(raw.data());
  for (auto& v : scaled) v *= 37.5;
  const auto a = classify(single_branch(raw, FusionMode::Feature), mem, 5, 1);
  const auto b = classify(
      single_branch(l2_normalize(FeatureVector(scaled)).vector, FusionMode::Feature), mem, 5, 1);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("score mode blends similarities") {
  const FeatureVector g({1, 0}), s({0, 1});
  const std::vector<SupportItem> sup{{"a", 0, fuse(g, s, 0.25, FusionMode::Score)}};
  const auto mem = build_memory(sup, catalog_of(1), std::nullopt, 0, 1);
  const auto q = fuse(FeatureVector({1, 0}), FeatureVector({1, 0}), 0.25, FusionMode::Score);
  const auto sims = key_similarities(q, mem);
  CHECK(sims[0] == doctest::Approx(0.25 * 1.0 + 0.75 * 0.0));
}

TEST_CASE("zero-shot and ensemble") {
  const Matrix text = rows_of({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  const auto z = zero_shot_logits(FeatureVector({0, 0, 0, 1}), text);
  CHECK(argmax(z) == 3);
  const auto p = zero_shot_logits(FeatureVector({0.5, 0.5, 0.5, 0.5}), text);
  for (double v : p) CHECK(v == 0.5);

  std::mt19937_64 rng(151);
  Matrix rt;
  for (int i = 0; i < 6; ++i) rt.append_row(unit(rng, 9).values());
  const auto f = unit(rng, 9);
  const auto rl = zero_shot_logits(f, rt);
  for (std::size_t i = 0; i < 6; ++i) {
    double d = 0;
    for (std::size_t k = 0; k < 9; ++k) d += f[k] * rt(i, k);
    CHECK(rl[i] == doctest::Approx(d).epsilon(1e-12));
  }

  const std::vector<double> mem{0.2, 3.0, 1.0}, zs{5.0, 1.0, 3.0}, flat{2, 2, 2};
  CHECK(min_max_normalize(mem) == std::vector<double>{0.0, 1.0, 0.8 / 2.8});
  CHECK(min_max_normalize(flat) == std::vector<double>{0, 0, 0});
  CHECK(argmax(ensemble(mem, zs, 1.0)) == argmax(mem));
  CHECK(argmax(ensemble(mem, zs, 0.0)) == argmax(zs));
  for (double l : {0.1, 0.5, 0.9}) CHECK(argmax(ensemble(mem, flat, l)) == argmax(mem));
  CHECK(code_of([&] { ensemble(mem, std::vector<double>{1, 2}, 0.5); }) ==
        ErrorCode::InvalidInput);
}

TEST_CASE("memory files round trip") {
  std::mt19937_64 rng(157);
  const auto support = random_support(rng, 3, 10, 8);
  PipelineConfig cfg;
  cfg.k_shot = 4;
  const auto mem = build_memory(support, catalog_of(3), 4, 0, cfg.digest());
  const fs::path dir = fs::path(TFPC_TEST_TMP) / "fusion_memory";
  fs::create_directories(dir);
  save_memory(mem, cfg, dir / "m");
  const auto loaded = load_memory(dir / "m");
  CHECK(loaded.config == cfg);
  CHECK(loaded.memory.key_class == mem.key_class);
  CHECK(loaded.memory.catalog == mem.catalog);
  CHECK(loaded.memory.config_digest == mem.config_digest);
  REQUIRE(loaded.memory.keys.rows() == mem.keys.rows());
  for (std::size_t i = 0; i < mem.keys.data().size(); ++i)
    // Stored as float32 and re-normalized on load.
    CHECK(std::abs(loaded.memory.keys.data()[i] - mem.keys.data()[i]) <= 1e-6);
}

}  // TEST_SUITE

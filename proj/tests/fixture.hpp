// Small on-disk synthetic benchmark shared by the eval, cli and acceptance
// binaries.
#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tfpc/dataset_io.hpp"
#include "tfpc/semantic_io.hpp"

namespace fixture {

struct SynthSet {
  std::filesystem::path root;
  std::filesystem::path manifest, embeddings, class_text;
};

struct SynthOptions {
  std::size_t support = 8;
  std::size_t test = 6;
  std::size_t points = 256;
  double noise = 0.02;
  std::size_t sem_dim = 32;
  double sem_noise = 0.15;
  std::uint64_t seed = 1;
};

inline SynthSet write_synth(const std::filesystem::path& root, const SynthOptions& opts) {
  namespace fs = std::filesystem;
  using namespace tfpc;
  fs::remove_all(root);
  fs::create_directories(root / "clouds");
  std::mt19937_64 rng(opts.seed * 7919 + 11);
  std::normal_distribution<double> g;
  DatasetManifest manifest;
  std::vector<EmbeddingRecord> samples, text;
  std::uint64_t serial = 0;
  for (PrimitiveKind kind : kAllPrimitives) {
    const std::string label(to_string(kind));
    std::vector<double> proto(opts.sem_dim);
    for (auto& v : proto) v = g(rng);
    const double pn = l2_norm(proto);
    for (Split split : {Split::Support, Split::Test}) {
      const std::size_t n = split == Split::Support ? opts.support : opts.test;
      for (std::size_t i = 0; i < n; ++i, ++serial) {
        const std::string id = label + "-" + std::string(to_string(split)) + "-" + std::to_string(i);
        const auto cloud = synth_primitive(kind, opts.points, opts.noise, opts.seed * 1000 + serial);
        const fs::path rel = fs::path("clouds") / (id + ".xyz");
        write_xyz(cloud, root / rel);
        manifest.entries.push_back({id, rel, label, split});
        std::vector<double> v(opts.sem_dim);
        for (std::size_t d = 0; d < v.size(); ++d) v[d] = proto[d] / pn + opts.sem_noise * g(rng);
        samples.push_back(make_record(id, v));
      }
    }
    text.push_back(make_record(label, proto));
  }
  SynthSet out{root, root / "manifest.jsonl", root / "embeddings.semb", root / "class_text.semb"};
  write_manifest(manifest, out.manifest);
  write_embedding_file(samples, out.embeddings);
  write_embedding_file(text, out.class_text);
  return out;
}

}  // namespace fixture

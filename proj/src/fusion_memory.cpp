#include "tfpc/fusion_memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "nlohmann/json.hpp"
#include "tfpc/semantic_io.hpp"

namespace tfpc {

FeatureVector align_dims(const FeatureVector& v, std::size_t target_dim) {
  if (target_dim == 0) fail(ErrorCode::InvalidInput, "target dimension must be positive");
  if (v.dim() < target_dim) {
    fail(ErrorCode::InvalidInput, "cannot enlarge dimension " + std::to_string(v.dim()) +
                                      " to " + std::to_string(target_dim));
  }
  if (v.dim() == target_dim) return v;
  const std::size_t base = v.dim() / target_dim;
  const std::size_t extra = v.dim() % target_dim;
  std::vector<double> out(target_dim);
  std::size_t pos = 0;
  for (std::size_t j = 0; j < target_dim; ++j) {
    const std::size_t len = base + (j < extra ? 1 : 0);
    double sum = 0.0;
    for (std::size_t t = 0; t < len; ++t) sum += v[pos + t];
    out[j] = sum / static_cast<double>(len);
    pos += len;
  }
  return FeatureVector(std::move(out));
}

namespace {

FeatureVector unit_or_fail(const FeatureVector& v, const char* what) {
  auto n = l2_normalize(v);
  if (n.zero_norm) fail(ErrorCode::DegenerateFeature, std::string(what) + " has zero norm");
  return std::move(n.vector);
}

}  // namespace

FusedFeature fuse(const FeatureVector& f_geo, const FeatureVector& f_sem, double alpha,
                  FusionMode mode) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::InvalidInput, "alpha outside [0, 1]");
  const FeatureVector geo = unit_or_fail(f_geo, "geometric feature");
  const FeatureVector sem = unit_or_fail(f_sem, "semantic feature");
  FusedFeature out;
  out.alpha_used = alpha;
  out.mode = mode;
  if (mode == FusionMode::Score) {
    out.values = geo;
    out.sem = sem;
    return out;
  }
  const FeatureVector aligned = unit_or_fail(align_dims(geo, sem.dim()), "aligned geometric feature");
  std::vector<double> mixed(sem.dim());
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    mixed[i] = alpha * aligned[i] + (1.0 - alpha) * sem[i];
  }
  out.values = unit_or_fail(FeatureVector(std::move(mixed)), "fused feature");
  return out;
}

FusedFeature single_branch(const FeatureVector& f, FusionMode mode) {
  FusedFeature out;
  out.values = unit_or_fail(f, "branch feature");
  out.alpha_used = 1.0;
  out.mode = mode;
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t class_index) {
  // splitmix64 finalizer over a per-class offset.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (class_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

double row_sq_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct Assignment {
  std::vector<std::size_t> cluster;
  std::vector<double> cost;  // squared distance to the assigned centroid
};

Assignment assign(const Matrix& x, const Matrix& centroids) {
  Assignment a;
  a.cluster.resize(x.rows());
  a.cost.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const double d = row_sq_distance(x.row(i), centroids.row(c));
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    a.cluster[i] = arg;
    a.cost[i] = best;
  }
  return a;
}

// A cluster left empty takes the point farthest from its own centroid among
// clusters that can spare one; the centroid moves onto that point.
void reseed_empty(const Matrix& x, Matrix& centroids, Assignment& a) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> sizes(k, 0);
  for (auto c : a.cluster) ++sizes[c];
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0) continue;
    std::size_t far = x.rows();
    double far_cost = -1.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (sizes[a.cluster[i]] > 1 && a.cost[i] > far_cost) {
        far_cost = a.cost[i];
        far = i;
      }
    }
    --sizes[a.cluster[far]];
    ++sizes[c];
    a.cluster[far] = c;
    a.cost[far] = 0.0;
    const auto src = x.row(far);
    std::copy(src.begin(), src.end(), centroids.row(c).begin());
  }
}

Matrix cluster_means(const Matrix& x, const std::vector<std::size_t>& cluster, std::size_t k) {
  Matrix sums(k, x.cols(), 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto dst = sums.row(cluster[i]);
    const auto src = x.row(i);
    for (std::size_t d = 0; d < x.cols(); ++d) dst[d] += src[d];
    ++counts[cluster[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    auto row = sums.row(c);
    for (auto& v : row) v /= static_cast<double>(counts[c]);
  }
  return sums;
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

MffResult mff_select(const Matrix& x, std::size_t k, std::uint64_t seed) {
  const std::size_t s = x.rows();
  if (s == 0) fail(ErrorCode::InvalidInput, "MFF needs at least one feature");
  if (k == 0) fail(ErrorCode::InvalidInput, "MFF cluster count must be positive");

  MffResult result;
  if (k >= s) {
    result.centroids = x;
    result.k_used = s;
    result.clamped = k > s;
    result.assignment.resize(s);
    std::iota(result.assignment.begin(), result.assignment.end(), std::size_t{0});
    result.inertia_history = {0.0};
    return result;
  }
  result.k_used = k;

  std::mt19937_64 rng(seed);
  std::vector<char> chosen(s, 0);
  std::vector<std::size_t> seeds;
  seeds.push_back(std::uniform_int_distribution<std::size_t>(0, s - 1)(rng));
  chosen[seeds.back()] = 1;
  std::vector<double> nearest(s, std::numeric_limits<double>::infinity());
  while (seeds.size() < k) {
    for (std::size_t i = 0; i < s; ++i) {
      nearest[i] = std::min(nearest[i], row_sq_distance(x.row(i), x.row(seeds.back())));
    }
    const double mass = total(nearest);
    std::size_t pick = s;
    if (mass > 0.0) {
      const double u = std::uniform_real_distribution<double>(0.0, mass)(rng);
      double cum = 0.0;
      for (std::size_t i = 0; i < s; ++i) {
        if (nearest[i] <= 0.0) continue;
        cum += nearest[i];
        pick = i;
        if (cum > u) break;
      }
    } else {
      // Remaining points coincide with chosen centers.
      for (std::size_t i = 0; i < s && pick == s; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    seeds.push_back(pick);
    chosen[pick] = 1;
  }

  Matrix centroids(k, x.cols());
  for (std::size_t c = 0; c < k; ++c) {
    const auto src = x.row(seeds[c]);
    std::copy(src.begin(), src.end(), centroids.row(c).begin());
  }
  Assignment a = assign(x, centroids);
  reseed_empty(x, centroids, a);
  result.inertia_history.push_back(total(a.cost));

  for (std::size_t it = 1; it <= kMffMaxIterations; ++it) {
    Matrix next = cluster_means(x, a.cluster, k);
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      movement = std::max(movement, std::sqrt(row_sq_distance(next.row(c), centroids.row(c))));
    }
    centroids = std::move(next);
    a = assign(x, centroids);
    reseed_empty(x, centroids, a);
    result.inertia_history.push_back(total(a.cost));
    result.iterations = it;
    if (movement < kMffTolerance) break;
  }
  result.centroids = std::move(centroids);
  result.assignment = std::move(a.cluster);
  result.inertia = result.inertia_history.back();
  return result;
}

Matrix FeatureMemory::labels_onehot() const {
  Matrix out(key_class.size(), catalog.size(), 0.0);
  for (std::size_t r = 0; r < key_class.size(); ++r) out(r, key_class[r]) = 1.0;
  return out;
}

std::vector<std::size_t> FeatureMemory::keys_per_class() const {
  std::vector<std::size_t> counts(catalog.size(), 0);
  for (auto c : key_class) ++counts[c];
  return counts;
}

namespace {

bool is_score_pair(const FusedFeature& f) {
  return f.mode == FusionMode::Score && !f.sem.empty();
}

// Clustering space: the fused vector in feature mode, and the concatenation
// [sqrt(alpha) geo, sqrt(1 - alpha) sem] in score mode, whose squared
// distances equal the alpha-weighted sum of branch distances.
Matrix clustering_space(const std::vector<const SupportItem*>& items) {
  Matrix x;
  std::vector<double> row;
  for (const auto* item : items) {
    const auto& f = item->feature;
    row.assign(f.values.values().begin(), f.values.values().end());
    if (is_score_pair(f)) {
      const double wg = std::sqrt(f.alpha_used);
      const double ws = std::sqrt(1.0 - f.alpha_used);
      for (auto& v : row) v *= wg;
      for (double v : f.sem.values()) row.push_back(ws * v);
    }
    x.append_row(row);
  }
  return x;
}

Matrix branch_matrix(const std::vector<const SupportItem*>& items, bool sem) {
  Matrix x;
  for (const auto* item : items) {
    x.append_row(sem ? item->feature.sem.values() : item->feature.values.values());
  }
  return x;
}

void append_unit(Matrix& dst, std::span<const double> row) {
  auto n = l2_normalize(FeatureVector(std::vector<double>(row.begin(), row.end())));
  if (n.zero_norm) fail(ErrorCode::DegenerateFeature, "memory key has zero norm");
  dst.append_row(n.vector.values());
}

}  // namespace

FeatureMemory build_memory(const std::vector<SupportItem>& support,
                           const ClassCatalog& catalog, std::optional<std::size_t> k_shot,
                           std::uint64_t seed, std::uint64_t config_digest,
                           KeySelection selection) {
  if (support.empty()) fail(ErrorCode::InvalidInput, "support set is empty");
  std::vector<std::vector<const SupportItem*>> by_class(catalog.size());
  for (const auto& item : support) {
    if (item.class_index >= catalog.size()) {
      fail(ErrorCode::InvalidInput, "support item '" + item.sample_id + "' has no class");
    }
    if (item.feature.mode != support.front().feature.mode ||
        is_score_pair(item.feature) != is_score_pair(support.front().feature)) {
      fail(ErrorCode::InvalidInput, "support features mix fusion modes");
    }
    by_class[item.class_index].push_back(&item);
  }
  for (std::size_t c = 0; c < catalog.size(); ++c) {
    if (by_class[c].empty()) {
      fail(ErrorCode::InvalidInput, "class '" + catalog.name(c) + "' has no support samples");
    }
  }

  FeatureMemory memory;
  memory.catalog = catalog;
  memory.config_digest = config_digest;
  memory.mode = support.front().feature.mode;
  const bool pair = is_score_pair(support.front().feature);

  if (!k_shot) {
    for (const auto& item : support) {
      append_unit(memory.keys, item.feature.values.values());
      if (pair) append_unit(memory.sem_keys, item.feature.sem.values());
      memory.key_class.push_back(item.class_index);
    }
    return memory;
  }
  if (*k_shot == 0) fail(ErrorCode::InvalidInput, "k_shot must be positive");

  for (std::size_t c = 0; c < catalog.size(); ++c) {
    const auto& items = by_class[c];
    const std::uint64_t class_seed = derive_seed(seed, c);
    std::vector<std::size_t> picked;  // indices into items, for sample-valued keys

    if (selection == KeySelection::Random) {
      std::vector<std::size_t> order(items.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(class_seed);
      const std::size_t take = std::min(*k_shot, items.size());
      for (std::size_t i = 0; i < take; ++i) {
        const auto j = std::uniform_int_distribution<std::size_t>(i, order.size() - 1)(rng);
        std::swap(order[i], order[j]);
      }
      picked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    } else {
      const Matrix x = clustering_space(items);
      const MffResult mff = mff_select(x, *k_shot, class_seed);
      if (selection == KeySelection::MffNearest) {
        std::vector<char> used(items.size(), 0);
        for (std::size_t k = 0; k < mff.k_used; ++k) {
          std::size_t best = items.size();
          double best_d = std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < items.size(); ++i) {
            if (used[i]) continue;
            const double d = row_sq_distance(x.row(i), mff.centroids.row(k));
            if (d < best_d) {
              best_d = d;
              best = i;
            }
          }
          used[best] = 1;
          picked.push_back(best);
        }
      } else if (!pair) {
        for (std::size_t k = 0; k < mff.k_used; ++k) {
          append_unit(memory.keys, mff.centroids.row(k));
          memory.key_class.push_back(c);
        }
        continue;
      } else {
        const Matrix geo = cluster_means(branch_matrix(items, false), mff.assignment, mff.k_used);
        const Matrix sem = cluster_means(branch_matrix(items, true), mff.assignment, mff.k_used);
        for (std::size_t k = 0; k < mff.k_used; ++k) {
          append_unit(memory.keys, geo.row(k));
          append_unit(memory.sem_keys, sem.row(k));
          memory.key_class.push_back(c);
        }
        continue;
      }
    }
    for (auto i : picked) {
      append_unit(memory.keys, items[i]->feature.values.values());
      if (pair) append_unit(memory.sem_keys, items[i]->feature.sem.values());
      memory.key_class.push_back(c);
    }
  }
  return memory;
}

std::vector<double> key_similarities(const FusedFeature& query, const FeatureMemory& memory) {
  const bool pair = memory.sem_keys.rows() != 0;
  if (query.values.dim() != memory.keys.cols() ||
      (pair && query.sem.dim() != memory.sem_keys.cols()) || (pair != is_score_pair(query))) {
    fail(ErrorCode::MemoryMismatch, "query feature shape does not match the memory");
  }
  std::vector<double> s(memory.size());
  const double a = query.alpha_used;
  for (std::size_t r = 0; r < memory.size(); ++r) {
    const double geo = dot(memory.keys.row(r), query.values.values());
    s[r] = pair ? a * geo + (1.0 - a) * dot(memory.sem_keys.row(r), query.sem.values()) : geo;
  }
  return s;
}

std::vector<double> classify(const FusedFeature& query, const FeatureMemory& memory,
                             double gamma, std::uint64_t query_digest) {
  if (query_digest != memory.config_digest) {
    fail(ErrorCode::MemoryMismatch, "query configuration digest differs from the memory's");
  }
  if (query.mode != memory.mode) {
    fail(ErrorCode::MemoryMismatch, "query fusion mode differs from the memory's");
  }
  if (!(gamma > 0.0)) fail(ErrorCode::ConfigError, "gamma must be positive");
  const auto s = key_similarities(query, memory);
  std::vector<double> logits(memory.catalog.size(), 0.0);
  for (std::size_t r = 0; r < s.size(); ++r) {
    logits[memory.key_class[r]] += std::exp(-gamma * (1.0 - s[r]));
  }
  return logits;
}

std::vector<double> zero_shot_logits(const FeatureVector& f_sem, const Matrix& class_text) {
  if (class_text.rows() == 0) fail(ErrorCode::ZeroShotUnavailable, "no class-text embeddings");
  if (class_text.cols() != f_sem.dim()) {
    fail(ErrorCode::InvalidInput, "semantic feature and class-text widths differ");
  }
  std::vector<double> out(class_text.rows());
  for (std::size_t c = 0; c < class_text.rows(); ++c) out[c] = dot(class_text.row(c), f_sem.values());
  return out;
}

std::vector<double> min_max_normalize(std::span<const double> v) {
  std::vector<double> out(v.size(), 0.0);
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  return out;
}

std::vector<double> ensemble(std::span<const double> memory_logits,
                             std::span<const double> zeroshot_logits, double lambda) {
  if (memory_logits.size() != zeroshot_logits.size()) {
    fail(ErrorCode::InvalidInput, "ensemble inputs differ in length");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorCode::InvalidInput, "lambda outside [0, 1]");
  const auto m = min_max_normalize(memory_logits);
  const auto z = min_max_normalize(zeroshot_logits);
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = lambda * m[i] + (1.0 - lambda) * z[i];
  return out;
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) fail(ErrorCode::InvalidInput, "argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::filesystem::path memory_keys_path(const std::filesystem::path& prefix) {
  return prefix.string() + ".keys.semb";
}

std::filesystem::path memory_meta_path(const std::filesystem::path& prefix) {
  return prefix.string() + ".meta.json";
}

void save_memory(const FeatureMemory& memory, const PipelineConfig& config,
                 const std::filesystem::path& prefix) {
  if (config.digest() != memory.config_digest) {
    fail(ErrorCode::MemoryMismatch, "configuration does not match the memory digest");
  }
  std::vector<EmbeddingRecord> records;
  records.reserve(memory.size());
  std::vector<double> row;
  for (std::size_t r = 0; r < memory.size(); ++r) {
    const auto geo = memory.keys.row(r);
    row.assign(geo.begin(), geo.end());
    if (memory.sem_keys.rows() != 0) {
      const auto sem = memory.sem_keys.row(r);
      row.insert(row.end(), sem.begin(), sem.end());
    }
    records.push_back(make_record("key-" + std::to_string(r), row));
  }
  write_embedding_file(records, memory_keys_path(prefix));

  nlohmann::ordered_json meta;
  meta["schema"] = 1;
  meta["catalog"] = memory.catalog.names();
  meta["key_class"] = memory.key_class;
  meta["config_digest"] = config.digest_hex();
  meta["alpha"] = config.alpha;
  meta["gamma"] = config.gamma;
  meta["mode"] = std::string(to_string(memory.mode));
  meta["k_shot"] = config.k_shot ? nlohmann::ordered_json(*config.k_shot)
                                 : nlohmann::ordered_json(nullptr);
  meta["seed"] = config.seed;
  meta["geo_dim"] = memory.keys.cols();
  meta["sem_dim"] = memory.sem_keys.cols();
  meta["config"] = config_to_json(config);
  std::ofstream out(memory_meta_path(prefix), std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + memory_meta_path(prefix).string());
  out << meta.dump(2) << '\n';
}

LoadedMemory load_memory(const std::filesystem::path& prefix) {
  const auto meta_path = memory_meta_path(prefix);
  std::ifstream in(meta_path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + meta_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, meta_path.string() + ": " + e.what());
  }

  LoadedMemory loaded;
  try {
    if (meta.at("schema").get<int>() != 1) fail(ErrorCode::FormatError, "unsupported memory schema");
    loaded.config = config_from_json(meta.at("config"));
    if (meta.at("config_digest").get<std::string>() != loaded.config.digest_hex()) {
      fail(ErrorCode::MemoryMismatch, "memory sidecar digest does not match its configuration");
    }
    auto& m = loaded.memory;
    m.catalog = ClassCatalog(meta.at("catalog").get<std::vector<std::string>>());
    m.key_class = meta.at("key_class").get<std::vector<std::size_t>>();
    m.config_digest = loaded.config.digest();
    m.mode = fusion_mode_from_string(meta.at("mode").get<std::string>());
    const auto geo_dim = meta.at("geo_dim").get<std::size_t>();
    const auto sem_dim = meta.at("sem_dim").get<std::size_t>();

    const auto keys = read_embedding_file(memory_keys_path(prefix));
    if (keys.records.size() != m.key_class.size() || keys.dim != geo_dim + sem_dim) {
      fail(ErrorCode::FormatError, "memory key file does not match its sidecar");
    }
    for (std::size_t r = 0; r < keys.records.size(); ++r) {
      if (m.key_class[r] >= m.catalog.size()) {
        fail(ErrorCode::FormatError, "key class index out of range");
      }
      const auto& v = keys.records[r].vector;
      const std::vector<double> row(v.begin(), v.end());
      append_unit(m.keys, std::span<const double>(row).first(geo_dim));
      if (sem_dim) append_unit(m.sem_keys, std::span<const double>(row).subspan(geo_dim));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, meta_path.string() + ": " + e.what());
  }
  return loaded;
}

}  // namespace tfpc

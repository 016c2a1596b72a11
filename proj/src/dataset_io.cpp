#include "tfpc/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "nlohmann/json.hpp"
#include "tfpc/geometry.hpp"

namespace tfpc {

namespace {

[[noreturn]] void format_error(const std::string& what, std::size_t line,
                               const std::string& message) {
  throw Error(ErrorCode::FormatError, what + ": " + message, line);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

struct Line {
  std::size_t number;
  std::string_view text;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t number = 1;
  while (true) {
    const auto nl = text.find('\n');
    lines.push_back({number, text.substr(0, nl)});
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
    ++number;
  }
  return lines;
}

std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::optional<double> to_real(std::string_view tok) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::optional<std::size_t> to_index(std::string_view tok) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

}  // namespace

PointCloud parse_off_text(std::string_view text, const std::string& id) {
  const std::string what = id.empty() ? "OFF" : "OFF " + id;
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;
  for (const auto& line : split_lines(text)) {
    auto body = line.text;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    if (body.find('\0') != std::string_view::npos) format_error(what, line.number, "NUL byte");
    rows.push_back({line.number, split_whitespace(body)});
  }
  if (rows.empty()) format_error(what, 1, "empty file");

  std::size_t cursor = 0;
  auto& header = rows[cursor].second;
  const std::size_t header_line = rows[cursor].first;
  if (header.front().substr(0, 3) != "OFF") format_error(what, header_line, "missing OFF header");
  std::vector<std::string_view> counts;
  if (header.front().size() > 3) counts.push_back(header.front().substr(3));
  counts.insert(counts.end(), header.begin() + 1, header.end());
  std::size_t counts_line = header_line;
  ++cursor;
  if (counts.empty()) {
    if (cursor >= rows.size()) format_error(what, header_line, "missing vertex/face counts");
    counts = rows[cursor].second;
    counts_line = rows[cursor].first;
    ++cursor;
  }
  if (counts.size() != 3) format_error(what, counts_line, "expected 'vertices faces edges'");
  const auto nv = to_index(counts[0]);
  const auto nf = to_index(counts[1]);
  const auto ne = to_index(counts[2]);
  if (!nv || !nf || !ne) format_error(what, counts_line, "counts must be non-negative integers");
  if (*nv == 0) format_error(what, counts_line, "mesh has no vertices");
  if (*nv > rows.size() - cursor) {
    format_error(what, counts_line, "declares " + std::to_string(*nv) + " vertices but only " +
                                        std::to_string(rows.size() - cursor) + " lines follow");
  }

  PointCloud cloud;
  cloud.id = id;
  cloud.points.reserve(*nv);
  for (std::size_t v = 0; v < *nv; ++v, ++cursor) {
    const auto& [number, toks] = rows[cursor];
    if (toks.size() != 3) format_error(what, number, "vertex line needs 3 coordinates");
    Vec3 p{};
    for (std::size_t a = 0; a < 3; ++a) {
      const auto value = to_real(toks[a]);
      if (!value) format_error(what, number, "bad coordinate '" + std::string(toks[a]) + "'");
      p[a] = *value;
    }
    cloud.points.push_back(p);
  }
  if (*nf > rows.size() - cursor) {
    format_error(what, counts_line, "declares " + std::to_string(*nf) + " faces but only " +
                                        std::to_string(rows.size() - cursor) + " lines follow");
  }
  for (std::size_t f = 0; f < *nf; ++f, ++cursor) {
    const auto& [number, toks] = rows[cursor];
    const auto arity = to_index(toks.front());
    if (!arity || *arity < 3) format_error(what, number, "face needs a vertex count >= 3");
    if (toks.size() < *arity + 1) format_error(what, number, "face lists too few vertices");
    for (std::size_t k = 1; k <= *arity; ++k) {
      const auto idx = to_index(toks[k]);
      if (!idx || *idx >= *nv) format_error(what, number, "bad face vertex index");
    }
    // Optional per-face colour values.
    for (std::size_t k = *arity + 1; k < toks.size(); ++k) {
      if (!to_real(toks[k])) format_error(what, number, "bad face attribute");
    }
  }
  if (cursor != rows.size()) format_error(what, rows[cursor].first, "unexpected trailing data");
  return cloud;
}

PointCloud parse_off(const std::filesystem::path& path) {
  return parse_off_text(read_text(path), path.stem().string());
}

PointCloud parse_xyz_text(std::string_view text, std::optional<std::size_t> expected_points,
                          const std::string& id) {
  const std::string what = id.empty() ? "xyz" : "xyz " + id;
  PointCloud cloud;
  cloud.id = id;
  std::vector<Vec3> normals;
  std::size_t width = 0;
  for (const auto& line : split_lines(text)) {
    const auto body = trim(line.text);
    if (body.empty()) continue;
    std::vector<std::string_view> toks;
    if (body.find(',') != std::string_view::npos) {
      std::string_view rest = body;
      while (true) {
        const auto comma = rest.find(',');
        toks.push_back(trim(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
    } else {
      toks = split_whitespace(body);
    }
    if (toks.size() != 3 && toks.size() != 6) {
      format_error(what, line.number, "expected 3 or 6 values, got " + std::to_string(toks.size()));
    }
    if (width == 0) width = toks.size();
    if (toks.size() != width) format_error(what, line.number, "mixed 3- and 6-value lines");
    double v[6];
    for (std::size_t t = 0; t < toks.size(); ++t) {
      const auto value = to_real(toks[t]);
      if (!value) format_error(what, line.number, "non-numeric token '" + std::string(toks[t]) + "'");
      v[t] = *value;
    }
    cloud.points.push_back({v[0], v[1], v[2]});
    if (width == 6) normals.push_back({v[3], v[4], v[5]});
  }
  if (cloud.points.empty()) format_error(what, 1, "no points");
  if (expected_points && cloud.points.size() != *expected_points) {
    format_error(what, 1, "expected " + std::to_string(*expected_points) + " points, found " +
                              std::to_string(cloud.points.size()));
  }
  if (width == 6) cloud.normals = std::move(normals);
  return cloud;
}

PointCloud parse_xyz(const std::filesystem::path& path, std::optional<std::size_t> expected_points) {
  return parse_xyz_text(read_text(path), expected_points, path.stem().string());
}

std::string format_xyz_text(const PointCloud& cloud) {
  std::string out;
  char buf[128];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    int n = std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g", p[0], p[1], p[2]);
    out.append(buf, static_cast<std::size_t>(n));
    if (cloud.normals) {
      const auto& q = (*cloud.normals)[i];
      n = std::snprintf(buf, sizeof buf, ",%.9g,%.9g,%.9g", q[0], q[1], q[2]);
      out.append(buf, static_cast<std::size_t>(n));
    }
    out += '\n';
  }
  return out;
}

void write_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << format_xyz_text(cloud);
}

PointCloud load_cloud(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".off" ? parse_off(path) : parse_xyz(path);
}

PointCloud resample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  cloud.validate();
  if (n == 0) fail(ErrorCode::InvalidInput, "resample target must be positive");
  PointCloud out;
  out.id = cloud.id;
  std::vector<std::size_t> picks;
  if (cloud.size() > n) {
    picks = farthest_point_sample(cloud.points, n, seed);
  } else {
    picks.resize(cloud.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
    while (picks.size() < n) picks.push_back(pick(rng));
  }
  out.points.reserve(n);
  for (auto i : picks) out.points.push_back(cloud.points[i]);
  if (cloud.normals) {
    out.normals.emplace();
    for (auto i : picks) out.normals->push_back((*cloud.normals)[i]);
  }
  return out;
}

std::string_view to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Cube: return "cube";
    case PrimitiveKind::Cylinder: return "cylinder";
    case PrimitiveKind::Cone: return "cone";
    case PrimitiveKind::Torus: return "torus";
  }
  return "sphere";
}

PrimitiveKind primitive_from_string(std::string_view name) {
  for (auto k : kAllPrimitives) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorCode::ConfigError, "unknown primitive '" + std::string(name) + "'");
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec3 on_disc(std::mt19937_64& rng, double radius, double z) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = radius * std::sqrt(u(rng));
  const double t = kTwoPi * u(rng);
  return {r * std::cos(t), r * std::sin(t), z};
}

Vec3 sample_surface(PrimitiveKind kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (kind) {
    case PrimitiveKind::Sphere: {
      const double z = 2.0 * u(rng) - 1.0;
      const double t = kTwoPi * u(rng);
      const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
      return {rxy * std::cos(t), rxy * std::sin(t), z};
    }
    case PrimitiveKind::Cube: {
      const int face = static_cast<int>(std::min(5.0, std::floor(6.0 * u(rng))));
      const double a = u(rng) - 0.5;
      const double b = u(rng) - 0.5;
      const double side = face % 2 == 0 ? 0.5 : -0.5;
      switch (face / 2) {
        case 0: return {side, a, b};
        case 1: return {a, side, b};
        default: return {a, b, side};
      }
    }
    case PrimitiveKind::Cylinder: {
      constexpr double r = 0.5;
      const double lateral = kTwoPi * r;  // height 1
      const double caps = 2.0 * std::numbers::pi * r * r;
      const double pick = u(rng) * (lateral + caps);
      if (pick < lateral) {
        const double t = kTwoPi * u(rng);
        return {r * std::cos(t), r * std::sin(t), u(rng) - 0.5};
      }
      return on_disc(rng, r, pick < lateral + caps / 2.0 ? 0.5 : -0.5);
    }
    case PrimitiveKind::Cone: {
      constexpr double r = 0.5, h = 1.0;
      const double slant = std::sqrt(r * r + h * h);
      const double lateral = std::numbers::pi * r * slant;
      const double base = std::numbers::pi * r * r;
      if (u(rng) * (lateral + base) < lateral) {
        const double s = std::sqrt(u(rng));  // fraction of the way from apex to rim
        const double t = kTwoPi * u(rng);
        return {r * s * std::cos(t), r * s * std::sin(t), 0.5 - h * s};
      }
      return on_disc(rng, r, -0.5);
    }
    case PrimitiveKind::Torus: {
      constexpr double big = 0.35, small = 0.15;
      double tube = 0.0;
      // Area element scales with (big + small cos tube).
      for (;;) {
        tube = kTwoPi * u(rng);
        if (u(rng) * (big + small) <= big + small * std::cos(tube)) break;
      }
      const double around = kTwoPi * u(rng);
      const double ring = big + small * std::cos(tube);
      return {ring * std::cos(around), ring * std::sin(around), small * std::sin(tube)};
    }
  }
  return {0.0, 0.0, 0.0};
}

}  // namespace

PointCloud synth_primitive(PrimitiveKind kind, std::size_t n, double noise_sigma,
                           std::uint64_t seed) {
  if (n < 16) fail(ErrorCode::InvalidInput, "synthetic clouds need at least 16 points");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    fail(ErrorCode::InvalidInput, "noise sigma must be finite and non-negative");
  }
  std::mt19937_64 rng(seed);
  PointCloud cloud;
  cloud.id = std::string(to_string(kind)) + "-" + std::to_string(seed);
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) cloud.points.push_back(sample_surface(kind, rng));
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& p : cloud.points) {
      for (auto& c : p) c += noise(rng);
    }
  }
  return cloud;
}

std::string_view to_string(Split split) { return split == Split::Support ? "support" : "test"; }

std::vector<ManifestEntry> DatasetManifest::split(Split which) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [which](const ManifestEntry& e) { return e.split == which; });
  return out;
}

ClassCatalog DatasetManifest::catalog() const {
  std::set<std::string> names;
  for (const auto& e : entries) names.insert(e.label);
  return ClassCatalog(std::vector<std::string>(names.begin(), names.end()));
}

DatasetManifest parse_manifest_text(std::string_view text, const std::filesystem::path& base_dir) {
  DatasetManifest manifest;
  std::set<std::string> ids;
  for (const auto& line : split_lines(text)) {
    const auto body = trim(line.text);
    if (body.empty()) continue;
    ManifestEntry entry;
    try {
      const auto j = nlohmann::json::parse(body);
      entry.id = j.at("id").get<std::string>();
      entry.path = j.at("path").get<std::string>();
      entry.label = j.at("label").get<std::string>();
      const auto split = j.at("split").get<std::string>();
      if (split == "support") {
        entry.split = Split::Support;
      } else if (split == "test") {
        entry.split = Split::Test;
      } else {
        format_error("manifest", line.number, "split must be 'support' or 'test'");
      }
    } catch (const nlohmann::json::exception& e) {
      format_error("manifest", line.number, e.what());
    }
    if (entry.id.empty() || entry.label.empty()) format_error("manifest", line.number, "empty id or label");
    if (!ids.insert(entry.id).second) format_error("manifest", line.number, "duplicate id '" + entry.id + "'");
    if (entry.path.is_relative() && !base_dir.empty()) entry.path = base_dir / entry.path;
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest_text(read_text(path), path.parent_path());
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["path"] = e.path.generic_string();
    j["label"] = e.label;
    j["split"] = std::string(to_string(e.split));
    out << j.dump() << '\n';
  }
}

}  // namespace tfpc

#include "tfpc/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "tfpc/error.hpp"

namespace tfpc {

std::string_view to_string(FusionMode mode) {
  return mode == FusionMode::Feature ? "feature" : "score";
}

std::string_view to_string(Branch branch) {
  switch (branch) {
    case Branch::Fused: return "fused";
    case Branch::Geometric: return "geo";
    case Branch::Semantic: return "sem";
  }
  return "fused";
}

std::string_view to_string(KeySelection selection) {
  switch (selection) {
    case KeySelection::MffCentroid: return "mff";
    case KeySelection::MffNearest: return "mff-nearest";
    case KeySelection::Random: return "random";
  }
  return "mff";
}

FusionMode fusion_mode_from_string(std::string_view s) {
  if (s == "feature") return FusionMode::Feature;
  if (s == "score") return FusionMode::Score;
  fail(ErrorCode::ConfigError, "unknown fusion mode '" + std::string(s) + "'");
}

Branch branch_from_string(std::string_view s) {
  if (s == "fused") return Branch::Fused;
  if (s == "geo") return Branch::Geometric;
  if (s == "sem") return Branch::Semantic;
  fail(ErrorCode::ConfigError, "unknown branch '" + std::string(s) + "'");
}

KeySelection key_selection_from_string(std::string_view s) {
  if (s == "mff") return KeySelection::MffCentroid;
  if (s == "mff-nearest") return KeySelection::MffNearest;
  if (s == "random") return KeySelection::Random;
  fail(ErrorCode::ConfigError, "unknown key selection '" + std::string(s) + "'");
}

namespace {

std::size_t parse_count(std::string_view s, std::string_view what) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    fail(ErrorCode::ConfigError,
         "bad " + std::string(what) + " '" + std::string(s) + "' in stage list");
  }
  return value;
}

}  // namespace

std::vector<Stage> parse_stages(std::string_view text) {
  std::vector<Stage> stages;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) {
      fail(ErrorCode::ConfigError, "stage '" + std::string(item) + "' is not points:k");
    }
    stages.push_back({parse_count(item.substr(0, colon), "point count"),
                      parse_count(item.substr(colon + 1), "neighbor count")});
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (stages.empty()) fail(ErrorCode::ConfigError, "empty stage list");
  return stages;
}

std::string format_stages(const std::vector<Stage>& stages) {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(stages[i].point_count) + ":" + std::to_string(stages[i].neighbor_k);
  }
  return out;
}

void PipelineConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorCode::ConfigError, m); };
  if (!(alpha >= 0.0 && alpha <= 1.0)) bad("alpha must lie in [0, 1]");
  if (!(gamma > 0.0)) bad("gamma must be positive");
  if (!(lambda_ensemble >= 0.0 && lambda_ensemble <= 1.0)) bad("lambda must lie in [0, 1]");
  if (pose_dim <= 0 || pose_dim % 6 != 0) bad("pose_dim must be a positive multiple of 6");
  if (!(pose_alpha > 0.0) || !(pose_beta > 0.0)) bad("pose_alpha and pose_beta must be positive");
  if (stages.empty()) bad("at least one stage is required");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].point_count == 0) bad("stage point count must be positive");
    if (stages[i].neighbor_k < 3) bad("every stage needs neighbor_k >= 3");
    if (stages[i].neighbor_k > stages[i].point_count && i == 0) {
      bad("first stage neighbor_k exceeds its point count");
    }
    if (i > 0 && stages[i].point_count >= stages[i - 1].point_count) {
      bad("stage point counts must strictly decrease");
    }
    if (i > 0 && stages[i].neighbor_k > stages[i - 1].point_count) {
      bad("stage neighbor_k exceeds the previous stage's point count");
    }
  }
  if (use_gfe && stages.front().point_count < 3) bad("GFE needs at least 3 sampled points");
  if (k_shot && *k_shot == 0) bad("k_shot must be positive");
  if (points < stages.front().point_count) bad("points per cloud is below the first stage size");
}

std::uint64_t PipelineConfig::digest() const {
  std::ostringstream canon;
  char buf[64];
  auto real = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    canon << buf << ';';
  };
  canon << "tfpc-encoder-v1;";
  real(alpha);
  canon << pose_dim << ';';
  real(pose_alpha);
  real(pose_beta);
  canon << format_stages(stages) << ';' << seed << ';' << to_string(fusion_mode) << ';'
        << points << ';' << (use_gfe ? 1 : 0) << ';' << to_string(branch) << ';';
  const std::string s = canon.str();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string PipelineConfig::digest_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest()));
  return buf;
}

PipelineConfig PipelineConfig::desk_scale() {
  PipelineConfig c;
  c.stages = {{64, 8}, {32, 8}};
  c.points = 256;
  // 256-point clouds alias the default 1000x scale; 10 keeps the encoding smooth.
  c.pose_alpha = 10.0;
  return c;
}

}  // namespace tfpc

namespace tfpc {

nlohmann::ordered_json config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["lambda"] = c.lambda_ensemble;
  j["pose_dim"] = c.pose_dim;
  j["pose_alpha"] = c.pose_alpha;
  j["pose_beta"] = c.pose_beta;
  j["stages"] = format_stages(c.stages);
  j["k_shot"] = c.k_shot ? nlohmann::ordered_json(*c.k_shot) : nlohmann::ordered_json(nullptr);
  j["seed"] = c.seed;
  j["fusion_mode"] = std::string(to_string(c.fusion_mode));
  j["points"] = c.points;
  j["gfe"] = c.use_gfe;
  j["branch"] = std::string(to_string(c.branch));
  j["selection"] = std::string(to_string(c.selection));
  return j;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.gamma = j.value("gamma", c.gamma);
    c.lambda_ensemble = j.value("lambda", c.lambda_ensemble);
    c.pose_dim = j.value("pose_dim", c.pose_dim);
    c.pose_alpha = j.value("pose_alpha", c.pose_alpha);
    c.pose_beta = j.value("pose_beta", c.pose_beta);
    if (j.contains("stages")) c.stages = parse_stages(j.at("stages").get<std::string>());
    if (j.contains("k_shot") && !j.at("k_shot").is_null()) {
      c.k_shot = j.at("k_shot").get<std::size_t>();
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("fusion_mode")) {
      c.fusion_mode = fusion_mode_from_string(j.at("fusion_mode").get<std::string>());
    }
    c.points = j.value("points", c.points);
    c.use_gfe = j.value("gfe", c.use_gfe);
    if (j.contains("branch")) c.branch = branch_from_string(j.at("branch").get<std::string>());
    if (j.contains("selection")) {
      c.selection = key_selection_from_string(j.at("selection").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("bad config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace tfpc

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "tfpc/dataset_io.hpp"
#include "tfpc/geometry.hpp"

using namespace tfpc;
namespace fs = std::filesystem;

namespace {

std::optional<Error> error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  return std::nullopt;
}

ErrorCode code_of(auto&& fn) {
  const auto e = error_of(fn);
  REQUIRE(e.has_value());
  return e->code();
}

constexpr const char* kMinimalOff = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";

fs::path tmp_dir() {
  const fs::path d = fs::path(TFPC_TEST_TMP) / "dataset_io";
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("dataset_io") {

TEST_CASE("OFF header variants") {
  const auto a = parse_off_text(kMinimalOff);
  REQUIRE(a.size() == 3);
  CHECK(a.points[1] == Vec3{1, 0, 0});
  CHECK(a.points[2] == Vec3{0, 1, 0});
  CHECK(parse_off_text("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").points == a.points);
  CHECK(parse_off_text("OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").points == a.points);
  CHECK(parse_off_text("# mesh\nOFF\n\n# counts\n3 0 0\n0 0 0\n1 0 0 # tail\n0 1 0\n").points ==
        a.points);
  CHECK(parse_off_text("OFF\r\n3 1 0\r\n0 0 0\r\n1 0 0\r\n0 1 0\r\n3 0 1 2 255 0 0\r\n").points ==
        a.points);
}

TEST_CASE("OFF errors carry line numbers") {
  const auto e = error_of([] { parse_off_text("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n"); });
  REQUIRE(e);
  CHECK(e->code() == ErrorCode::FormatError);

  const auto bad_vertex = error_of([] { parse_off_text("OFF\n3 0 0\n0 0 0\n1 x 0\n0 1 0\n"); });
  REQUIRE(bad_vertex);
  CHECK(bad_vertex->code() == ErrorCode::FormatError);
  CHECK(bad_vertex->line() == 4);

  CHECK(code_of([] { parse_off_text("COFF\n3 0 0\n"); }) == ErrorCode::FormatError);
  CHECK(code_of([] { parse_off_text("OFF\n3 1\n"); }) == ErrorCode::FormatError);
  CHECK(code_of([] { parse_off_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"); }) ==
        ErrorCode::FormatError);
  CHECK(code_of([] { parse_off_text("OFF\n3 0 0\n0 0 0\n1 0 0\n0 1 0\n9 9 9\n"); }) ==
        ErrorCode::FormatError);
  CHECK(code_of([] { parse_off_text(""); }) == ErrorCode::FormatError);
}

TEST_CASE("xyz examples") {
  const auto a = parse_xyz_text("0,0,0\n1,1,1\n");
  CHECK(a.size() == 2);
  CHECK_FALSE(a.normals.has_value());
  const auto b = parse_xyz_text("0,0,1,0,0,1\n");
  REQUIRE(b.normals.has_value());
  CHECK((*b.normals)[0] == Vec3{0, 0, 1});
  CHECK(parse_xyz_text("0 0 0\n1\t1 1\n").points == a.points);

  CHECK(code_of([] { parse_xyz_text("0,0,0\n1,1,1,0,0,1\n"); }) == ErrorCode::FormatError);
  CHECK(code_of([] { parse_xyz_text("0,0\n"); }) == ErrorCode::FormatError);
  const auto e = error_of([] { parse_xyz_text("0,0,0\n1,abc,1\n"); });
  REQUIRE(e);
  CHECK(e->code() == ErrorCode::FormatError);
  CHECK(e->line() == 2);
  CHECK(code_of([] { parse_xyz_text("0,0,nan\n"); }) == ErrorCode::FormatError);
  CHECK(code_of([] { parse_xyz_text("0,0,0\n", 2); }) == ErrorCode::FormatError);
}

TEST_CASE("xyz round trip within float printing precision") {
  std::mt19937_64 rng(163);
  PointCloud c{oracle::random_points(rng, 50, 3.0), std::vector<Vec3>(50, Vec3{0, 0, 1}), "x"};
  const auto back = parse_xyz_text(format_xyz_text(c));
  REQUIRE(back.size() == 50);
  REQUIRE(back.normals.has_value());
  for (std::size_t i = 0; i < 50; ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(back.points[i][k] - c.points[i][k]) <= 5e-9 * std::abs(c.points[i][k]));
  const auto path = tmp_dir() / "c.xyz";
  write_xyz(c, path);
  CHECK(load_cloud(path).points == back.points);
}

TEST_CASE("load_cloud dispatches on extension") {
  const auto path = tmp_dir() / "tri.off";
  std::ofstream(path) << kMinimalOff;
  CHECK(load_cloud(path).size() == 3);
  CHECK(code_of([] { load_cloud(tmp_dir() / "missing.xyz"); }) == ErrorCode::IoError);
}

TEST_CASE("resample") {
  std::mt19937_64 rng(167);
  const PointCloud ten{oracle::random_points(rng, 10), std::nullopt, "t"};
  const auto same = resample(ten, 10, 0);
  CHECK(std::multiset<Vec3>(same.points.begin(), same.points.end()) ==
        std::multiset<Vec3>(ten.points.begin(), ten.points.end()));

  const auto down = resample(ten, 3, 4);
  const auto want = oracle::fps(ten.points, 3, 4);
  for (std::size_t i = 0; i < 3; ++i) CHECK(down.points[i] == ten.points[want[i]]);
  CHECK(resample(ten, 3, 4).points == down.points);

  const PointCloud two{{{0, 0, 0}, {1, 2, 3}}, std::nullopt, "two"};
  const auto up = resample(two, 5, 9);
  CHECK(up.size() == 5);
  for (const auto& p : up.points) CHECK((p == two.points[0] || p == two.points[1]));
  CHECK(code_of([] { resample(PointCloud{}, 5, 0); }) == ErrorCode::InvalidInput);
}

TEST_CASE("synthetic primitives") {
  const auto s = synth_primitive(PrimitiveKind::Sphere, 500, 0.0, 1);
  for (const auto& p : s.points) CHECK(std::abs(norm(p) - 1.0) <= 1e-9);
  const auto c = synth_primitive(PrimitiveKind::Cube, 500, 0.0, 1);
  for (const auto& p : c.points) {
    const double m = std::max({std::abs(p[0]), std::abs(p[1]), std::abs(p[2])});
    CHECK(std::abs(m - 0.5) <= 1e-9);
  }
  for (PrimitiveKind k : kAllPrimitives) {
    const auto a = synth_primitive(k, 64, 0.02, 7);
    CHECK(a.size() == 64);
    CHECK(synth_primitive(k, 64, 0.02, 7).points == a.points);
    CHECK_FALSE(synth_primitive(k, 64, 0.02, 8).points == a.points);
    CHECK(primitive_from_string(to_string(k)) == k);
  }
  CHECK(code_of([] { primitive_from_string("pyramid"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { synth_primitive(PrimitiveKind::Cone, 8, 0, 0); }) == ErrorCode::InvalidInput);
}

TEST_CASE("manifest parsing") {
  const std::string text =
      "{\"id\":\"a\",\"path\":\"x/a.xyz\",\"label\":\"cube\",\"split\":\"support\"}\n"
      "\n"
      "{\"id\":\"b\",\"path\":\"/abs/b.off\",\"label\":\"cone\",\"split\":\"test\"}\n";
  const auto m = parse_manifest_text(text, "/data");
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].path == fs::path("/data/x/a.xyz"));
  CHECK(m.entries[1].path == fs::path("/abs/b.off"));
  CHECK(m.split(Split::Test).size() == 1);
  CHECK(m.catalog().names() == std::vector<std::string>{"cone", "cube"});

  const auto dup = error_of([] {
    parse_manifest_text(
        "{\"id\":\"a\",\"path\":\"p\",\"label\":\"l\",\"split\":\"test\"}\n"
        "{\"id\":\"a\",\"path\":\"q\",\"label\":\"l\",\"split\":\"test\"}\n");
  });
  REQUIRE(dup);
  CHECK(dup->code() == ErrorCode::FormatError);
  CHECK(dup->line() == 2);
  CHECK(code_of([] { parse_manifest_text("{\"id\":\"a\"}\n"); }) == ErrorCode::FormatError);
  CHECK(code_of([] { parse_manifest_text("not json\n"); }) == ErrorCode::FormatError);
  CHECK(code_of([] {
          parse_manifest_text("{\"id\":\"a\",\"path\":\"p\",\"label\":\"l\",\"split\":\"train\"}\n");
        }) == ErrorCode::FormatError);

  const auto path = tmp_dir() / "m.jsonl";
  write_manifest(m, path);
  const auto back = read_manifest(path);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].id == "a");
  CHECK(back.entries[1].path == fs::path("/abs/b.off"));
}

}  // TEST_SUITE

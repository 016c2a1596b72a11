#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tfpc/core.hpp"

namespace tfpc {

/// Vertices of an OFF mesh; faces are checked for consistency then dropped.
/// Accepts "OFF" alone on the first line or followed by the counts
/// ("OFF 3 1 0" and the ModelNet form "OFF3 1 0"). '#' starts a comment.
PointCloud parse_off_text(std::string_view text, const std::string& id = {});
PointCloud parse_off(const std::filesystem::path& path);

/// x,y,z[,nx,ny,nz] per line, comma or whitespace separated. All lines must
/// carry the same token count.
PointCloud parse_xyz_text(std::string_view text,
                          std::optional<std::size_t> expected_points = std::nullopt,
                          const std::string& id = {});
PointCloud parse_xyz(const std::filesystem::path& path,
                     std::optional<std::size_t> expected_points = std::nullopt);

/// Comma-separated with 9 significant digits (float round-trip precision).
std::string format_xyz_text(const PointCloud& cloud);
void write_xyz(const PointCloud& cloud, const std::filesystem::path& path);

/// Loads .off through parse_off and anything else as xyz text.
PointCloud load_cloud(const std::filesystem::path& path);

/// Exactly n points: FPS when downsampling, seeded duplicates when upsampling.
PointCloud resample(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

enum class PrimitiveKind { Sphere, Cube, Cylinder, Cone, Torus };

inline constexpr PrimitiveKind kAllPrimitives[] = {
    PrimitiveKind::Sphere, PrimitiveKind::Cube, PrimitiveKind::Cylinder,
    PrimitiveKind::Cone, PrimitiveKind::Torus};

std::string_view to_string(PrimitiveKind kind);
PrimitiveKind primitive_from_string(std::string_view name);

/// Area-uniform surface samples of a unit primitive plus isotropic Gaussian
/// noise. Sphere: radius 1. Cube: side 1. Cylinder: radius 0.5, height 1.
/// Cone: base radius 0.5, height 1. Torus: radii 0.35 / 0.15. All closed
/// surfaces include their caps.
PointCloud synth_primitive(PrimitiveKind kind, std::size_t n, double noise_sigma,
                           std::uint64_t seed);

enum class Split { Support, Test };
std::string_view to_string(Split split);

struct ManifestEntry {
  std::string id;
  std::filesystem::path path;
  std::string label;
  Split split = Split::Support;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(Split which) const;
  /// Class names sorted lexicographically.
  ClassCatalog catalog() const;
};

/// JSON lines: {"id", "path", "label", "split"}. Relative paths resolve
/// against the manifest's directory.
DatasetManifest parse_manifest_text(std::string_view text,
                                    const std::filesystem::path& base_dir = {});
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace tfpc

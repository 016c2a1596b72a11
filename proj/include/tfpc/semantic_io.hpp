#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tfpc/core.hpp"

namespace tfpc {

// SEMB layout, all little-endian, no padding:
//   "SEMB" | u16 version=1 | u16 flags=0 | u32 count | u32 dim
//   count x ( u16 id_len | id bytes (UTF-8) | dim x f32 )
inline constexpr std::size_t kSembHeaderSize = 16;
inline constexpr std::uint16_t kSembVersion = 1;

struct EmbeddingRecord {
  std::string id;
  std::vector<float> vector;
  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

struct EmbeddingFile {
  std::uint32_t dim = 0;
  std::vector<EmbeddingRecord> records;
  friend bool operator==(const EmbeddingFile&, const EmbeddingFile&) = default;
};

/// Strict decoder. Any deviation from the layout is a FormatError.
EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes);

/// Throws InvalidInput on mixed dimensions, duplicate ids, oversized ids or
/// non-finite values.
std::vector<std::uint8_t> encode_embeddings(std::span<const EmbeddingRecord> records);

EmbeddingFile read_embedding_file(const std::filesystem::path& path);
void write_embedding_file(std::span<const EmbeddingRecord> records,
                          const std::filesystem::path& path);

/// Quantizes a double vector for storage.
EmbeddingRecord make_record(std::string id, std::span<const double> values);

/// Read-only store of per-sample semantic embeddings and, optionally,
/// per-class text embeddings (ids equal class names).
class SemanticProvider {
 public:
  SemanticProvider() = default;
  explicit SemanticProvider(const EmbeddingFile& samples,
                            std::optional<EmbeddingFile> class_text = std::nullopt);

  static SemanticProvider load(const std::filesystem::path& samples,
                               const std::optional<std::filesystem::path>& class_text);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return samples_.size(); }
  bool contains(const std::string& id) const { return samples_.count(id) != 0; }
  bool has_class_text() const { return !class_text_.empty(); }

  /// Stored vector, l2-normalized. Throws MissingEmbedding for unknown ids.
  Normalized semantic_feature(const std::string& id) const;

  /// Unit class-text rows in catalog order. Throws ZeroShotUnavailable when
  /// no class-text file was loaded or a class is absent from it.
  Matrix class_text_matrix(const ClassCatalog& catalog) const;

 private:
  std::size_t dim_ = 0;
  std::map<std::string, FeatureVector> samples_;
  std::map<std::string, FeatureVector> class_text_;
};

}  // namespace tfpc

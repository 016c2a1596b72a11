#include "tfpc/semantic_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <set>

namespace tfpc {

static_assert(std::numeric_limits<float>::is_iec559, "SEMB stores IEEE-754 binary32");

namespace {

[[noreturn]] void format_error(const std::string& message) {
  fail(ErrorCode::FormatError, "SEMB: " + message);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      format_error(std::string("truncated while reading ") + what + " at byte " +
                   std::to_string(pos_));
    }
  }

  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

bool valid_utf8(std::span<const std::uint8_t> s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const std::uint8_t c = s[i];
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      len = 2;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (s[i + k] & 0x3f);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) {
      return false;
    }
    i += len;
  }
  return true;
}

}  // namespace

EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4, "magic");
  if (std::memcmp(magic.data(), "SEMB", 4) != 0) format_error("bad magic");
  const auto version = in.u16("version");
  if (version != kSembVersion) format_error("unsupported version " + std::to_string(version));
  const auto flags = in.u16("flags");
  if (flags != 0) format_error("non-zero flags " + std::to_string(flags));
  const auto count = in.u32("count");
  const auto dim = in.u32("dim");
  if (count > 0 && dim == 0) format_error("zero dimension with non-empty record list");

  // Each record occupies at least 2 + 4*dim bytes; reject impossible counts
  // before allocating.
  const std::uint64_t min_record = 2 + 4ull * dim;
  if (static_cast<std::uint64_t>(count) * min_record > in.remaining()) {
    format_error("declared count " + std::to_string(count) + " exceeds file size");
  }

  EmbeddingFile file;
  file.dim = dim;
  file.records.reserve(count);
  std::set<std::string> seen;
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto id_len = in.u16("id length");
    const auto id_bytes = in.take(id_len, "id");
    if (!valid_utf8(id_bytes)) format_error("record " + std::to_string(r) + " id is not UTF-8");
    EmbeddingRecord rec;
    rec.id.assign(reinterpret_cast<const char*>(id_bytes.data()), id_bytes.size());
    if (!seen.insert(rec.id).second) format_error("duplicate id '" + rec.id + "'");
    rec.vector.resize(dim);
    for (std::uint32_t d = 0; d < dim; ++d) {
      const float v = in.f32("vector");
      if (!std::isfinite(v)) {
        format_error("non-finite value in record '" + rec.id + "'");
      }
      rec.vector[d] = v;
    }
    file.records.push_back(std::move(rec));
  }
  if (in.remaining() != 0) {
    format_error(std::to_string(in.remaining()) + " trailing bytes after last record");
  }
  return file;
}

std::vector<std::uint8_t> encode_embeddings(std::span<const EmbeddingRecord> records) {
  const std::size_t dim = records.empty() ? 0 : records.front().vector.size();
  if (records.size() > 0xffffffffu) fail(ErrorCode::InvalidInput, "too many records");
  std::set<std::string_view> seen;
  for (const auto& r : records) {
    if (r.vector.size() != dim) {
      fail(ErrorCode::InvalidInput, "record '" + r.id + "' has dimension " +
                                        std::to_string(r.vector.size()) + ", expected " +
                                        std::to_string(dim));
    }
    if (r.id.size() > 0xffff) fail(ErrorCode::InvalidInput, "id longer than 65535 bytes");
    if (!valid_utf8({reinterpret_cast<const std::uint8_t*>(r.id.data()), r.id.size()})) {
      fail(ErrorCode::InvalidInput, "id is not valid UTF-8");
    }
    if (!seen.insert(r.id).second) fail(ErrorCode::InvalidInput, "duplicate id '" + r.id + "'");
    for (float v : r.vector) {
      if (!std::isfinite(v)) fail(ErrorCode::InvalidInput, "non-finite value in '" + r.id + "'");
    }
  }
  if (!records.empty() && dim == 0) fail(ErrorCode::InvalidInput, "records have zero dimension");

  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'S', 'E', 'M', 'B'});
  put_u16(out, kSembVersion);
  put_u16(out, 0);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  put_u32(out, static_cast<std::uint32_t>(dim));
  for (const auto& r : records) {
    put_u16(out, static_cast<std::uint16_t>(r.id.size()));
    out.insert(out.end(), r.id.begin(), r.id.end());
    for (float v : r.vector) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

EmbeddingFile read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_embeddings(bytes);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

void write_embedding_file(std::span<const EmbeddingRecord> records,
                          const std::filesystem::path& path) {
  const auto bytes = encode_embeddings(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

EmbeddingRecord make_record(std::string id, std::span<const double> values) {
  EmbeddingRecord r{std::move(id), {}};
  r.vector.reserve(values.size());
  for (double v : values) r.vector.push_back(static_cast<float>(v));
  return r;
}

namespace {

std::map<std::string, FeatureVector> to_map(const EmbeddingFile& file) {
  std::map<std::string, FeatureVector> out;
  for (const auto& r : file.records) {
    out.emplace(r.id, FeatureVector(std::vector<double>(r.vector.begin(), r.vector.end())));
  }
  return out;
}

}  // namespace

SemanticProvider::SemanticProvider(const EmbeddingFile& samples,
                                   std::optional<EmbeddingFile> class_text)
    : dim_(samples.dim), samples_(to_map(samples)) {
  if (class_text) {
    if (!class_text->records.empty() && !samples.records.empty() &&
        class_text->dim != samples.dim) {
      fail(ErrorCode::InvalidInput, "class-text dimension " + std::to_string(class_text->dim) +
                                        " differs from sample dimension " +
                                        std::to_string(samples.dim));
    }
    class_text_ = to_map(*class_text);
    if (dim_ == 0) dim_ = class_text->dim;
  }
}

SemanticProvider SemanticProvider::load(
    const std::filesystem::path& samples,
    const std::optional<std::filesystem::path>& class_text) {
  std::optional<EmbeddingFile> text;
  if (class_text) text = read_embedding_file(*class_text);
  return SemanticProvider(read_embedding_file(samples), std::move(text));
}

Normalized SemanticProvider::semantic_feature(const std::string& id) const {
  auto it = samples_.find(id);
  if (it == samples_.end()) {
    fail(ErrorCode::MissingEmbedding, "no semantic embedding for '" + id + "'");
  }
  return l2_normalize(it->second);
}

Matrix SemanticProvider::class_text_matrix(const ClassCatalog& catalog) const {
  if (class_text_.empty()) {
    fail(ErrorCode::ZeroShotUnavailable, "no class-text embeddings loaded");
  }
  Matrix out;
  for (const auto& name : catalog.names()) {
    auto it = class_text_.find(name);
    if (it == class_text_.end()) {
      fail(ErrorCode::ZeroShotUnavailable, "class '" + name + "' has no text embedding");
    }
    auto unit = l2_normalize(it->second);
    if (unit.zero_norm) {
      fail(ErrorCode::ZeroShotUnavailable, "class '" + name + "' text embedding is zero");
    }
    out.append_row(unit.vector.values());
  }
  return out;
}

}  // namespace tfpc

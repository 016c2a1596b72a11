#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tfpc {

enum class ErrorCode {
  InvalidInput,
  ConfigError,
  FormatError,
  MissingEmbedding,
  DegenerateFeature,
  MemoryMismatch,
  ZeroShotUnavailable,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. The code identifies the failure class;
/// parsers additionally attach the 1-based line of the offending input.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace tfpc

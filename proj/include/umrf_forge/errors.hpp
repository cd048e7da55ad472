#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace umrf_forge {

// Error categories used across the library. Domain results that are data
// (graph Violations, per-item eval failures) do not throw; these are for
// unusable inputs and broken environments.
enum class Errc {
  syntax,       // malformed JSON / text that cannot be lexed
  schema,       // well-formed input that does not match the documented schema
  argument,     // caller violated a precondition
  config,       // missing credential, bad lexicon, unusable settings
  provider,     // completion/embedding backend failed after retries
  budget,       // prompt exceeds the provider context budget
  io,           // file system failure
  correlation,  // undefined statistic (constant series)
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::syntax: return "syntax";
    case Errc::schema: return "schema";
    case Errc::argument: return "argument";
    case Errc::config: return "config";
    case Errc::provider: return "provider";
    case Errc::budget: return "budget";
    case Errc::io: return "io";
    case Errc::correlation: return "correlation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  Error(Errc code, std::string message, std::string path)
      : std::runtime_error(std::move(message)), code_(code), path_(std::move(path)) {}

  Errc code() const { return code_; }

  // JSON pointer-ish path of the offending field, when known.
  const std::string& path() const { return path_; }

  // Byte offset into the source text for syntax errors; npos when unknown.
  std::size_t byte_offset() const { return byte_offset_; }
  Error& with_offset(std::size_t off) {
    byte_offset_ = off;
    return *this;
  }

 private:
  Errc code_;
  std::string path_;
  std::size_t byte_offset_ = static_cast<std::size_t>(-1);
};

}  // namespace umrf_forge

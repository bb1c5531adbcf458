#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "maskdet/core/config.hpp"

namespace maskdet::cli {

/// "maskdet <version>" plus the git revision the tool was built from.
std::string version_string();
std::string git_revision();

/// FNV-1a (64 bit) over every regular file below `root` in path order: the
/// relative path, a NUL byte, then the file contents. `manifest.json` and
/// `.partial` files are skipped. Returned as 16 hex digits.
std::string dataset_fingerprint(const std::filesystem::path& root);

/// Config as a key -> canonical value object.
nlohmann::json config_json(const Config& config);

/// Common manifest skeleton: command, version, git revision.
nlohmann::json manifest_header(const std::string& command);

/// Wall-clock stopwatch for the manifest timing summary.
class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Creates `dir` and a `.partial` marker inside it; commit() removes the marker.
class PartialMarker {
 public:
  explicit PartialMarker(const std::filesystem::path& dir);
  void commit();

 private:
  std::filesystem::path marker_;
};

/// Pretty JSON written through a temporary sibling and renamed into place.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace maskdet::cli

#include "maskdet/cli/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <vector>

#include "maskdet/core/error.hpp"
#include "maskdet/core/keyvalue.hpp"

#ifndef MASKDET_VERSION
#define MASKDET_VERSION "0.0.0"
#endif
#ifndef MASKDET_GIT_REVISION
#define MASKDET_GIT_REVISION "unknown"
#endif

namespace maskdet::cli {

std::string version_string() { return std::string("maskdet ") + MASKDET_VERSION; }

std::string git_revision() { return MASKDET_GIT_REVISION; }

std::string dataset_fingerprint(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw InvalidInput("not a directory: " + root.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name == "manifest.json" || name == ".partial") continue;
    files.push_back(std::filesystem::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());

  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const char* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(data[i]);
      h *= 0x100000001b3ULL;
    }
  };
  std::vector<char> buf(1 << 16);
  for (const auto& rel : files) {
    const std::string name = rel.generic_string();
    mix(name.data(), name.size());
    mix("", 1);
    std::ifstream in(root / rel, std::ios::binary);
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      mix(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

nlohmann::json config_json(const Config& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& kv : parse_key_values(config.to_text())) j[kv.key] = kv.value;
  return j;
}

nlohmann::json manifest_header(const std::string& command) {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = version_string();
  j["git_revision"] = git_revision();
  return j;
}

PartialMarker::PartialMarker(const std::filesystem::path& dir) : marker_(dir / ".partial") {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InvalidInput("cannot create output directory " + dir.string() + ": " + ec.message());
  std::ofstream out(marker_);
  if (!out) throw InvalidInput("output directory is not writable: " + dir.string());
  out << "incomplete\n";
}

void PartialMarker::commit() { std::filesystem::remove(marker_); }

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".partial");
  write_text_file(tmp, j.dump(2) + "\n");
  std::filesystem::rename(tmp, path);
}

}  // namespace maskdet::cli

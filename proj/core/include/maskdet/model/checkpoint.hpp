#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "maskdet/model/network.hpp"

namespace maskdet::model {

/// Single-file archive: version tag, configuration text, named scalars and
/// named real arrays (stored as float64).
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::map<std::string, double> scalars;
  std::map<std::string, nn::Matrix<double>> arrays;

  /// Writes to `path` atomically (through a `.partial` sibling).
  void save(const std::filesystem::path& path) const;
  /// Throws ParseError on a malformed or foreign file.
  static Checkpoint load(const std::filesystem::path& path);

  Config config() const { return Config::from_text(config_text); }
  double scalar(const std::string& name) const;
};

/// Stores parameters under "param.<name>" and buffers under "buffer.<name>".
template <typename T>
void export_network(Network<T>& net, Checkpoint& ckpt);

/// Loads every parameter and buffer. Throws ShapeError listing each missing
/// array and each shape difference.
template <typename T>
void import_network(Network<T>& net, const Checkpoint& ckpt);

/// Network rebuilt from the checkpoint's own configuration.
template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt);

}  // namespace maskdet::model

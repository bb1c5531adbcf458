#pragma once

#include <optional>
#include <string>

#include "maskdet/core/config.hpp"
#include "maskdet/data/label.hpp"

namespace maskdet::eval {

enum class Difficulty { Easy = 0, Moderate = 1, Hard = 2 };

std::string to_string(Difficulty d);

/// True when the label passes the height, occlusion and truncation gates of
/// `level`. The gates nest, so Easy labels also meet Moderate and Hard.
bool meets(const ObjectLabel& label, Difficulty level, const DifficultyThresholds& thresholds = {});

/// Easiest difficulty the label meets; empty when it is ignored.
std::optional<Difficulty> difficulty_of(const ObjectLabel& label, const DifficultyThresholds& thresholds = {});

}  // namespace maskdet::eval

#include "maskdet/eval/difficulty.hpp"

namespace maskdet::eval {

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy:
      return "easy";
    case Difficulty::Moderate:
      return "moderate";
    case Difficulty::Hard:
      return "hard";
  }
  return "unknown";
}

bool meets(const ObjectLabel& label, Difficulty level, const DifficultyThresholds& t) {
  const auto i = static_cast<std::size_t>(level);
  return label.box2d.height() >= t.min_height[i] && label.occlusion_level >= 0 &&
         label.occlusion_level <= t.max_occlusion[i] && label.truncation <= t.max_truncation[i];
}

std::optional<Difficulty> difficulty_of(const ObjectLabel& label, const DifficultyThresholds& t) {
  for (Difficulty d : {Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard}) {
    if (meets(label, d, t)) return d;
  }
  return std::nullopt;
}

}  // namespace maskdet::eval

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "maskdet/core/geometry.hpp"
#include "maskdet/core/polygon.hpp"
#include "maskdet/data/sample.hpp"

namespace maskdet {

struct SizePrior {
  double h_mean = 1.53;
  double h_std = 0.08;
  double w_mean = 1.63;
  double w_std = 0.08;
  double l_mean = 3.88;
  double l_std = 0.25;
  bool operator==(const SizePrior&) const = default;
};

/// Parameters of the procedural street-scene generator.
struct SceneRecipe {
  std::uint64_t seed = 0;
  int image_height = 96;
  int image_width = 320;
  CameraIntrinsics camera{186.0, 186.0, 160.0, 44.0};
  double camera_height = 1.65;

  int min_objects = 2;
  int max_objects = 9;
  double depth_min = 5.0;
  double depth_max = 45.0;
  /// Dataset-wide maximum depth; the depth range must lie in (0, dataset_depth_max].
  double dataset_depth_max = 60.0;
  SizePrior car{};
  /// Probability that a car is aligned with the road (yaw near +-pi/2).
  double yaw_aligned_prob = 0.8;
  double yaw_jitter = 0.15;

  /// An object is occluded when at least this fraction of its silhouette is
  /// covered by nearer objects.
  double occlusion_threshold = 0.15;
  /// Objects covered beyond this fraction are removed from the scene.
  double max_coverage = 0.9;
  double min_box_height = 4.0;
  /// Expected band of the occluded-object share over many scenes.
  std::pair<double, double> occluded_share_band{0.20, 0.40};
  int max_attempts = 16;

  void validate() const;
  static SceneRecipe from_text(const std::string& text);
  static SceneRecipe from_file(const std::filesystem::path& path);
  std::string to_text() const;

  bool operator==(const SceneRecipe&) const = default;
};

/// Projected silhouette of a box: convex hull of its eight projected corners.
Polygon projected_silhouette(const Box3D& box, const CameraIntrinsics& intr);

/// Deterministic function of (recipe.seed, index). Objects stand on the ground
/// plane, are painted far-to-near and flagged occluded when their silhouette
/// coverage by nearer objects reaches recipe.occlusion_threshold.
/// Throws Error if no visible object could be placed within max_attempts.
Sample generate_scene(const SceneRecipe& recipe, std::uint64_t index);

/// Per-label silhouette coverage reported by the generator for the last scene
/// layout; exposed for tests. Order matches Sample::labels.
std::vector<double> scene_coverage(const SceneRecipe& recipe, std::uint64_t index);

}  // namespace maskdet

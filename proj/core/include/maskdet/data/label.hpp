#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maskdet/core/geometry.hpp"

namespace maskdet {

/// KITTI object classes. The detector itself only predicts Car; the other
/// classes round-trip through the parser untouched.
enum class Category { Car, Van, Truck, Pedestrian, PersonSitting, Cyclist, Tram, Misc, DontCare };

std::string to_string(Category c);
/// Throws ParseError on an unknown class name.
Category parse_category(const std::string& name);

struct ObjectLabel {
  Category category = Category::Car;
  /// In [0, 1]; -1 on DontCare regions and detector outputs.
  double truncation = 0.0;
  /// 0 visible, 1 partly, 2 largely occluded, 3 unknown; -1 on DontCare and detections.
  int occlusion_level = 0;
  double alpha = 0.0;
  Box2D box2d{};
  Box3D box3d{};
  std::optional<double> score;

  bool is_dont_care() const noexcept { return category == Category::DontCare; }
  bool operator==(const ObjectLabel&) const = default;
};

/// Binary occlusion target: 0 iff occlusion_level == 0. Level 3 ("unknown")
/// counts as occluded.
int occlusion_flag(const ObjectLabel& label) noexcept;

/// Parses one devkit label line:
///   type truncated occluded alpha x1 y1 x2 y2 h w l x y z rotation_y [score]
/// `line_number` is only used for error messages.
ObjectLabel parse_kitti_label(const std::string& line, std::size_t line_number = 0);

/// Canonical label line. Reals use the shortest round-trip representation, so
/// parse_kitti_label(serialize_kitti_label(l)) == l bit for bit.
std::string serialize_kitti_label(const ObjectLabel& label);

/// Parses every non-empty line of a label file.
std::vector<ObjectLabel> parse_kitti_label_file(const std::string& text);
std::string serialize_kitti_label_file(const std::vector<ObjectLabel>& labels);

/// Reduces the P2 row of a calibration file to pinhole intrinsics, folding the
/// stereo baseline term into cx: cx = P2[0,2] + P2[0,3] / P2[0,0].
CameraIntrinsics parse_kitti_calib(const std::string& text);

/// Writes a calibration file whose P2 row reproduces `intr` with a zero
/// baseline. P0, P1, P3 repeat P2 and rectification/velodyne rows are identity.
std::string serialize_kitti_calib(const CameraIntrinsics& intr);

}  // namespace maskdet

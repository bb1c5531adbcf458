#pragma once

#include <array>
#include <numbers>

#include <Eigen/Core>

namespace maskdet {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Pinhole camera. Coordinates follow the KITTI camera frame:
/// x right, y down, z forward; image u right, v down.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  /// Throws InvalidInput unless fx > 0 and fy > 0.
  static CameraIntrinsics make(double fx, double fy, double cx, double cy);
  void validate() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Axis-aligned pixel box; x1 < x2 and y1 < y2 for a valid box.
struct Box2D {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept;
  bool valid() const noexcept { return x1 < x2 && y1 < y2; }
  Box2D clipped(double image_width, double image_height) const noexcept;

  bool operator==(const Box2D&) const = default;
};

double box2d_iou(const Box2D& a, const Box2D& b) noexcept;

/// Yaw-rotated cuboid anchored at its bottom-center (KITTI convention).
/// (x, y, z) is the bottom-center in meters; the box spans [y - h, y]
/// vertically. theta is the rotation around the camera y axis.
struct Box3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double h = 0.0;
  double w = 0.0;
  double l = 0.0;
  double theta = 0.0;

  /// Validates dimensions and wraps theta into [-pi, pi].
  static Box3D make(double x, double y, double z, double h, double w, double l, double theta);

  bool valid() const noexcept;
  Vec3 bottom_center() const { return {x, y, z}; }
  Vec3 geometric_center() const { return {x, y - 0.5 * h, z}; }
  double volume() const noexcept { return h * w * l; }

  bool operator==(const Box3D&) const = default;
};

/// Wraps an angle into [-pi, pi]; values already in range are returned unchanged.
double wrap_angle(double a) noexcept;

/// Pinhole projection. Throws InvalidInput when z <= 0.
Vec2 project(const Vec3& point, const CameraIntrinsics& intr);

/// Inverse of project at a known depth.
Vec3 back_project(const Vec2& pixel, double depth, const CameraIntrinsics& intr);

/// Corners 0-3 lie on the bottom face (y = box.y), 4-7 on the top face,
/// in the same order as the KITTI devkit.
std::array<Vec3, 8> box3d_corners(const Box3D& box);

/// Bird's-eye footprint in the (x, z) plane, counter-clockwise.
std::array<Vec2, 4> bev_footprint(const Box3D& box);

/// Observation angle from global yaw and object position.
double observation_angle(double theta, double x, double z) noexcept;

}  // namespace maskdet

#include "maskdet/core/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "maskdet/core/error.hpp"

namespace maskdet {

CameraIntrinsics CameraIntrinsics::make(double fx, double fy, double cx, double cy) {
  CameraIntrinsics intr{fx, fy, cx, cy};
  intr.validate();
  return intr;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw InvalidInput("camera focal lengths must be positive (fx=" + std::to_string(fx) +
                       ", fy=" + std::to_string(fy) + ")");
  }
}

double Box2D::area() const noexcept {
  return valid() ? width() * height() : 0.0;
}

Box2D Box2D::clipped(double image_width, double image_height) const noexcept {
  return {std::clamp(x1, 0.0, image_width), std::clamp(y1, 0.0, image_height),
          std::clamp(x2, 0.0, image_width), std::clamp(y2, 0.0, image_height)};
}

double box2d_iou(const Box2D& a, const Box2D& b) noexcept {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double wrap_angle(double a) noexcept {
  constexpr double pi = std::numbers::pi;
  if (a >= -pi && a <= pi) return a;
  a = std::fmod(a + pi, 2.0 * pi);
  if (a < 0.0) a += 2.0 * pi;
  return a - pi;
}

Box3D Box3D::make(double x, double y, double z, double h, double w, double l, double theta) {
  if (!(h > 0.0) || !(w > 0.0) || !(l > 0.0)) {
    throw InvalidInput("box dimensions must be positive");
  }
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(theta)) {
    throw InvalidInput("box location and yaw must be finite");
  }
  return {x, y, z, h, w, l, wrap_angle(theta)};
}

bool Box3D::valid() const noexcept {
  return h > 0.0 && w > 0.0 && l > 0.0 && std::isfinite(x) && std::isfinite(y) &&
         std::isfinite(z) && std::isfinite(theta);
}

Vec2 project(const Vec3& p, const CameraIntrinsics& intr) {
  if (!(p.z() > 0.0)) {
    throw InvalidInput("cannot project a point with non-positive depth z=" + std::to_string(p.z()));
  }
  return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy};
}

Vec3 back_project(const Vec2& pixel, double depth, const CameraIntrinsics& intr) {
  return {(pixel.x() - intr.cx) * depth / intr.fx, (pixel.y() - intr.cy) * depth / intr.fy, depth};
}

std::array<Vec3, 8> box3d_corners(const Box3D& b) {
  const double hl = 0.5 * b.l;
  const double hw = 0.5 * b.w;
  const std::array<double, 8> xs{hl, hl, -hl, -hl, hl, hl, -hl, -hl};
  const std::array<double, 8> ys{0, 0, 0, 0, -b.h, -b.h, -b.h, -b.h};
  const std::array<double, 8> zs{hw, -hw, -hw, hw, hw, -hw, -hw, hw};
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    out[i] = {c * xs[i] + s * zs[i] + b.x, ys[i] + b.y, -s * xs[i] + c * zs[i] + b.z};
  }
  return out;
}

std::array<Vec2, 4> bev_footprint(const Box3D& b) {
  const auto corners = box3d_corners(b);
  std::array<Vec2, 4> fp;
  for (int i = 0; i < 4; ++i) fp[i] = {corners[i].x(), corners[i].z()};
  // Devkit order is clockwise in (x, z) for positive extents.
  double area2 = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto& p = fp[i];
    const auto& q = fp[(i + 1) % 4];
    area2 += p.x() * q.y() - q.x() * p.y();
  }
  if (area2 < 0.0) std::reverse(fp.begin(), fp.end());
  return fp;
}

double observation_angle(double theta, double x, double z) noexcept {
  return wrap_angle(theta - std::atan2(x, z));
}

}  // namespace maskdet

#include "maskdet/eval/iou.hpp"

#include <algorithm>

#include "maskdet/core/polygon.hpp"

namespace maskdet::eval {

double bev_intersection(const Box3D& a, const Box3D& b) {
  const auto fa = bev_footprint(a);
  const auto fb = bev_footprint(b);
  const Polygon inter = clip_convex(fa, fb);
  return inter.size() < 3 ? 0.0 : std::max(0.0, signed_area(inter));
}

double bev_iou(const Box3D& a, const Box3D& b) {
  const double area_a = a.w * a.l;
  const double area_b = b.w * b.l;
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  const double inter = bev_intersection(a, b);
  return std::clamp(inter / (area_a + area_b - inter), 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double vol_a = a.volume();
  const double vol_b = b.volume();
  if (!(vol_a > 0.0) || !(vol_b > 0.0)) return 0.0;
  const double overlap_h = std::min(a.y, b.y) - std::max(a.y - a.h, b.y - b.h);
  if (overlap_h <= 0.0) return 0.0;
  const double inter = bev_intersection(a, b) * overlap_h;
  return std::clamp(inter / (vol_a + vol_b - inter), 0.0, 1.0);
}

}  // namespace maskdet::eval

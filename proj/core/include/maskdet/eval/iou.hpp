#pragma once

#include "maskdet/core/geometry.hpp"

namespace maskdet::eval {

/// Intersection area of the two yaw-rotated footprints (x, z plane).
double bev_intersection(const Box3D& a, const Box3D& b);

/// Bird's-eye IoU of the yaw-rotated footprints. Zero when either footprint
/// has zero area.
double bev_iou(const Box3D& a, const Box3D& b);

/// Volumetric IoU: BEV intersection times the overlap of the [y - h, y]
/// intervals, over the union volume. Clamped to [0, 1].
double iou_3d(const Box3D& a, const Box3D& b);

}  // namespace maskdet::eval

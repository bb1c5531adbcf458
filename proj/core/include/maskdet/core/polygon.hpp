#pragma once

#include <span>
#include <vector>

#include "maskdet/core/geometry.hpp"

namespace maskdet {

using Polygon = std::vector<Vec2>;

/// Shoelace formula; positive for counter-clockwise vertex order.
double signed_area(std::span<const Vec2> poly) noexcept;

/// Returns the polygon in counter-clockwise order.
Polygon make_ccw(std::span<const Vec2> poly);

/// Sutherland-Hodgman clipping of `subject` against the convex polygon `clip`.
/// Both inputs must be convex and counter-clockwise.
Polygon clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

/// Andrew's monotone chain. Counter-clockwise, collinear points dropped.
Polygon convex_hull(std::vector<Vec2> points);

/// Inclusive of the boundary.
bool convex_contains(std::span<const Vec2> ccw_poly, const Vec2& p) noexcept;

}  // namespace maskdet

#include "maskdet/core/polygon.hpp"

#include <algorithm>

namespace maskdet {

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) noexcept {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

Vec2 edge_intersection(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
  // Intersection of segment pq with the infinite line ab.
  const double cp = cross(a, b, p);
  const double cq = cross(a, b, q);
  const double t = cp / (cp - cq);
  return p + t * (q - p);
}

}  // namespace

double signed_area(std::span<const Vec2> poly) noexcept {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    acc += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * acc;
}

Polygon make_ccw(std::span<const Vec2> poly) {
  Polygon out(poly.begin(), poly.end());
  if (signed_area(out) < 0.0) std::reverse(out.begin(), out.end());
  return out;
}

Polygon clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  Polygon output(subject.begin(), subject.end());
  const std::size_t n = clip.size();
  for (std::size_t i = 0; i < n && !output.empty(); ++i) {
    const Vec2& a = clip[i];
    const Vec2& b = clip[(i + 1) % n];
    Polygon input;
    input.swap(output);
    const std::size_t m = input.size();
    for (std::size_t j = 0; j < m; ++j) {
      const Vec2& cur = input[j];
      const Vec2& prev = input[(j + m - 1) % m];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(edge_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(edge_intersection(prev, cur, a, b));
      }
    }
  }
  return output;
}

Polygon convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool convex_contains(std::span<const Vec2> poly, const Vec2& p) noexcept {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (cross(poly[i], poly[(i + 1) % n], p) < 0.0) return false;
  }
  return true;
}

}  // namespace maskdet

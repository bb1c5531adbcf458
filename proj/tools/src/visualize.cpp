#include "maskdet/cli/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "maskdet/core/keyvalue.hpp"

namespace maskdet::cli {

namespace {

// Rows of a 3x5 glyph, three bits each (MSB = left column).
struct Glyph {
  char c;
  std::array<std::uint8_t, 5> rows;
};

constexpr std::array<Glyph, 14> kFont{{
    {'0', {7, 5, 5, 5, 7}},
    {'1', {2, 6, 2, 2, 7}},
    {'2', {7, 1, 7, 4, 7}},
    {'3', {7, 1, 7, 1, 7}},
    {'4', {5, 5, 7, 1, 1}},
    {'5', {7, 4, 7, 1, 7}},
    {'6', {7, 4, 7, 5, 7}},
    {'7', {7, 1, 1, 1, 1}},
    {'8', {7, 5, 7, 5, 7}},
    {'9', {7, 5, 7, 1, 7}},
    {'.', {0, 0, 0, 0, 2}},
    {'-', {0, 0, 7, 0, 0}},
    {'m', {0, 0, 7, 7, 5}},
    {' ', {0, 0, 0, 0, 0}},
}};

// Half-open pixel rectangle drawing is restricted to.
struct Clip {
  int x0 = 0;
  int y0 = 0;
  int x1 = 1 << 30;
  int y1 = 1 << 30;
};

void put(Image& img, int x, int y, const Rgb& c, const Clip& clip = {}) {
  if (x < std::max(0, clip.x0) || y < std::max(0, clip.y0)) return;
  if (x >= std::min(img.width(), clip.x1) || y >= std::min(img.height(), clip.y1)) return;
  for (int k = 0; k < 3; ++k) img.set_raw(y, x, k, c[static_cast<std::size_t>(k)]);
}

void line(Image& img, Vec2 a, Vec2 b, const Rgb& c, const Clip& clip = {}) {
  int x0 = static_cast<int>(std::lround(a.x()));
  int y0 = static_cast<int>(std::lround(a.y()));
  const int x1 = static_cast<int>(std::lround(b.x()));
  const int y1 = static_cast<int>(std::lround(b.y()));
  // Skip absurdly long segments from near-camera projections.
  if (std::abs(x1 - x0) > 8 * img.width() || std::abs(y1 - y0) > 8 * img.height()) return;
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    put(img, x0, y0, c, clip);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

std::string fixed(double v, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

void text_clipped(Image& image, int x, int y, const std::string& text, const Rgb& color, const Clip& clip) {
  int cx = x;
  for (char ch : text) {
    for (const auto& g : kFont) {
      if (g.c != ch) continue;
      for (int r = 0; r < 5; ++r) {
        for (int col = 0; col < 3; ++col) {
          if (g.rows[static_cast<std::size_t>(r)] & (4 >> col)) put(image, cx + col, y + r, color, clip);
        }
      }
    }
    cx += 4;
  }
}

}  // namespace

Vec2 BevTransform::to_pixel(double x, double z) const {
  return {0.5 * panel_width + x * pixels_per_meter, panel_top + panel_height - 1 - z * pixels_per_meter};
}

Vec2 BevTransform::to_world(double column, double row) const {
  return {(column - 0.5 * panel_width) / pixels_per_meter, (panel_top + panel_height - 1 - row) / pixels_per_meter};
}

void draw_text(Image& image, int x, int y, const std::string& text, const Rgb& color) {
  text_clipped(image, x, y, text, color, {});
}

Canvas make_canvas(const Sample& sample) {
  const int w = sample.image.width() * kCameraScale;
  const int h = sample.image.height() * kCameraScale;
  Canvas c;
  c.image = Image(h + kBevHeight, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < 3; ++k) c.image.set_raw(y, x, k, sample.image.raw(y / kCameraScale, x / kCameraScale, k));
    }
  }
  c.bev = BevTransform{w, kBevHeight, h, kBevPixelsPerMeter};
  for (int y = h; y < h + kBevHeight; ++y) {
    for (int x = 0; x < w; ++x) put(c.image, x, y, kBevBackground);
  }
  // Range rings every 10 m.
  for (int z = 10; z * kBevPixelsPerMeter < kBevHeight; z += 10) {
    const double row = c.bev.to_pixel(0.0, z).y();
    for (int x = 0; x < w; x += 2) put(c.image, x, static_cast<int>(std::lround(row)), kBevGrid);
    draw_text(c.image, 2, static_cast<int>(std::lround(row)) - 6, std::to_string(z) + "m", kBevGrid);
  }
  return c;
}

void draw_label(Canvas& canvas, const ObjectLabel& label, const CameraIntrinsics& intr, const Rgb& color) {
  const auto corners = box3d_corners(label.box3d);
  bool visible = true;
  for (const auto& p : corners) visible = visible && p.z() > 0.1;
  const double s = kCameraScale;
  const Clip camera{0, 0, canvas.image.width(), canvas.bev.panel_top};
  const Clip bev{0, canvas.bev.panel_top, canvas.image.width(), canvas.bev.panel_top + canvas.bev.panel_height};
  if (visible) {
    std::array<Vec2, 8> px;
    for (std::size_t i = 0; i < 8; ++i) px[i] = project(corners[i], intr) * s;
    static constexpr std::array<std::array<int, 2>, 12> kEdges{{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                                                {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};
    for (const auto& e : kEdges) {
      line(canvas.image, px[static_cast<std::size_t>(e[0])], px[static_cast<std::size_t>(e[1])], color, camera);
    }
  }
  const auto fp = bev_footprint(label.box3d);
  for (std::size_t i = 0; i < fp.size(); ++i) {
    const auto& a = fp[i];
    const auto& b = fp[(i + 1) % fp.size()];
    line(canvas.image, canvas.bev.to_pixel(a.x(), a.y()), canvas.bev.to_pixel(b.x(), b.y()), color, bev);
  }
  std::string text = fixed(label.box3d.z, 1) + "m";
  if (label.score) text = fixed(*label.score, 2) + " " + text;
  const int tx = static_cast<int>(std::lround(label.box2d.x1 * s));
  const int ty = static_cast<int>(std::lround(label.box2d.y1 * s)) - 6;
  text_clipped(canvas.image, tx, std::max(ty, 0), text, color, camera);
  const Vec2 bp = canvas.bev.to_pixel(label.box3d.x, label.box3d.z);
  text_clipped(canvas.image, static_cast<int>(std::lround(bp.x())) + 6, static_cast<int>(std::lround(bp.y())) - 2,
               fixed(label.box3d.z, 1), color, bev);
}

Image render_visualization(const Sample& sample, const std::vector<ObjectLabel>& predictions) {
  Canvas canvas = make_canvas(sample);
  for (const auto& l : sample.labels) {
    if (!l.is_dont_care()) draw_label(canvas, l, sample.intrinsics, kTruthColor);
  }
  for (const auto& p : predictions) draw_label(canvas, p, sample.intrinsics, kPredictionColor);
  return std::move(canvas.image);
}

std::vector<train::EpochRecord> read_metrics_log(const std::filesystem::path& path) {
  std::vector<train::EpochRecord> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) out.push_back(train::EpochRecord::from_json_line(line));
  }
  return out;
}

Image render_loss_curve(std::span<const train::EpochRecord> history) {
  constexpr int kWidth = 640;
  constexpr int kHeight = 240;
  constexpr int kLeft = 40;
  constexpr int kRight = 10;
  constexpr int kTop = 10;
  constexpr int kBottom = 20;
  Image img(kHeight, kWidth);
  for (int y = 0; y < kHeight; ++y) {
    for (int x = 0; x < kWidth; ++x) put(img, x, y, kBevBackground);
  }
  const Vec2 origin{kLeft, kHeight - kBottom};
  line(img, origin, {kWidth - kRight, kHeight - kBottom}, kBevGrid);
  line(img, origin, {kLeft, kTop}, kBevGrid);
  if (history.empty()) return img;

  double top = 0.0;
  for (const auto& r : history) top = std::max(top, r.loss.total);
  if (!(top > 0.0)) top = 1.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double span = std::max<std::size_t>(history.size() - 1, 1);
  auto at = [&](std::size_t i, double v) {
    return Vec2{kLeft + plot_w * static_cast<double>(i) / span, origin.y() - plot_h * std::clamp(v / top, 0.0, 1.0)};
  };
  draw_text(img, 2, kTop, fixed(top, 2), kTextColor);
  draw_text(img, 2, static_cast<int>(origin.y()) - 4, "0", kTextColor);
  draw_text(img, kLeft, kHeight - 8, std::to_string(history.front().epoch), kTextColor);
  draw_text(img, kWidth - kRight - 12, kHeight - 8, std::to_string(history.back().epoch), kTextColor);

  struct Series {
    Rgb color;
    double (*value)(const train::EpochRecord&);
  };
  const std::array<Series, 4> series{{
      {{255, 255, 255}, [](const train::EpochRecord& r) { return r.loss.total; }},
      {{255, 220, 0}, [](const train::EpochRecord& r) { return r.loss.l_base; }},
      {{0, 220, 255}, [](const train::EpochRecord& r) { return r.loss.l_occ; }},
      {{255, 0, 255}, [](const train::EpochRecord& r) { return r.loss.l_com; }},
  }};
  for (const auto& s : series) {
    for (std::size_t i = 0; i < history.size(); ++i) {
      const Vec2 p = at(i, s.value(history[i]));
      if (history.size() == 1) put(img, static_cast<int>(p.x()), static_cast<int>(p.y()), s.color);
      if (i > 0) line(img, at(i - 1, s.value(history[i - 1])), p, s.color);
    }
  }
  return img;
}

}  // namespace maskdet::cli

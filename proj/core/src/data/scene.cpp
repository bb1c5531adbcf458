#include "maskdet/data/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "maskdet/core/error.hpp"
#include "maskdet/core/keyvalue.hpp"

namespace maskdet {

namespace {

constexpr double kPi = std::numbers::pi;

std::mt19937_64 scene_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x5ce7eu};
  return std::mt19937_64(seq);
}

struct PlacedObject {
  Box3D box;
  Polygon silhouette;
  Box2D box2d;
  double truncation = 0.0;
  std::array<double, 3> color{};
  double coverage = 0.0;
};

/// Visits every pixel whose center lies inside the convex polygon.
template <typename F>
void for_each_pixel(const Polygon& poly, int width, int height, F&& f) {
  if (poly.size() < 3) return;
  double x0 = poly[0].x(), x1 = x0, y0 = poly[0].y(), y1 = y0;
  for (const auto& p : poly) {
    x0 = std::min(x0, p.x());
    x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y());
    y1 = std::max(y1, p.y());
  }
  const int px0 = std::max(0, static_cast<int>(std::floor(x0 - 0.5)));
  const int px1 = std::min(width - 1, static_cast<int>(std::ceil(x1 - 0.5)));
  const int py0 = std::max(0, static_cast<int>(std::floor(y0 - 0.5)));
  const int py1 = std::min(height - 1, static_cast<int>(std::ceil(y1 - 0.5)));
  for (int y = py0; y <= py1; ++y) {
    for (int x = px0; x <= px1; ++x) {
      if (convex_contains(poly, Vec2(x + 0.5, y + 0.5))) f(x, y);
    }
  }
}

double sample_yaw(const SceneRecipe& r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (unit(rng) < r.yaw_aligned_prob) {
    std::normal_distribution<double> jitter(0.0, r.yaw_jitter);
    const double base = unit(rng) < 0.5 ? -0.5 * kPi : 0.5 * kPi;
    return wrap_angle(base + jitter(rng));
  }
  return std::uniform_real_distribution<double>(-kPi, kPi)(rng);
}

double sample_dim(double mean, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(mean, stddev);
  return std::max(0.5 * mean, d(rng));
}

bool footprints_overlap(const Box3D& a, const Box3D& b) {
  const auto fa = bev_footprint(a);
  const auto fb = bev_footprint(b);
  const Polygon inter = clip_convex(fa, fb);
  return signed_area(inter) > 1e-9;
}

/// Places objects and resolves visibility near-to-far. Returns visible
/// objects sorted by increasing depth.
std::vector<PlacedObject> layout_scene(const SceneRecipe& r, std::mt19937_64& rng) {
  const int W = r.image_width;
  const int H = r.image_height;
  std::uniform_int_distribution<int> count_dist(r.min_objects, r.max_objects);
  std::uniform_real_distribution<double> depth_dist(r.depth_min, r.depth_max);
  std::uniform_real_distribution<double> u_dist(0.05 * W, 0.95 * W);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int wanted = count_dist(rng);
  std::vector<PlacedObject> placed;
  for (int i = 0; i < wanted; ++i) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double z = depth_dist(rng);
      const double u = u_dist(rng);
      const double x = (u - r.camera.cx) * z / r.camera.fx;
      const double h = sample_dim(r.car.h_mean, r.car.h_std, rng);
      const double w = sample_dim(r.car.w_mean, r.car.w_std, rng);
      const double l = sample_dim(r.car.l_mean, r.car.l_std, rng);
      const double yaw = sample_yaw(r, rng);
      const std::array<double, 3> color{0.15 + 0.8 * unit(rng), 0.15 + 0.8 * unit(rng),
                                        0.15 + 0.8 * unit(rng)};
      const Box3D box = Box3D::make(x, r.camera_height, z, h, w, l, yaw);
      const auto corners = box3d_corners(box);
      if (std::any_of(corners.begin(), corners.end(), [](const Vec3& c) { return c.z() < 0.5; })) {
        continue;
      }
      if (std::any_of(placed.begin(), placed.end(),
                      [&](const PlacedObject& o) { return footprints_overlap(o.box, box); })) {
        continue;
      }
      PlacedObject obj;
      obj.box = box;
      obj.silhouette = projected_silhouette(box, r.camera);
      double x0 = obj.silhouette[0].x(), x1 = x0, y0 = obj.silhouette[0].y(), y1 = y0;
      for (const auto& p : obj.silhouette) {
        x0 = std::min(x0, p.x());
        x1 = std::max(x1, p.x());
        y0 = std::min(y0, p.y());
        y1 = std::max(y1, p.y());
      }
      const Box2D full{x0, y0, x1, y1};
      obj.box2d = full.clipped(W, H);
      if (!obj.box2d.valid() || obj.box2d.height() < r.min_box_height) continue;
      obj.truncation = std::clamp(1.0 - obj.box2d.area() / full.area(), 0.0, 1.0);
      obj.color = color;
      placed.push_back(std::move(obj));
      break;
    }
  }

  std::stable_sort(placed.begin(), placed.end(),
                   [](const PlacedObject& a, const PlacedObject& b) { return a.box.z < b.box.z; });

  std::vector<std::uint8_t> occupied(static_cast<std::size_t>(W) * H, 0);
  std::vector<PlacedObject> visible;
  for (auto& obj : placed) {
    std::size_t total = 0;
    std::size_t covered = 0;
    for_each_pixel(obj.silhouette, W, H, [&](int x, int y) {
      ++total;
      covered += occupied[static_cast<std::size_t>(y) * W + x];
    });
    if (total == 0) continue;
    obj.coverage = static_cast<double>(covered) / static_cast<double>(total);
    if (obj.coverage > r.max_coverage) continue;
    for_each_pixel(obj.silhouette, W, H,
                   [&](int x, int y) { occupied[static_cast<std::size_t>(y) * W + x] = 1; });
    visible.push_back(std::move(obj));
  }
  return visible;
}

void render_background(const SceneRecipe& r, Image& img, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 0.02);
  const auto& cam = r.camera;
  for (int y = 0; y < img.height(); ++y) {
    const double v = y + 0.5;
    for (int x = 0; x < img.width(); ++x) {
      const double u = x + 0.5;
      std::array<double, 3> rgb;
      if (v <= cam.cy + 0.5) {
        const double t = std::clamp(v / std::max(cam.cy, 1.0), 0.0, 1.0);
        rgb = {0.45 + 0.25 * t, 0.6 + 0.2 * t, 0.85 + 0.05 * t};
      } else {
        // Ground texture keyed to metric ground coordinates gives a depth cue.
        const double gz = cam.fy * r.camera_height / (v - cam.cy);
        const double gx = (u - cam.cx) * gz / cam.fx;
        const bool stripe = std::fmod(gz, 10.0) < 0.6;
        const bool lane = std::abs(std::fmod(std::abs(gx) + 1.75, 3.5) - 1.75) < 0.08;
        const double base = stripe ? 0.42 : (lane ? 0.75 : 0.33);
        const double fade = std::clamp(gz / 80.0, 0.0, 1.0);
        const double g = base * (1.0 - 0.3 * fade) + 0.1 * fade;
        rgb = {g, g, g * 1.02};
      }
      for (int c = 0; c < 3; ++c) img.set(y, x, c, rgb[c] + noise(rng));
    }
  }
}

void render_object(const PlacedObject& obj, const CameraIntrinsics& cam, Image& img,
                   std::mt19937_64& rng) {
  static constexpr std::array<std::array<int, 4>, 6> kFaces{{
      {0, 1, 2, 3}, {4, 5, 6, 7}, {0, 1, 5, 4}, {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7}}};
  const Vec3 light = Vec3(0.3, -1.0, -0.4).normalized();
  std::normal_distribution<double> noise(0.0, 0.015);
  const auto corners = box3d_corners(obj.box);
  const Vec3 center = obj.box.geometric_center();
  const int W = img.width();
  const int H = img.height();

  for_each_pixel(obj.silhouette, W, H, [&](int x, int y) {
    for (int c = 0; c < 3; ++c) img.set(y, x, c, 0.3 * obj.color[c]);
  });
  for (std::size_t f = 0; f < kFaces.size(); ++f) {
    const auto& idx = kFaces[f];
    Vec3 fc = Vec3::Zero();
    for (int i : idx) fc += corners[i];
    fc /= 4.0;
    const Vec3 normal = (fc - center).normalized();
    if (normal.dot(fc) >= 0.0) continue;  // back face
    std::vector<Vec2> pts;
    for (int i : idx) pts.push_back(project(corners[i], cam));
    const Polygon face = make_ccw(pts);
    const double lambert = std::max(0.0, -normal.dot(light));
    double shade = 0.35 + 0.65 * lambert;
    // The front (+l direction) is painted a neutral dark grey so heading is observable.
    const bool front = f == 2;
    for_each_pixel(face, W, H, [&](int x, int y) {
      for (int c = 0; c < 3; ++c) img.set(y, x, c, (front ? 0.12 : obj.color[c] * shade) + noise(rng));
    });
  }
}

struct SceneResult {
  std::vector<PlacedObject> objects;
  std::mt19937_64 rng;
};

SceneResult build(const SceneRecipe& recipe, std::uint64_t index) {
  recipe.validate();
  auto rng = scene_rng(recipe.seed, index);
  for (int attempt = 0; attempt < recipe.max_attempts; ++attempt) {
    auto objects = layout_scene(recipe, rng);
    if (!objects.empty()) return {std::move(objects), std::move(rng)};
  }
  throw Error("scene " + std::to_string(index) + ": no visible object after " +
              std::to_string(recipe.max_attempts) + " attempts");
}

}  // namespace

Polygon projected_silhouette(const Box3D& box, const CameraIntrinsics& intr) {
  std::vector<Vec2> pts;
  for (const auto& c : box3d_corners(box)) pts.push_back(project(c, intr));
  return convex_hull(std::move(pts));
}

Sample generate_scene(const SceneRecipe& recipe, std::uint64_t index) {
  auto [objects, rng] = build(recipe, index);
  Sample s;
  s.id = frame_id(index);
  s.intrinsics = recipe.camera;
  s.image = Image(recipe.image_height, recipe.image_width);
  render_background(recipe, s.image, rng);
  for (auto it = objects.rbegin(); it != objects.rend(); ++it) {
    render_object(*it, recipe.camera, s.image, rng);
  }
  for (const auto& obj : objects) {
    ObjectLabel l;
    l.category = Category::Car;
    l.truncation = obj.truncation;
    l.occlusion_level = obj.coverage >= recipe.occlusion_threshold ? 1 : 0;
    l.alpha = observation_angle(obj.box.theta, obj.box.x, obj.box.z);
    l.box2d = obj.box2d;
    l.box3d = obj.box;
    s.labels.push_back(l);
  }
  return s;
}

std::vector<double> scene_coverage(const SceneRecipe& recipe, std::uint64_t index) {
  const auto result = build(recipe, index);
  std::vector<double> out;
  for (const auto& o : result.objects) out.push_back(o.coverage);
  return out;
}

// ---------------------------------------------------------------------------
// Recipe file handling.

void SceneRecipe::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(field, what);
  };
  require(image_height > 0, "image_height", "must be > 0");
  require(image_width > 0, "image_width", "must be > 0");
  require(camera.fx > 0.0 && camera.fy > 0.0, "camera", "focal lengths must be > 0");
  require(camera_height > 0.0, "camera_height", "must be > 0");
  require(min_objects >= 1 && min_objects <= max_objects, "min_objects",
          "requires 1 <= min_objects <= max_objects");
  require(dataset_depth_max > 0.0, "dataset_depth_max", "must be > 0");
  require(depth_min > 0.0 && depth_min <= depth_max && depth_max <= dataset_depth_max,
          "depth_range", "requires 0 < depth_min <= depth_max <= dataset_depth_max");
  require(car.h_mean > 0.0 && car.w_mean > 0.0 && car.l_mean > 0.0, "car_size",
          "means must be > 0");
  require(car.h_std >= 0.0 && car.w_std >= 0.0 && car.l_std >= 0.0, "car_size",
          "standard deviations must be >= 0");
  require(yaw_aligned_prob >= 0.0 && yaw_aligned_prob <= 1.0, "yaw_aligned_prob",
          "must be in [0, 1]");
  require(yaw_jitter >= 0.0, "yaw_jitter", "must be >= 0");
  require(occlusion_threshold > 0.0 && occlusion_threshold < 1.0, "occlusion_threshold",
          "must be in (0, 1)");
  require(max_coverage > 0.0 && max_coverage <= 1.0, "max_coverage", "must be in (0, 1]");
  require(min_box_height >= 0.0, "min_box_height", "must be >= 0");
  require(occluded_share_band.first >= 0.0 &&
              occluded_share_band.first <= occluded_share_band.second &&
              occluded_share_band.second <= 1.0,
          "occluded_share_band", "requires 0 <= low <= high <= 1");
  require(max_attempts >= 1, "max_attempts", "must be >= 1");
}

SceneRecipe SceneRecipe::from_text(const std::string& text) {
  SceneRecipe r;
  for (const auto& kv : parse_key_values(text)) {
    const auto& k = kv.key;
    const auto& v = kv.value;
    if (k == "seed") {
      const long long s = parse_integer(k, v);
      if (s < 0) throw ConfigError(k, "must be non-negative");
      r.seed = static_cast<std::uint64_t>(s);
    } else if (k == "image_height") {
      r.image_height = static_cast<int>(parse_integer(k, v));
    } else if (k == "image_width") {
      r.image_width = static_cast<int>(parse_integer(k, v));
    } else if (k == "camera") {
      const auto list = parse_real_list(k, v);
      if (list.size() != 4) throw ConfigError(k, "expected fx,fy,cx,cy");
      r.camera = {list[0], list[1], list[2], list[3]};
    } else if (k == "camera_height") {
      r.camera_height = parse_real(k, v);
    } else if (k == "objects") {
      const auto [lo, hi] = parse_real_pair(k, v);
      r.min_objects = static_cast<int>(lo);
      r.max_objects = static_cast<int>(hi);
    } else if (k == "depth_range") {
      std::tie(r.depth_min, r.depth_max) = parse_real_pair(k, v);
    } else if (k == "dataset_depth_max") {
      r.dataset_depth_max = parse_real(k, v);
    } else if (k == "car_height") {
      std::tie(r.car.h_mean, r.car.h_std) = parse_real_pair(k, v);
    } else if (k == "car_width") {
      std::tie(r.car.w_mean, r.car.w_std) = parse_real_pair(k, v);
    } else if (k == "car_length") {
      std::tie(r.car.l_mean, r.car.l_std) = parse_real_pair(k, v);
    } else if (k == "yaw_aligned_prob") {
      r.yaw_aligned_prob = parse_real(k, v);
    } else if (k == "yaw_jitter") {
      r.yaw_jitter = parse_real(k, v);
    } else if (k == "occlusion_threshold") {
      r.occlusion_threshold = parse_real(k, v);
    } else if (k == "max_coverage") {
      r.max_coverage = parse_real(k, v);
    } else if (k == "min_box_height") {
      r.min_box_height = parse_real(k, v);
    } else if (k == "occluded_share_band") {
      r.occluded_share_band = parse_real_pair(k, v);
    } else if (k == "max_attempts") {
      r.max_attempts = static_cast<int>(parse_integer(k, v));
    } else {
      throw ConfigError(k, "unknown recipe key (line " + std::to_string(kv.line) + ")");
    }
  }
  r.validate();
  return r;
}

SceneRecipe SceneRecipe::from_file(const std::filesystem::path& path) {
  return from_text(read_text_file(path));
}

std::string SceneRecipe::to_text() const {
  std::ostringstream o;
  auto pair = [](double a, double b) { return format_real(a) + "," + format_real(b); };
  o << "seed = " << seed << "\n";
  o << "image_height = " << image_height << "\n";
  o << "image_width = " << image_width << "\n";
  o << "camera = " << format_real(camera.fx) << "," << format_real(camera.fy) << ","
    << format_real(camera.cx) << "," << format_real(camera.cy) << "\n";
  o << "camera_height = " << format_real(camera_height) << "\n";
  o << "objects = " << min_objects << "," << max_objects << "\n";
  o << "depth_range = " << pair(depth_min, depth_max) << "\n";
  o << "dataset_depth_max = " << format_real(dataset_depth_max) << "\n";
  o << "car_height = " << pair(car.h_mean, car.h_std) << "\n";
  o << "car_width = " << pair(car.w_mean, car.w_std) << "\n";
  o << "car_length = " << pair(car.l_mean, car.l_std) << "\n";
  o << "yaw_aligned_prob = " << format_real(yaw_aligned_prob) << "\n";
  o << "yaw_jitter = " << format_real(yaw_jitter) << "\n";
  o << "occlusion_threshold = " << format_real(occlusion_threshold) << "\n";
  o << "max_coverage = " << format_real(max_coverage) << "\n";
  o << "min_box_height = " << format_real(min_box_height) << "\n";
  o << "occluded_share_band = " << pair(occluded_share_band.first, occluded_share_band.second)
    << "\n";
  o << "max_attempts = " << max_attempts << "\n";
  return o.str();
}

}  // namespace maskdet

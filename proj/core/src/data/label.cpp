#include "maskdet/data/label.hpp"

#include <array>
#include <charconv>
#include <sstream>

#include "maskdet/core/error.hpp"
#include "maskdet/core/keyvalue.hpp"

namespace maskdet {

namespace {

constexpr std::array<std::pair<Category, const char*>, 9> kCategoryNames{{
    {Category::Car, "Car"},
    {Category::Van, "Van"},
    {Category::Truck, "Truck"},
    {Category::Pedestrian, "Pedestrian"},
    {Category::PersonSitting, "Person_sitting"},
    {Category::Cyclist, "Cyclist"},
    {Category::Tram, "Tram"},
    {Category::Misc, "Misc"},
    {Category::DontCare, "DontCare"},
}};

constexpr std::array<const char*, 16> kFieldNames{
    "type", "truncated", "occluded", "alpha",  "bbox_x1",    "bbox_y1", "bbox_x2", "bbox_y2",
    "height", "width",   "length",   "loc_x", "loc_y", "loc_z", "rotation_y", "score"};

double field_real(const std::string& token, std::size_t index, std::size_t line) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ParseError("expected a number, got '" + token + "'", line, kFieldNames[index]);
  }
  return v;
}

}  // namespace

std::string to_string(Category c) {
  for (const auto& [cat, name] : kCategoryNames) {
    if (cat == c) return name;
  }
  return "Misc";
}

Category parse_category(const std::string& name) {
  for (const auto& [cat, n] : kCategoryNames) {
    if (name == n) return cat;
  }
  throw ParseError("unknown object type '" + name + "'", 0, "type");
}

int occlusion_flag(const ObjectLabel& label) noexcept {
  return label.occlusion_level == 0 ? 0 : 1;
}

ObjectLabel parse_kitti_label(const std::string& line, std::size_t line_number) {
  std::istringstream in(line);
  std::vector<std::string> tok;
  for (std::string t; in >> t;) tok.push_back(std::move(t));
  if (tok.size() != 15 && tok.size() != 16) {
    throw ParseError("expected 15 or 16 fields, got " + std::to_string(tok.size()), line_number);
  }
  ObjectLabel l;
  try {
    l.category = parse_category(tok[0]);
  } catch (const ParseError&) {
    throw ParseError("unknown object type '" + tok[0] + "'", line_number, "type");
  }
  std::array<double, 16> v{};
  for (std::size_t i = 1; i < tok.size(); ++i) v[i] = field_real(tok[i], i, line_number);

  l.truncation = v[1];
  const double occ = v[2];
  if (occ != static_cast<int>(occ)) {
    throw ParseError("occlusion level must be an integer", line_number, "occluded");
  }
  l.occlusion_level = static_cast<int>(occ);
  l.alpha = v[3];
  l.box2d = {v[4], v[5], v[6], v[7]};
  // Devkit order: dimensions are h w l, location is x y z.
  l.box3d = {v[11], v[12], v[13], v[8], v[9], v[10], v[14]};
  if (tok.size() == 16) l.score = v[15];

  // DontCare rows and detector outputs carry -1 sentinels in the first fields.
  const bool sentinels_allowed = l.is_dont_care() || l.score.has_value();
  const bool trunc_ok = (l.truncation >= 0.0 && l.truncation <= 1.0) ||
                        (sentinels_allowed && l.truncation == -1.0);
  if (!trunc_ok) throw ParseError("truncation must lie in [0, 1]", line_number, "truncated");
  const bool occ_ok = (l.occlusion_level >= 0 && l.occlusion_level <= 3) ||
                      (sentinels_allowed && l.occlusion_level == -1);
  if (!occ_ok) throw ParseError("occlusion level must be 0, 1, 2 or 3", line_number, "occluded");
  if (!l.is_dont_care()) l.box3d.theta = wrap_angle(l.box3d.theta);
  return l;
}

std::string serialize_kitti_label(const ObjectLabel& l) {
  std::string out = to_string(l.category);
  auto add = [&out](double v) {
    out += ' ';
    out += format_real(v);
  };
  add(l.truncation);
  out += ' ' + std::to_string(l.occlusion_level);
  add(l.alpha);
  add(l.box2d.x1);
  add(l.box2d.y1);
  add(l.box2d.x2);
  add(l.box2d.y2);
  add(l.box3d.h);
  add(l.box3d.w);
  add(l.box3d.l);
  add(l.box3d.x);
  add(l.box3d.y);
  add(l.box3d.z);
  add(l.box3d.theta);
  if (l.score) add(*l.score);
  return out;
}

std::vector<ObjectLabel> parse_kitti_label_file(const std::string& text) {
  std::vector<ObjectLabel> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    out.push_back(parse_kitti_label(line, n));
  }
  return out;
}

std::string serialize_kitti_label_file(const std::vector<ObjectLabel>& labels) {
  std::string out;
  for (const auto& l : labels) out += serialize_kitti_label(l) + "\n";
  return out;
}

CameraIntrinsics parse_kitti_calib(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head) || head != "P2:") continue;
    std::array<double, 12> p{};
    for (std::size_t i = 0; i < 12; ++i) {
      std::string t;
      if (!(ls >> t)) throw ParseError("P2 row needs 12 values", n, "P2");
      const auto* end = t.data() + t.size();
      const auto [ptr, ec] = std::from_chars(t.data(), end, p[i]);
      if (ec != std::errc{} || ptr != end) {
        throw ParseError("non-numeric P2 entry '" + t + "'", n, "P2");
      }
    }
    if (!(p[0] > 0.0) || !(p[5] > 0.0)) throw ParseError("P2 focal lengths must be positive", n, "P2");
    return CameraIntrinsics::make(p[0], p[5], p[2] + p[3] / p[0], p[6]);
  }
  throw ParseError("calibration has no P2 row", 0, "P2");
}

std::string serialize_kitti_calib(const CameraIntrinsics& intr) {
  const std::string f = format_real(intr.fx);
  const std::string p = f + " 0 " + format_real(intr.cx) + " 0 0 " + format_real(intr.fy) + " " +
                        format_real(intr.cy) + " 0 0 0 1 0";
  std::string out;
  for (const char* name : {"P0:", "P1:", "P2:", "P3:"}) out += std::string(name) + " " + p + "\n";
  out += "R0_rect: 1 0 0 0 1 0 0 0 1\n";
  out += "Tr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";
  out += "Tr_imu_to_velo: 1 0 0 0 0 1 0 0 0 0 1 0\n";
  return out;
}

}  // namespace maskdet

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "maskdet/core/error.hpp"
#include "maskdet/core/keyvalue.hpp"
#include "maskdet/data/dataset.hpp"
#include "maskdet/data/image.hpp"
#include "maskdet/data/label.hpp"
#include "maskdet/data/scene.hpp"
#include "maskdet_test/oracles.hpp"

using namespace maskdet;
using maskdet::testing::TempDir;

namespace {

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

std::vector<std::string> fixture_lines() {
  std::ifstream in(std::string(MASKDET_TEST_DATA_DIR) + "/labels_fixture.txt");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) lines.push_back(l);
  }
  return lines;
}

}  // namespace

TEST(Label, ParsesDevkitLine) {
  const auto l = parse_kitti_label(
      "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59");
  EXPECT_EQ(l.category, Category::Car);
  EXPECT_EQ(l.occlusion_level, 0);
  EXPECT_DOUBLE_EQ(l.alpha, -1.58);
  EXPECT_EQ(l.box2d, (Box2D{587.01, 173.33, 614.12, 200.12}));
  EXPECT_DOUBLE_EQ(l.box3d.h, 1.65);
  EXPECT_DOUBLE_EQ(l.box3d.w, 1.67);
  EXPECT_DOUBLE_EQ(l.box3d.l, 3.64);
  EXPECT_DOUBLE_EQ(l.box3d.x, -0.65);
  EXPECT_DOUBLE_EQ(l.box3d.y, 1.71);
  EXPECT_DOUBLE_EQ(l.box3d.z, 46.70);
  EXPECT_DOUBLE_EQ(l.box3d.theta, -1.59);
  EXPECT_FALSE(l.score.has_value());
  EXPECT_EQ(parse_kitti_label(serialize_kitti_label(l)), l);
}

TEST(Label, DontCareIsParsedAndFiltered) {
  const auto dc = parse_kitti_label("DontCare -1 -1 -10 500 160 520 170 -1 -1 -1 -1000 -1000 -1000 -10");
  EXPECT_TRUE(dc.is_dont_care());
  EXPECT_EQ(dc.occlusion_level, -1);
  const auto car = parse_kitti_label("Car 0 0 0 1 1 20 20 1.5 1.6 3.9 0 1.6 10 0");
  const auto ped = parse_kitti_label("Pedestrian 0 0 0 1 1 20 20 1.7 0.6 0.8 0 1.6 10 0");
  const auto kept = detection_targets({dc, car, ped});
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0], car);
}

TEST(Label, ScoreIsSixteenthField) {
  const auto l = parse_kitti_label("Car -1 -1 0.5 1 2 30 40 1.5 1.6 3.9 1 1.6 12 0.3 0.875");
  ASSERT_TRUE(l.score.has_value());
  EXPECT_DOUBLE_EQ(*l.score, 0.875);
  EXPECT_EQ(tokens(serialize_kitti_label(l)).size(), 16u);
}

TEST(Label, ArityErrorCarriesLineNumber) {
  try {
    parse_kitti_label("Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70", 7);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7u);
  }
  try {
    parse_kitti_label_file("Car 0 0 0 1 1 20 20 1.5 1.6 3.9 0 1.6 10 0\nCar 0 0 0 1 1 20\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Label, NonNumericFieldIsNamed) {
  try {
    parse_kitti_label("Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 abc 3.64 -0.65 1.71 46.70 -1.59", 3);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_FALSE(e.field().empty());
    EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
  }
  EXPECT_THROW(parse_kitti_label("Boat 0 0 0 1 1 20 20 1.5 1.6 3.9 0 1.6 10 0"), ParseError);
  EXPECT_THROW(parse_kitti_label("Car 0 5 0 1 1 20 20 1.5 1.6 3.9 0 1.6 10 0"), ParseError);
  EXPECT_THROW(parse_kitti_label("Car 1.5 0 0 1 1 20 20 1.5 1.6 3.9 0 1.6 10 0"), ParseError);
}

TEST(Label, OcclusionFlag) {
  ObjectLabel l;
  const std::array<int, 4> want{0, 1, 1, 1};
  for (int level = 0; level < 4; ++level) {
    l.occlusion_level = level;
    EXPECT_EQ(occlusion_flag(l), want[static_cast<std::size_t>(level)]);
  }
}

TEST(Label, FixtureRoundTripIsBitExact) {
  const auto lines = fixture_lines();
  ASSERT_EQ(lines.size(), 500u);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto parsed = parse_kitti_label(lines[i], i + 1);
    const std::string canonical = serialize_kitti_label(parsed);
    const auto again = parse_kitti_label(canonical);
    EXPECT_EQ(again, parsed) << lines[i];
    EXPECT_EQ(serialize_kitti_label(again), canonical);
    // Field by field, the canonical text denotes the same numbers.
    const auto a = tokens(lines[i]);
    const auto b = tokens(canonical);
    ASSERT_EQ(a.size(), b.size()) << lines[i];
    EXPECT_EQ(a[0], b[0]);
    for (std::size_t k = 1; k < a.size(); ++k) EXPECT_EQ(std::stod(a[k]), std::stod(b[k])) << lines[i];
  }
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  const auto all = parse_kitti_label_file(text);
  EXPECT_EQ(parse_kitti_label_file(serialize_kitti_label_file(all)), all);
}

TEST(Calib, ReadsP2) {
  const std::string calib =
      "P0: 700 0 600 0 0 700 180 0 0 0 1 0\n"
      "P2: 700 0 600 0 0 710 180 0 0 0 1 0\n";
  const auto intr = parse_kitti_calib(calib);
  EXPECT_DOUBLE_EQ(intr.fx, 700);
  EXPECT_DOUBLE_EQ(intr.fy, 710);
  EXPECT_DOUBLE_EQ(intr.cx, 600);
  EXPECT_DOUBLE_EQ(intr.cy, 180);
}

TEST(Calib, FoldsBaselineIntoCx) {
  const auto intr = parse_kitti_calib("P2: 700 0 600 -49 0 700 180 0 0 0 1 0\n");
  EXPECT_DOUBLE_EQ(intr.cx, 600 - 0.07);
}

TEST(Calib, MissingP2IsAnError) {
  EXPECT_THROW(parse_kitti_calib("P0: 700 0 600 0 0 700 180 0 0 0 1 0\n"), ParseError);
  EXPECT_THROW(parse_kitti_calib("P2: 700 0 600\n"), ParseError);
}

TEST(Calib, RoundTrip) {
  const CameraIntrinsics intr{721.5377, 721.5377, 609.5593, 172.854};
  EXPECT_EQ(parse_kitti_calib(serialize_kitti_calib(intr)), intr);
}

TEST(Image, PngRoundTrip) {
  TempDir dir("png");
  Image im(5, 7);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x)
      for (int c = 0; c < 3; ++c) im.set_raw(y, x, c, static_cast<std::uint8_t>(y * 40 + x * 5 + c));
  write_png(dir.path() / "a.png", im);
  EXPECT_EQ(read_png(dir.path() / "a.png"), im);
  EXPECT_THROW(read_png(dir.path() / "missing.png"), Error);
}

TEST(Scene, IsDeterministic) {
  const SceneRecipe r;
  for (std::uint64_t i : {0u, 17u, 999u}) {
    const auto a = generate_scene(r, i);
    const auto b = generate_scene(r, i);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.id, frame_id(i));
  }
  SceneRecipe other = r;
  other.seed = 1;
  EXPECT_NE(generate_scene(r, 0).image, generate_scene(other, 0).image);
}

TEST(Scene, LabelsRespectRecipe) {
  const SceneRecipe r;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const auto s = generate_scene(r, i);
    ASSERT_FALSE(s.labels.empty());
    EXPECT_LE(s.labels.size(), static_cast<std::size_t>(r.max_objects));
    for (const auto& l : s.labels) {
      EXPECT_GE(l.box3d.z, r.depth_min);
      EXPECT_LE(l.box3d.z, r.depth_max);
      EXPECT_LE(l.box3d.z, r.dataset_depth_max);
      EXPECT_GE(l.box2d.x1, 0.0);
      EXPECT_GE(l.box2d.y1, 0.0);
      EXPECT_LE(l.box2d.x2, r.image_width);
      EXPECT_LE(l.box2d.y2, r.image_height);
      EXPECT_TRUE(l.box2d.valid());
      EXPECT_TRUE(l.occlusion_level == 0 || l.occlusion_level == 1);
      EXPECT_GE(l.truncation, 0.0);
      EXPECT_LE(l.truncation, 1.0);
    }
  }
}

TEST(Scene, SingleObjectIsNeverOccluded) {
  SceneRecipe r;
  r.min_objects = 1;
  r.max_objects = 1;
  for (std::uint64_t i = 0; i < 100; ++i) {
    for (const auto& l : generate_scene(r, i).labels) EXPECT_EQ(l.occlusion_level, 0);
  }
}

TEST(Scene, CoverageMatchesRasterization) {
  const SceneRecipe r;
  int occluded = 0;
  for (std::uint64_t i = 0; i < 60; ++i) {
    const auto s = generate_scene(r, i);
    const auto cov = scene_coverage(r, i);
    ASSERT_EQ(cov.size(), s.labels.size());
    std::vector<Polygon> nearer;
    for (std::size_t k = 0; k < s.labels.size(); ++k) {
      const auto& l = s.labels[k];
      if (k > 0) EXPECT_GE(l.box3d.z, s.labels[k - 1].box3d.z);
      const auto sil = projected_silhouette(l.box3d, r.camera);
      const auto [oracle, pixels] = maskdet::testing::rasterized_coverage(sil, nearer, r.image_width, r.image_height);
      ASSERT_GT(pixels, 0u);
      const double quantum = 1.0 / static_cast<double>(pixels);
      EXPECT_LE(std::abs(oracle - cov[k]), quantum + 1e-12) << "scene " << i << " label " << k;
      if (std::abs(oracle - r.occlusion_threshold) > quantum) {
        EXPECT_EQ(l.occlusion_level, oracle >= r.occlusion_threshold ? 1 : 0);
      }
      occluded += l.occlusion_level;
      nearer.push_back(sil);
    }
  }
  EXPECT_GT(occluded, 0);
}

TEST(Scene, FullyCoveredObjectIsDroppedOrOccluded) {
  // An object hidden beyond max_coverage never appears; one covered at or
  // beyond the threshold is flagged.
  const SceneRecipe r;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto s = generate_scene(r, i);
    const auto cov = scene_coverage(r, i);
    for (std::size_t k = 0; k < cov.size(); ++k) {
      EXPECT_LE(cov[k], r.max_coverage);
      EXPECT_EQ(s.labels[k].occlusion_level, cov[k] >= r.occlusion_threshold ? 1 : 0);
    }
  }
}

TEST(Scene, OccludedShareFallsInBand) {
  const SceneRecipe r;
  std::size_t cars = 0;
  std::size_t occluded = 0;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    for (const auto& l : generate_scene(r, i).labels) {
      ++cars;
      occluded += static_cast<std::size_t>(occlusion_flag(l));
    }
  }
  const double share = static_cast<double>(occluded) / static_cast<double>(cars);
  EXPECT_GE(share, r.occluded_share_band.first);
  EXPECT_LE(share, r.occluded_share_band.second);
}

TEST(Scene, ImpossibleRecipeThrows) {
  SceneRecipe r;
  r.min_box_height = 1000;
  r.max_attempts = 2;
  EXPECT_THROW(generate_scene(r, 0), Error);
}

TEST(Recipe, TextRoundTripAndShippedDefault) {
  SceneRecipe r;
  r.seed = 42;
  r.depth_min = 7.5;
  r.occluded_share_band = {0.1, 0.5};
  EXPECT_EQ(SceneRecipe::from_text(r.to_text()), r);
  EXPECT_EQ(SceneRecipe::from_file(std::string(MASKDET_CONFIG_DIR) + "/scene_recipe.cfg"), SceneRecipe{});
}

TEST(Recipe, ValidationNamesTheField) {
  const std::vector<std::pair<std::string, std::string>> bad{
      {"occlusion_threshold", "1"}, {"depth_range", "0,30"}, {"max_coverage", "0"}};
  for (const auto& [key, value] : bad) {
    try {
      SceneRecipe::from_text(key + " = " + value + "\n");
      ADD_FAILURE() << key;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  }
  SceneRecipe far;
  far.depth_max = 70;
  EXPECT_THROW(far.validate(), ConfigError);
}

TEST(Dataset, MaterializeAndLoad) {
  TempDir dir("dataset");
  SceneRecipe r = maskdet::testing::micro_recipe();
  materialize_synthetic(dir.path(), r, 6, 2, 1);
  const auto train = KittiDataset::open(dir.path(), "train");
  const auto val = KittiDataset::open(dir.path(), "val");
  ASSERT_EQ(train.size(), 4u);
  ASSERT_EQ(val.size(), 2u);
  EXPECT_EQ(val.ids().front(), "000004");
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto s = train.load(i);
    const auto g = generate_scene(r, i);
    EXPECT_EQ(s.id, g.id);
    EXPECT_EQ(s.image, g.image);
    EXPECT_EQ(s.labels, g.labels);
    EXPECT_EQ(s.intrinsics, g.intrinsics);
  }
  const auto all = KittiDataset::open(dir.path(), "all").load_all(3);
  EXPECT_EQ(all.size(), 6u);
}

TEST(Dataset, OutputIndependentOfWorkerCount) {
  TempDir a("w1");
  TempDir b("w3");
  const SceneRecipe r = maskdet::testing::micro_recipe();
  materialize_synthetic(a.path(), r, 9, 3, 1);
  materialize_synthetic(b.path(), r, 9, 3, 3);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a.path());
    EXPECT_EQ(maskdet::testing::read_bytes(e.path()), maskdet::testing::read_bytes(b.path() / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 9u * 3u + 3u);
}

TEST(Dataset, MissingFilesAreListed) {
  TempDir dir("missing");
  materialize_synthetic(dir.path(), maskdet::testing::micro_recipe(), 4, 1, 1);
  std::filesystem::remove(dir.path() / "image_2" / "000001.png");
  std::filesystem::remove(dir.path() / "calib" / "000002.txt");
  try {
    KittiDataset::open(dir.path(), "train");
    FAIL();
  } catch (const Error& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("000001"), std::string::npos);
    EXPECT_NE(what.find("000002"), std::string::npos);
  }
  EXPECT_THROW(KittiDataset::open(dir.path(), "nosuchsplit"), Error);
}

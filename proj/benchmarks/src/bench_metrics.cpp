#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "maskdet/eval/ap.hpp"
#include "maskdet/eval/iou.hpp"
#include "maskdet/train/hungarian.hpp"

using namespace maskdet;

namespace {

std::vector<Box3D> random_boxes(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-3, 3), dim(0.5, 4), yaw(-3.14159, 3.14159);
  std::vector<Box3D> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(Box3D::make(pos(rng), 1.5, 20 + pos(rng), dim(rng), dim(rng), dim(rng), yaw(rng)));
  }
  return out;
}

}  // namespace

static void BM_BevIou(benchmark::State& state) {
  const auto boxes = random_boxes(256, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::bev_iou(boxes[i % 256], boxes[(i * 7 + 3) % 256]));
    ++i;
  }
}
BENCHMARK(BM_BevIou);

static void BM_Iou3d(benchmark::State& state) {
  const auto boxes = random_boxes(256, 2);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::iou_3d(boxes[i % 256], boxes[(i * 7 + 3) % 256]));
    ++i;
  }
}
BENCHMARK(BM_Iou3d);

// One val split's worth of images with a handful of detections each.
static void BM_ApR40(benchmark::State& state) {
  const auto images_count = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<eval::ImageEval> images(images_count);
  for (auto& im : images) {
    const auto truths = random_boxes(4, rng());
    for (const auto& b : truths) {
      ObjectLabel t;
      t.box3d = b;
      im.truths.push_back(t);
      im.in_stratum.push_back(true);
      ObjectLabel d = t;
      d.box3d.x += 0.3 * (unit(rng) - 0.5);
      d.box3d.z += 1.0 * (unit(rng) - 0.5);
      d.score = unit(rng);
      im.detections.push_back(d);
    }
  }
  const eval::IouFn iou = [](const ObjectLabel& d, const ObjectLabel& t) { return eval::iou_3d(d.box3d, t.box3d); };
  for (auto _ : state) benchmark::DoNotOptimize(eval::ap_r40(images, iou, 0.7));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(images_count));
}
BENCHMARK(BM_ApR40)->Arg(100)->Arg(500);

static void BM_Hungarian(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0, 10);
  Eigen::MatrixXd cost(n, n / 2 + 1);
  for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = unit(rng);
  for (auto _ : state) benchmark::DoNotOptimize(train::solve_assignment(cost));
}
BENCHMARK(BM_Hungarian)->Arg(8)->Arg(32)->Arg(100);

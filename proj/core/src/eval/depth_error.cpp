#include "maskdet/eval/depth_error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maskdet/core/error.hpp"

namespace maskdet::eval {

std::string depth_bin_name(int bin) {
  static constexpr std::array<const char*, kNumDepthBins> names{"0-20", "20-40", "40-inf", "all"};
  return names.at(static_cast<std::size_t>(bin));
}

DepthErrors depth_mae(std::span<const std::vector<ObjectLabel>> detections,
                      std::span<const std::vector<ObjectLabel>> truths, double iou_threshold) {
  if (detections.size() != truths.size()) throw InvalidInput("depth_mae: image count mismatch");
  std::array<double, kNumDepthBins> sum{};
  DepthErrors out;
  for (std::size_t im = 0; im < detections.size(); ++im) {
    const auto& dets = detections[im];
    const auto& gts = truths[im];
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dets[a].score.value_or(0.0) > dets[b].score.value_or(0.0);
    });
    std::vector<bool> taken(gts.size(), false);
    for (std::size_t d : order) {
      double best = -1.0;
      std::size_t best_g = 0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g]) continue;
        const double v = box2d_iou(dets[d].box2d, gts[g].box2d);
        if (v >= iou_threshold && v > best) {
          best = v;
          best_g = g;
        }
      }
      if (best < 0.0) continue;
      taken[best_g] = true;
      const double z = gts[best_g].box3d.z;
      const double err = std::abs(dets[d].box3d.z - z);
      int bin = 2;
      if (z < kDepthBinEdges[1]) {
        bin = 0;
      } else if (z < kDepthBinEdges[2]) {
        bin = 1;
      }
      for (int b : {bin, kNumDepthBins - 1}) {
        sum[static_cast<std::size_t>(b)] += err;
        out.count[static_cast<std::size_t>(b)] += 1;
      }
    }
  }
  for (std::size_t b = 0; b < kNumDepthBins; ++b) {
    if (out.count[b] > 0) out.mae[b] = sum[b] / static_cast<double>(out.count[b]);
  }
  return out;
}

}  // namespace maskdet::eval

#pragma once

#include <string>
#include <vector>

#include "maskdet/core/geometry.hpp"
#include "maskdet/data/image.hpp"
#include "maskdet/data/label.hpp"

namespace maskdet {

struct Sample {
  std::string id;
  Image image;
  CameraIntrinsics intrinsics{};
  std::vector<ObjectLabel> labels;
};

/// Zero-padded six-digit KITTI frame id.
std::string frame_id(std::size_t index);

/// Labels that take part in matching and evaluation (Cars only; DontCare and
/// other classes are dropped).
std::vector<ObjectLabel> detection_targets(const std::vector<ObjectLabel>& labels);

}  // namespace maskdet

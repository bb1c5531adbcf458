#pragma once

#include <vector>

#include "maskdet/core/geometry.hpp"
#include "maskdet/data/label.hpp"
#include "maskdet/data/sample.hpp"
#include "maskdet/model/network.hpp"

namespace maskdet::model {

/// Turns head outputs into scored Car labels. Queries whose most likely class
/// is no-object or whose Car probability is below `score_threshold` are
/// dropped. The 3D center is the back-projection of the 2D box center plus the
/// predicted offset at the predicted depth. Truncation and occlusion carry the
/// -1 sentinel.
template <typename T>
std::vector<ObjectLabel> decode_detections(const HeadOutput<T>& out, const CameraIntrinsics& intr,
                                           double score_threshold, int image_width, int image_height);

/// Queries after inference routing: occluded queries (probability >=
/// occlusion_threshold) are completed, the rest pass through. Without
/// grouping every query is completed; without completion routing is skipped.
template <typename T>
Matrix<T> inference_queries(Network<T>& net, const Image& image);

/// Full evaluation-mode forward pass. Draws no masks.
template <typename T>
HeadOutput<T> infer(Network<T>& net, const Image& image, const CameraIntrinsics& intr);

template <typename T>
std::vector<ObjectLabel> predict(Network<T>& net, const Sample& sample);

}  // namespace maskdet::model

#pragma once

#include "maskdet/nn/tensor.hpp"

namespace maskdet::occlusion {

/// Zeroes square patches of a channels-last image independently with
/// probability `ratio`. Counts as one mask sampling call.
template <typename T>
nn::FeatureMap<T> sample_image_mask(const nn::FeatureMap<T>& image, double ratio, int patch, nn::Rng& rng);

}  // namespace maskdet::occlusion

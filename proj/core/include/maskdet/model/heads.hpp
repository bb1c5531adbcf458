#pragma once

#include <array>

#include "maskdet/core/config.hpp"
#include "maskdet/core/geometry.hpp"
#include "maskdet/nn/layers.hpp"

namespace maskdet::model {

using nn::Matrix;

/// Class index of the no-object target; index 0 is Car.
inline constexpr int kNoObject = 1;
inline constexpr int kNumClassLogits = 2;

/// Mean Car size (h, w, l) in meters; dims are predicted as exp(raw) * prior.
inline constexpr std::array<double, 3> kCarDimsPrior{1.53, 1.63, 3.88};

/// Pre-activation outputs of the detection head, one row per query.
template <typename T>
struct HeadRaw {
  Matrix<T> class_logits;  // N x 2
  Matrix<T> box2d;         // N x 4, sigmoid -> (cx, cy, w, h) / image size; includes the reference point
  Matrix<T> depth;         // N x 1, sigmoid -> apparent height of a prior-height car
  Matrix<T> dims;          // N x 3, exp -> (h, w, l) * prior
  Matrix<T> orientation;   // N x 2, normalised -> (sin, cos)
  Matrix<T> center;        // N x 2, projected 3D center minus 2D box center / image size
};

/// Decoded per-query predictions.
template <typename T>
struct HeadOutput {
  Matrix<T> class_logits;
  Matrix<T> box2d;
  Matrix<T> depth;
  Matrix<T> dims;
  Matrix<T> orientation;
  Matrix<T> center_offset;

  Eigen::Index size() const { return class_logits.rows(); }
};

/// Distance at which a car of prior height spans the full image height:
/// fy * prior_h / image_height.
double depth_scale(const CameraIntrinsics& intr, int image_height);

/// Depth is decoded as depth_scale / sigmoid(raw.depth): the branch predicts
/// the apparent image height of a prior-height car, normalised by the image height.
template <typename T>
HeadOutput<T> decode_head(const HeadRaw<T>& raw, double depth_scale);

/// Softmax probability of Car for every query.
template <typename T>
Matrix<T> car_probability(const Matrix<T>& class_logits);

/// Independent two-layer perceptron per regression target. Every query also
/// owns a learned reference point that offsets its 2D box center logits.
template <typename T>
class DetectionHead {
 public:
  struct Cache {
    std::array<typename nn::Mlp<T>::Cache, 6> branch;
  };

  DetectionHead() = default;
  DetectionHead(const Config& config, nn::Rng& rng);

  /// `queries` holds one row per query, in query order.
  HeadRaw<T> forward(const Matrix<T>& queries, Cache* cache) const;
  /// Returns dL/dqueries.
  Matrix<T> backward(const HeadRaw<T>& draw, const Cache& cache);

  template <typename F>
  void visit(F&& f) {
    static constexpr std::array<const char*, 6> names{"class", "box2d", "depth",
                                                      "dims",  "orientation", "center"};
    for (std::size_t i = 0; i < branches_.size(); ++i) {
      branches_[i].visit(std::string("head.") + names[i], f);
    }
    f(std::string("head.reference"), reference_);
  }

 private:
  std::array<nn::Mlp<T>, 6> branches_;
  nn::Parameter<T> reference_;  // K x 2 center logits
};

/// Occlusion classifier: two-layer perceptron with a single logit. The last
/// layer starts at zero so an untrained classifier outputs probability 0.5.
template <typename T>
class OcclusionClassifier {
 public:
  using Cache = typename nn::Mlp<T>::Cache;

  OcclusionClassifier() = default;
  OcclusionClassifier(const Config& config, nn::Rng& rng);

  /// N x 1 logits.
  Matrix<T> logits(const Matrix<T>& queries, Cache* cache) const;
  Matrix<T> probabilities(const Matrix<T>& queries) const;
  Matrix<T> backward(const Matrix<T>& dlogits, const Cache& cache);

  template <typename F>
  void visit(F&& f) {
    mlp_.visit("occlusion", f);
  }

 private:
  nn::Mlp<T> mlp_;
};

}  // namespace maskdet::model

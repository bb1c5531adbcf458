#include "maskdet/model/inference.hpp"

#include <cmath>

#include "maskdet/occlusion/masking.hpp"

namespace maskdet::model {

template <typename T>
std::vector<ObjectLabel> decode_detections(const HeadOutput<T>& out, const CameraIntrinsics& intr,
                                           double score_threshold, int image_width, int image_height) {
  const double w = image_width;
  const double h = image_height;
  const Matrix<T> p = car_probability<T>(out.class_logits);
  std::vector<ObjectLabel> dets;
  for (Eigen::Index q = 0; q < out.size(); ++q) {
    const double score = p(q, 0);
    if (out.class_logits(q, kNoObject) > out.class_logits(q, 0) || score < score_threshold) continue;
    const double cx = out.box2d(q, 0);
    const double cy = out.box2d(q, 1);
    const double bw = out.box2d(q, 2);
    const double bh = out.box2d(q, 3);
    ObjectLabel d;
    d.category = Category::Car;
    d.truncation = -1.0;
    d.occlusion_level = -1;
    d.box2d = {(cx - 0.5 * bw) * w, (cy - 0.5 * bh) * h, (cx + 0.5 * bw) * w, (cy + 0.5 * bh) * h};
    const double depth = out.depth(q, 0);
    const Vec2 pixel{(cx + static_cast<double>(out.center_offset(q, 0))) * w,
                     (cy + static_cast<double>(out.center_offset(q, 1))) * h};
    const Vec3 c = back_project(pixel, depth, intr);
    const double dh = out.dims(q, 0);
    const double theta = std::atan2(static_cast<double>(out.orientation(q, 0)),
                                    static_cast<double>(out.orientation(q, 1)));
    d.box3d = Box3D::make(c.x(), c.y() + 0.5 * dh, c.z(), dh, out.dims(q, 1), out.dims(q, 2), theta);
    d.alpha = observation_angle(d.box3d.theta, d.box3d.x, d.box3d.z);
    d.score = score;
    dets.push_back(d);
  }
  return dets;
}

template <typename T>
Matrix<T> inference_queries(Network<T>& net, const Image& image) {
  const Config& cfg = net.config();
  Matrix<T> q = net.backbone.forward(image, nullptr);
  if (!cfg.use_completion) return q;
  std::vector<double> probs(static_cast<std::size_t>(q.rows()), 1.0);
  if (cfg.use_grouping) {
    const Matrix<T> p = net.occlusion.probabilities(q);
    for (Eigen::Index i = 0; i < p.rows(); ++i) probs[static_cast<std::size_t>(i)] = p(i, 0);
  }
  const auto groups = occlusion::group_queries<T>(q, probs, cfg.occlusion_threshold);
  return occlusion::route_inference<T>(groups, [&](const Matrix<T>& rows) {
    return net.completion.forward(rows, false, nullptr);
  });
}

template <typename T>
HeadOutput<T> infer(Network<T>& net, const Image& image, const CameraIntrinsics& intr) {
  const Matrix<T> q = inference_queries(net, image);
  return decode_head(net.head.forward(q, nullptr), depth_scale(intr, net.config().image_height));
}

template <typename T>
std::vector<ObjectLabel> predict(Network<T>& net, const Sample& sample) {
  const Config& cfg = net.config();
  return decode_detections(infer(net, sample.image, sample.intrinsics), sample.intrinsics, cfg.score_threshold, cfg.image_width,
                           cfg.image_height);
}

#define MASKDET_INSTANTIATE(T)                                                                             \
  template std::vector<ObjectLabel> decode_detections<T>(const HeadOutput<T>&, const CameraIntrinsics&,   \
                                                         double, int, int);                               \
  template Matrix<T> inference_queries<T>(Network<T>&, const Image&);                                     \
  template HeadOutput<T> infer<T>(Network<T>&, const Image&, const CameraIntrinsics&);                    \
  template std::vector<ObjectLabel> predict<T>(Network<T>&, const Sample&);

MASKDET_INSTANTIATE(float)
MASKDET_INSTANTIATE(double)
#undef MASKDET_INSTANTIATE

}  // namespace maskdet::model

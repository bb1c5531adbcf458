#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "maskdet/core/error.hpp"
#include "maskdet/model/checkpoint.hpp"
#include "maskdet/model/inference.hpp"
#include "maskdet/model/network.hpp"
#include "maskdet/nn/layers.hpp"
#include "maskdet/train/optimizer.hpp"
#include "maskdet/train/step.hpp"
#include "maskdet_test/oracles.hpp"

using namespace maskdet;
using nn::Matrix;

namespace {

Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, nn::Rng& rng, double scale = 1.0) {
  Matrix<double> m(r, c);
  nn::fill_uniform(m, scale, rng);
  return m;
}

struct Probe {
  std::string name;
  Matrix<double>* value;
  const Matrix<double>* analytic;
};

/// Central differences of sum(forward() .* weights) against analytic gradients.
void expect_gradients(const std::function<Matrix<double>()>& forward, const Matrix<double>& weights,
                      const std::vector<Probe>& probes, double tol = 1e-6) {
  auto objective = [&] { return (forward().array() * weights.array()).sum(); };
  for (const auto& p : probes) {
    for (Eigen::Index i = 0; i < p.value->size(); ++i) {
      double& v = p.value->data()[i];
      const double saved = v;
      v = saved + 1e-6;
      const double up = objective();
      v = saved - 1e-6;
      const double down = objective();
      v = saved;
      const double numeric = (up - down) / 2e-6;
      const double a = p.analytic->data()[i];
      EXPECT_NEAR(a, numeric, tol * std::max(1.0, std::abs(numeric))) << p.name << "[" << i << "]";
    }
  }
}

Image random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  Image im(h, w);
  for (auto& b : im.bytes()) b = static_cast<std::uint8_t>(d(rng));
  return im;
}

}  // namespace

TEST(Layers, LinearGradients) {
  nn::Rng rng(1);
  nn::Linear<double> lin(5, 3, rng);
  Matrix<double> x = random_matrix(4, 5, rng);
  const Matrix<double> g = random_matrix(4, 3, rng);
  lin.weight.zero_grad();
  lin.bias.zero_grad();
  const Matrix<double> dx = lin.backward(x, g);
  expect_gradients([&] { return lin.forward(x); }, g,
                   {{"x", &x, &dx}, {"w", &lin.weight.value, &lin.weight.grad}, {"b", &lin.bias.value, &lin.bias.grad}});
}

TEST(Layers, LayerNormGradients) {
  nn::Rng rng(2);
  nn::LayerNorm<double> ln(6);
  ln.gamma.value = random_matrix(1, 6, rng) .array() + 1.0;
  ln.beta.value = random_matrix(1, 6, rng);
  Matrix<double> x = random_matrix(3, 6, rng, 2.0);
  const Matrix<double> g = random_matrix(3, 6, rng);
  nn::LayerNorm<double>::Cache cache;
  ln.forward(x, &cache);
  const Matrix<double> dx = ln.backward(g, cache);
  expect_gradients([&] { return ln.forward(x, nullptr); }, g,
                   {{"x", &x, &dx}, {"gamma", &ln.gamma.value, &ln.gamma.grad}, {"beta", &ln.beta.value, &ln.beta.grad}});
}

TEST(Layers, BatchNormGradientsAndEvalMode) {
  nn::Rng rng(3);
  nn::BatchNorm<double> bn(4);
  bn.gamma.value = random_matrix(1, 4, rng).array() + 1.0;
  Matrix<double> x = random_matrix(7, 4, rng, 3.0);
  const Matrix<double> g = random_matrix(7, 4, rng);
  nn::BatchNorm<double>::Cache cache;
  bn.forward(x, true, &cache);
  const Matrix<double> dx = bn.backward(g, cache);
  expect_gradients([&] { return nn::BatchNorm<double>(bn).forward(x, true, nullptr); }, g,
                   {{"x", &x, &dx}, {"gamma", &bn.gamma.value, &bn.gamma.grad}, {"beta", &bn.beta.value, &bn.beta.grad}});
  // A constant batch must not divide by zero.
  const Matrix<double> flat = Matrix<double>::Constant(5, 4, 2.5);
  EXPECT_TRUE(bn.forward(flat, true, nullptr).allFinite());
  EXPECT_TRUE(bn.forward(flat, false, nullptr).allFinite());
}

TEST(Layers, Conv2dGradients) {
  nn::Rng rng(4);
  nn::Conv2d<double> conv(2, 3, 3, 2, 1, rng);
  nn::FeatureMap<double> x{5, 6, random_matrix(30, 2, rng)};
  const int oh = conv.out_size(5), ow = conv.out_size(6);
  const Matrix<double> g = random_matrix(oh * ow, 3, rng);
  nn::Conv2d<double>::Cache cache;
  conv.forward(x, &cache);
  const auto dx = conv.backward({oh, ow, g}, cache);
  expect_gradients([&] { return conv.forward(x, nullptr).data; }, g,
                   {{"x", &x.data, &dx.data}, {"w", &conv.weight.value, &conv.weight.grad}, {"b", &conv.bias.value, &conv.bias.grad}});
}

TEST(Layers, Conv1dGradients) {
  nn::Rng rng(5);
  nn::Conv1d<double> conv(2, 3, 5, rng);
  const int length = 8;
  Matrix<double> x = random_matrix(2 * length, 2, rng);
  const Matrix<double> g = random_matrix(2 * length, 3, rng);
  nn::Conv1d<double>::Cache cache;
  conv.forward(x, length, &cache);
  const Matrix<double> dx = conv.backward(g, length, cache);
  expect_gradients([&] { return conv.forward(x, length, nullptr); }, g,
                   {{"x", &x, &dx}, {"w", &conv.weight.value, &conv.weight.grad}, {"b", &conv.bias.value, &conv.bias.grad}});
}

TEST(Layers, AttentionGradients) {
  nn::Rng rng(6);
  nn::Attention<double> att(8, rng);
  Matrix<double> xq = random_matrix(3, 8, rng);
  Matrix<double> xkv = random_matrix(5, 8, rng);
  const Matrix<double> g = random_matrix(3, 8, rng);
  nn::Attention<double>::Cache cache;
  att.forward(xq, xkv, &cache);
  const auto [dq, dkv] = att.backward(g, cache);
  expect_gradients([&] { return att.forward(xq, xkv, nullptr); }, g,
                   {{"xq", &xq, &dq},
                    {"xkv", &xkv, &dkv},
                    {"wq", &att.wq.weight.value, &att.wq.weight.grad},
                    {"wk", &att.wk.weight.value, &att.wk.weight.grad},
                    {"wv", &att.wv.weight.value, &att.wv.weight.grad},
                    {"wo", &att.wo.weight.value, &att.wo.weight.grad},
                    {"bv", &att.wv.bias.value, &att.wv.bias.grad}});
}

TEST(Layers, MlpGradients) {
  nn::Rng rng(7);
  nn::Mlp<double> mlp(4, 6, 2, rng);
  Matrix<double> x = random_matrix(5, 4, rng);
  const Matrix<double> g = random_matrix(5, 2, rng);
  nn::Mlp<double>::Cache cache;
  mlp.forward(x, &cache);
  const Matrix<double> dx = mlp.backward(g, cache);
  expect_gradients([&] { return mlp.forward(x, nullptr); }, g,
                   {{"x", &x, &dx}, {"fc1", &mlp.fc1.weight.value, &mlp.fc1.weight.grad}, {"fc2", &mlp.fc2.weight.value, &mlp.fc2.weight.grad}});
}

TEST(Backbone, ShapeAndDeterminism) {
  const Config c;
  model::Network<float> net(c, 1);
  const Image im = random_image(c.image_height, c.image_width, 1);
  const auto q1 = net.backbone.forward(im, nullptr);
  const auto q2 = net.backbone.forward(im, nullptr);
  EXPECT_EQ(q1.rows(), c.num_queries);
  EXPECT_EQ(q1.cols(), c.query_dim);
  EXPECT_TRUE(q1.allFinite());
  EXPECT_EQ(q1, q2);
  EXPECT_THROW(net.backbone.forward(random_image(32, 64, 2), nullptr), ConfigError);
}

TEST(Backbone, SameSeedSameParameters) {
  const Config c = maskdet::testing::micro_config();
  model::Network<double> a(c, 9), b(c, 9), other(c, 10);
  std::vector<Matrix<double>> pa, pb, po;
  a.visit_parameters([&](const std::string&, nn::Parameter<double>& p) { pa.push_back(p.value); });
  b.visit_parameters([&](const std::string&, nn::Parameter<double>& p) { pb.push_back(p.value); });
  other.visit_parameters([&](const std::string&, nn::Parameter<double>& p) { po.push_back(p.value); });
  EXPECT_EQ(pa, pb);
  EXPECT_NE(pa, po);
}

TEST(Backbone, TrainedModelReactsToOnePixel) {
  const Config c = maskdet::testing::micro_config();
  const auto scenes = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 4);
  model::Network<double> net(c, 2);
  train::AdamW<double> opt(1e-3, 0.0);
  std::vector<const Sample*> batch{&scenes[0], &scenes[1], &scenes[2], &scenes[3]};
  for (int step = 0; step < 5; ++step) {
    std::vector<nn::Rng> rngs(4, nn::Rng(static_cast<std::uint64_t>(step)));
    net.zero_grad();
    train::train_step<double>(net, batch, rngs);
    opt.step(net);
  }
  Image im = scenes[0].image;
  const auto before = net.backbone.forward(im, nullptr);
  im.set_raw(16, 30, 1, static_cast<std::uint8_t>(255 - im.raw(16, 30, 1)));
  const auto after = net.backbone.forward(im, nullptr);
  EXPECT_GT((before - after).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Occlusion, UntrainedProbabilityIsHalf) {
  const Config c;
  model::Network<double> net(c, 3);
  nn::Rng rng(1);
  const auto p = net.occlusion.probabilities(random_matrix(c.num_queries, c.query_dim, rng, 5.0));
  for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_DOUBLE_EQ(p(i, 0), 0.5);
}

TEST(Occlusion, ProbabilitiesInUnitInterval) {
  const Config c = maskdet::testing::micro_config();
  model::Network<double> net(c, 3);
  maskdet::testing::jitter_parameters(net, 2.0, 5);
  nn::Rng rng(2);
  const auto p = net.occlusion.probabilities(random_matrix(50, c.query_dim, rng, 50.0));
  EXPECT_GE(p.minCoeff(), 0.0);
  EXPECT_LE(p.maxCoeff(), 1.0);
}

TEST(Completion, PreservesShapeForEveryLayout) {
  for (const auto layout : {CompletionLayout::Signal, CompletionLayout::Channel}) {
    for (const int dim : {16, 32, 64, 128}) {
      Config c;
      c.query_dim = dim;
      c.completion_layout = layout;
      nn::Rng rng(3);
      model::CompletionNet<double> net(c, rng);
      const auto x = random_matrix(6, dim, rng);
      for (const bool training : {true, false}) {
        const auto y = net.forward(x, training, nullptr);
        EXPECT_EQ(y.rows(), 6);
        EXPECT_EQ(y.cols(), dim);
      }
    }
  }
}

TEST(Completion, FiniteOnExtremeInputs) {
  const Config c;
  nn::Rng rng(4);
  model::CompletionNet<double> net(c, rng);
  EXPECT_TRUE(net.forward(Matrix<double>::Zero(4, c.query_dim), true, nullptr).allFinite());
  EXPECT_TRUE(net.forward(Matrix<double>::Constant(1, c.query_dim, 1e6), true, nullptr).allFinite());
  EXPECT_TRUE(net.forward(random_matrix(3, c.query_dim, rng, 1e8), false, nullptr).allFinite());
}

TEST(Completion, IsLightweight) {
  const Config c;
  model::Network<float> net(c, 0);
  std::size_t params = 0;
  net.completion.visit([&](const std::string&, nn::Parameter<float>& p) { params += static_cast<std::size_t>(p.value.size()); });
  EXPECT_LE(params, 3'000'000u);
  EXPECT_LE(2.0 * static_cast<double>(net.completion.macs_per_query()) * c.num_queries, 0.1e9);
}

TEST(Completion, GradientsMatchFiniteDifferences) {
  for (const auto layout : {CompletionLayout::Signal, CompletionLayout::Channel}) {
    Config c = maskdet::testing::micro_config();
    c.completion_layout = layout;
    nn::Rng rng(5);
    model::CompletionNet<double> net(c, rng);
    Matrix<double> x = random_matrix(5, c.query_dim, rng);
    const Matrix<double> g = random_matrix(5, c.query_dim, rng);
    model::CompletionNet<double>::Cache cache;
    net.forward(x, true, &cache);
    const Matrix<double> dx = net.backward(g, cache);
    expect_gradients([&] { return model::CompletionNet<double>(net).forward(x, true, nullptr); }, g, {{"x", &x, &dx}},
                     1e-5);
  }
}

TEST(Head, OutputContracts) {
  const Config c;
  model::Network<double> net(c, 4);
  maskdet::testing::jitter_parameters(net, 0.5, 6);
  nn::Rng rng(3);
  const auto raw = net.head.forward(random_matrix(c.num_queries, c.query_dim, rng, 3.0), nullptr);
  const auto out = model::decode_head(raw, model::depth_scale(SceneRecipe{}.camera, c.image_height));
  EXPECT_EQ(out.size(), c.num_queries);
  for (Eigen::Index q = 0; q < out.size(); ++q) {
    for (int k = 0; k < 3; ++k) EXPECT_GT(out.dims(q, k), 0.0);
    EXPECT_NEAR(std::hypot(out.orientation(q, 0), out.orientation(q, 1)), 1.0, 1e-12);
    const double theta = std::atan2(out.orientation(q, 0), out.orientation(q, 1));
    EXPECT_GE(theta, -std::numbers::pi);
    EXPECT_LE(theta, std::numbers::pi);
    EXPECT_GT(out.depth(q, 0), 0.0);
    for (int k = 0; k < 4; ++k) {
      EXPECT_GE(out.box2d(q, k), 0.0);
      EXPECT_LE(out.box2d(q, k), 1.0);
    }
  }
  EXPECT_THROW(net.head.forward(random_matrix(c.num_queries + 1, c.query_dim, rng), nullptr), ShapeError);
}

TEST(Head, DepthDecode) {
  const CameraIntrinsics intr{186, 186, 160, 44};
  const double scale = model::depth_scale(intr, 96);
  EXPECT_DOUBLE_EQ(scale, 186 * 1.53 / 96);
  model::HeadRaw<double> raw;
  raw.class_logits = Matrix<double>::Zero(2, 2);
  raw.box2d = Matrix<double>::Zero(2, 4);
  raw.depth.resize(2, 1);
  raw.depth << 0.0, -1.0;
  raw.dims = Matrix<double>::Zero(2, 3);
  raw.orientation = Matrix<double>::Constant(2, 2, 1.0);
  raw.center = Matrix<double>::Zero(2, 2);
  const auto out = model::decode_head(raw, scale);
  EXPECT_NEAR(out.depth(0, 0), 2.0 * scale, 1e-12);
  EXPECT_NEAR(out.depth(1, 0), scale * (1.0 + std::exp(1.0)), 1e-12);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(out.dims(0, k), model::kCarDimsPrior[static_cast<std::size_t>(k)], 1e-12);
  EXPECT_NEAR(out.orientation(0, 0), std::sqrt(0.5), 1e-12);
}

namespace {

model::HeadOutput<double> single_query(double cx, double cy, double depth, bool car) {
  model::HeadOutput<double> out;
  out.class_logits.resize(1, 2);
  out.class_logits << (car ? 3.0 : -3.0), 0.0;
  out.box2d.resize(1, 4);
  out.box2d << cx, cy, 0.1, 0.2;
  out.depth = Matrix<double>::Constant(1, 1, depth);
  out.dims.resize(1, 3);
  out.dims << 1.5, 1.6, 3.9;
  out.orientation.resize(1, 2);
  out.orientation << 0.0, 1.0;
  out.center_offset = Matrix<double>::Zero(1, 2);
  return out;
}

}  // namespace

TEST(Decode, PrincipalPointBackProjectsOnAxis) {
  const CameraIntrinsics intr{186, 186, 160, 44};
  const auto dets = model::decode_detections(single_query(0.5, 44.0 / 96.0, 17.0, true), intr, 0.05, 320, 96);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_NEAR(dets[0].box3d.x, 0.0, 1e-12);
  EXPECT_NEAR(dets[0].box3d.z, 17.0, 1e-12);
  EXPECT_NEAR(dets[0].box3d.y - 0.5 * dets[0].box3d.h, 0.0, 1e-12);
  EXPECT_EQ(dets[0].occlusion_level, -1);
  EXPECT_DOUBLE_EQ(dets[0].truncation, -1.0);
  ASSERT_TRUE(dets[0].score.has_value());
}

TEST(Decode, NoObjectAndLowScoreAreDropped) {
  const CameraIntrinsics intr{186, 186, 160, 44};
  EXPECT_TRUE(model::decode_detections(single_query(0.5, 0.5, 10, false), intr, 0.0, 320, 96).empty());
  EXPECT_TRUE(model::decode_detections(single_query(0.5, 0.5, 10, true), intr, 0.99, 320, 96).empty());
}

TEST(Decode, RoundTripsProjectedBoxes) {
  const CameraIntrinsics intr{186, 186, 160, 44};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> x(-8, 8), z(5, 55), yaw(-3, 3);
  for (int i = 0; i < 200; ++i) {
    const auto box = Box3D::make(x(rng), 1.65, z(rng), 1.5, 1.6, 3.9, yaw(rng));
    const Vec2 c = project(box.geometric_center(), intr);
    auto out = single_query(0.4, 0.45, box.z, true);
    out.center_offset(0, 0) = c.x() / 320 - 0.4;
    out.center_offset(0, 1) = c.y() / 96 - 0.45;
    out.dims << box.h, box.w, box.l;
    out.orientation << std::sin(box.theta), std::cos(box.theta);
    const auto d = model::decode_detections(out, intr, 0.0, 320, 96).at(0).box3d;
    EXPECT_NEAR(d.x, box.x, 1e-6);
    EXPECT_NEAR(d.y, box.y, 1e-6);
    EXPECT_NEAR(d.z, box.z, 1e-6);
    EXPECT_NEAR(d.theta, box.theta, 1e-9);
  }
}

TEST(Network, ReconfigureGuardsArchitecture) {
  Config c = maskdet::testing::micro_config();
  model::Network<float> net(c, 1);
  Config thresholds = c;
  thresholds.score_threshold = 0.3;
  thresholds.use_masking = false;
  EXPECT_NO_THROW(net.reconfigure(thresholds));
  EXPECT_DOUBLE_EQ(net.config().score_threshold, 0.3);
  Config wider = c;
  wider.query_dim = 32;
  try {
    net.reconfigure(wider);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "query_dim");
  }
}

TEST(Checkpoint, RoundTripReproducesPredictions) {
  maskdet::testing::TempDir dir("ckpt");
  const Config c = maskdet::testing::micro_config();
  model::Network<float> net(c, 5);
  const auto scene = generate_scene(maskdet::testing::micro_recipe(), 0);
  model::Checkpoint ck;
  ck.config_text = c.to_text();
  ck.scalars["epoch"] = 3;
  model::export_network(net, ck);
  ck.save(dir.path() / "a.ckpt");
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "a.ckpt.partial"));
  const auto loaded = model::Checkpoint::load(dir.path() / "a.ckpt");
  EXPECT_DOUBLE_EQ(loaded.scalar("epoch"), 3.0);
  EXPECT_EQ(loaded.config(), c);
  auto restored = model::network_from_checkpoint<float>(loaded);
  const auto a = model::infer(net, scene.image, scene.intrinsics);
  const auto b = model::infer(restored, scene.image, scene.intrinsics);
  EXPECT_EQ(a.box2d, b.box2d);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.class_logits, b.class_logits);
}

TEST(Checkpoint, ShapeMismatchIsReported) {
  const Config c = maskdet::testing::micro_config();
  model::Network<float> net(c, 5);
  model::Checkpoint ck;
  ck.config_text = c.to_text();
  model::export_network(net, ck);
  Config other = c;
  other.query_dim = 24;
  model::Network<float> wrong(other, 5);
  try {
    model::import_network(wrong, ck);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("backbone"), std::string::npos);
  }
  ck.arrays.erase(ck.arrays.begin());
  model::Network<float> same(c, 5);
  EXPECT_THROW(model::import_network(same, ck), ShapeError);
}

TEST(Checkpoint, ForeignFileIsRejected) {
  maskdet::testing::TempDir dir("foreign");
  const auto p = dir.path() / "x.ckpt";
  std::ofstream(p) << "not a checkpoint";
  EXPECT_THROW(model::Checkpoint::load(p), ParseError);
}

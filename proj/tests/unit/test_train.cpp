#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "maskdet/core/error.hpp"
#include "maskdet/core/keyvalue.hpp"
#include "maskdet/model/inference.hpp"
#include "maskdet/occlusion/masking.hpp"
#include "maskdet/train/hungarian.hpp"
#include "maskdet/train/losses.hpp"
#include "maskdet/train/matching.hpp"
#include "maskdet/train/optimizer.hpp"
#include "maskdet/train/step.hpp"
#include "maskdet/train/trainer.hpp"
#include "maskdet_test/oracles.hpp"

using namespace maskdet;
using namespace maskdet::train;
using nn::Matrix;

namespace {

void expect_valid_assignment(const Eigen::MatrixXd& cost, const std::vector<int>& a) {
  ASSERT_EQ(a.size(), static_cast<std::size_t>(cost.rows()));
  std::set<int> used;
  int assigned = 0;
  for (int c : a) {
    if (c < 0) continue;
    EXPECT_LT(c, cost.cols());
    EXPECT_TRUE(used.insert(c).second);
    ++assigned;
  }
  EXPECT_EQ(assigned, std::min(cost.rows(), cost.cols()));
}

model::HeadOutput<double> output_for(const std::vector<LabelTarget>& targets, int k) {
  model::HeadOutput<double> out;
  out.class_logits = Matrix<double>::Zero(k, 2);
  out.box2d = Matrix<double>::Constant(k, 4, 0.5);
  out.depth = Matrix<double>::Constant(k, 1, 30.0);
  out.dims = Matrix<double>::Constant(k, 3, 2.0);
  out.orientation = Matrix<double>::Zero(k, 2);
  out.orientation.col(1).setOnes();
  out.center_offset = Matrix<double>::Zero(k, 2);
  for (int q = 0; q < k; ++q) {
    out.class_logits(q, 1) = 20.0;
    if (q >= static_cast<int>(targets.size())) continue;
    const auto& t = targets[static_cast<std::size_t>(q)];
    out.class_logits(q, 0) = 20.0;
    out.class_logits(q, 1) = -20.0;
    for (int j = 0; j < 4; ++j) out.box2d(q, j) = t.box2d[static_cast<std::size_t>(j)];
    out.depth(q, 0) = t.depth;
    for (int j = 0; j < 3; ++j) out.dims(q, j) = t.dims[static_cast<std::size_t>(j)];
    out.orientation(q, 0) = t.orientation[0];
    out.orientation(q, 1) = t.orientation[1];
    out.center_offset(q, 0) = t.center[0];
    out.center_offset(q, 1) = t.center[1];
  }
  return out;
}

std::vector<LabelTarget> scene_targets(const Sample& s) {
  const auto labels = detection_targets(s.labels);
  return make_targets(labels, s.intrinsics, s.image.width(), s.image.height());
}

}  // namespace

TEST(Hungarian, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 10);
  std::uniform_int_distribution<int> coarse(0, 3);
  int cases = 0;
  for (int rep = 0; rep < 40; ++rep) {
    for (int r = 1; r <= 6; ++r) {
      for (int c = 1; c <= 6; ++c) {
        Eigen::MatrixXd cost(r, c);
        for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = rep % 2 ? coarse(rng) : u(rng);
        const auto a = solve_assignment(cost);
        expect_valid_assignment(cost, a);
        EXPECT_NEAR(assignment_cost(cost, a), maskdet::testing::exhaustive_assignment_cost(cost), 1e-9);
        ++cases;
      }
    }
  }
  EXPECT_GE(cases, 1000);
}

TEST(Hungarian, HandBuiltThreeByTwo) {
  Eigen::MatrixXd cost(3, 2);
  cost << 4, 1,
          2, 8,
          3, 2;
  const auto m = match_from_cost(cost);
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(m.label_of_query(3), (std::vector<int>{1, 0, -1}));
  EXPECT_EQ(m.unmatched_queries, (std::vector<int>{2}));
}

TEST(Hungarian, DegenerateShapes) {
  const auto empty = match_from_cost(Eigen::MatrixXd(4, 0));
  EXPECT_TRUE(empty.pairs.empty());
  EXPECT_EQ(empty.unmatched_queries.size(), 4u);
  Eigen::MatrixXd one(1, 1);
  one << 3.5;
  EXPECT_EQ(match_from_cost(one).pairs, (std::vector<std::pair<int, int>>{{0, 0}}));
  Eigen::MatrixXd bad(2, 2);
  bad << 1, std::nan(""), 0, 1;
  EXPECT_THROW(solve_assignment(bad), InvalidInput);
}

TEST(Matching, CostFollowsDefinition) {
  const auto s = generate_scene(SceneRecipe{}, 3);
  const auto targets = scene_targets(s);
  auto out = output_for(targets, 6);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (Eigen::Index i = 0; i < out.class_logits.size(); ++i) out.class_logits.data()[i] = 2 * u(rng);
  out.depth(1, 0) = 12.0;
  const MatchCostWeights w{2.0, 5.0, 1.0, 60.0};
  const auto cost = matching_cost(out, std::span<const LabelTarget>(targets), w);
  ASSERT_EQ(cost.rows(), 6);
  ASSERT_EQ(cost.cols(), static_cast<Eigen::Index>(targets.size()));
  for (int q = 0; q < 6; ++q) {
    const double p = 1.0 / (1.0 + std::exp(out.class_logits(q, 1) - out.class_logits(q, 0)));
    for (std::size_t g = 0; g < targets.size(); ++g) {
      double l1 = 0;
      for (int j = 0; j < 4; ++j) l1 += std::abs(out.box2d(q, j) - targets[g].box2d[static_cast<std::size_t>(j)]);
      const double want = 2.0 * (1 - p) + 5.0 * l1 + std::abs(out.depth(q, 0) - targets[g].depth) / 60.0;
      EXPECT_NEAR(cost(q, static_cast<Eigen::Index>(g)), want, 1e-12);
    }
  }
  const auto m = hungarian_match(out, std::span<const LabelTarget>(targets), w);
  EXPECT_EQ(m.pairs.size(), std::min<std::size_t>(6, targets.size()));
  EXPECT_NEAR(assignment_cost(cost, [&] {
                std::vector<int> a(6, -1);
                for (auto [q, g] : m.pairs) a[static_cast<std::size_t>(q)] = g;
                return a;
              }()),
              maskdet::testing::exhaustive_assignment_cost(cost), 1e-9);
}

TEST(Matching, NoLabelsLeavesEveryQueryUnmatched) {
  const auto out = output_for({}, 5);
  const auto m = hungarian_match(out, std::span<const LabelTarget>(), MatchCostWeights{});
  EXPECT_TRUE(m.pairs.empty());
  EXPECT_EQ(m.unmatched_queries.size(), 5u);
}

TEST(Losses, SmoothL1Branches) {
  EXPECT_DOUBLE_EQ(smooth_l1(0.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1(0.5, 1.0), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(-0.5, 1.0), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(2.0, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(-2.0, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1_grad(0.5, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(smooth_l1_grad(-3.0, 1.0), -1.0);
}

TEST(Losses, CompletionExamples) {
  const Matrix<double> q = Matrix<double>::Random(3, 8);
  Matrix<double> g;
  EXPECT_DOUBLE_EQ(completion_loss<double>(q, q, 1.0, &g), 0.0);
  EXPECT_EQ(g, Matrix<double>::Zero(3, 8));
  const Matrix<double> half = (q.array() + 0.5).matrix();
  const Matrix<double> minus = (q.array() - 0.5).matrix();
  EXPECT_DOUBLE_EQ(completion_loss<double>(q, half, 1.0, nullptr), 0.125);
  EXPECT_DOUBLE_EQ(completion_loss<double>(q, minus, 1.0, nullptr), 0.125);
  EXPECT_DOUBLE_EQ(completion_loss<double>(q, Matrix<double>((q.array() + 2.0).matrix()), 1.0, nullptr), 1.5);
  EXPECT_DOUBLE_EQ(completion_loss<double>(Matrix<double>(0, 8), Matrix<double>(0, 8), 1.0, nullptr), 0.0);
}

TEST(Losses, CompletionGradient) {
  nn::Rng rng(3);
  Matrix<double> a(4, 6), b(4, 6);
  nn::fill_uniform(a, 2.0, rng);
  nn::fill_uniform(b, 2.0, rng);
  Matrix<double> g;
  completion_loss<double>(a, b, 1.0, &g);
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    Matrix<double> up = b, down = b;
    up.data()[i] += 1e-6;
    down.data()[i] -= 1e-6;
    const double numeric =
        (completion_loss<double>(a, up, 1.0, nullptr) - completion_loss<double>(a, down, 1.0, nullptr)) / 2e-6;
    EXPECT_NEAR(g.data()[i], numeric, 1e-7);
  }
}

TEST(Losses, OcclusionExamples) {
  MatchResult m;
  m.pairs = {{0, 0}, {2, 1}};
  m.unmatched_queries = {1, 3};
  std::vector<LabelTarget> t(2);
  t[0].occluded = 1;
  t[1].occluded = 0;
  EXPECT_NEAR(occlusion_loss(std::vector<double>{0.9, 0.4, 0.2, 0.7}, m, t), (-std::log(0.9) - std::log(0.8)) / 2,
              1e-12);
  EXPECT_NEAR(occlusion_loss(std::vector<double>{0.5, 0.1, 0.5, 0.9}, m, t), std::log(2.0), 1e-12);
  EXPECT_NEAR(occlusion_loss(std::vector<double>{1.0, 0.3, 0.0, 0.3}, m, t), 0.0, 1e-9);
  // Unmatched probabilities do not matter.
  EXPECT_DOUBLE_EQ(occlusion_loss(std::vector<double>{0.9, 0.4, 0.2, 0.7}, m, t),
                   occlusion_loss(std::vector<double>{0.9, 0.01, 0.2, 0.99}, m, t));
  EXPECT_DOUBLE_EQ(occlusion_loss(std::vector<double>{0.3, 0.3}, MatchResult{{}, {0, 1}}, t), 0.0);
}

TEST(Losses, BceWithLogitsGradient) {
  const std::vector<double> logits{-2.0, 0.3, 1.7};
  const std::vector<int> targets{0, 1, 1};
  std::vector<double> g;
  const double base = bce_with_logits(logits, targets, &g);
  std::vector<double> probs;
  for (double l : logits) probs.push_back(1 / (1 + std::exp(-l)));
  EXPECT_NEAR(base, binary_cross_entropy(probs, targets), 1e-12);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto up = logits, down = logits;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    EXPECT_NEAR(g[i], (bce_with_logits(up, targets, nullptr) - bce_with_logits(down, targets, nullptr)) / 2e-6, 1e-8);
  }
}

TEST(Losses, BaseTermsVanishOnPerfectPrediction) {
  const auto s = generate_scene(SceneRecipe{}, 5);
  const auto targets = scene_targets(s);
  const int k = static_cast<int>(targets.size()) + 3;
  const auto out = output_for(targets, k);
  MatchResult m;
  for (int q = 0; q < k; ++q) {
    if (q < static_cast<int>(targets.size())) m.pairs.push_back({q, q});
    else m.unmatched_queries.push_back(q);
  }
  const auto terms = base_loss(out, m, std::span<const LabelTarget>(targets), Config{});
  for (int t = kBox2dTerm; t < kNumBaseTerms; ++t) EXPECT_NEAR(terms[static_cast<std::size_t>(t)], 0.0, 1e-12) << t;
  EXPECT_LT(terms[kClassTerm], 1e-6);
  for (double v : terms) EXPECT_GE(v, 0.0);
}

TEST(Losses, DepthTermArithmetic) {
  const auto s = generate_scene(SceneRecipe{}, 5);
  auto targets = scene_targets(s);
  targets.resize(1);
  auto out = output_for(targets, 1);
  out.depth(0, 0) += 6.5;
  Config c;
  c.depth_max = 65.0;
  const auto terms = base_loss(out, MatchResult{{{0, 0}}, {}}, std::span<const LabelTarget>(targets), c);
  EXPECT_NEAR(terms[kDepthTerm], 0.1, 1e-12);
  const auto none = base_loss(out, MatchResult{{}, {0}}, std::span<const LabelTarget>(targets), c);
  for (int t = kBox2dTerm; t < kNumBaseTerms; ++t) EXPECT_EQ(none[static_cast<std::size_t>(t)], 0.0);
  EXPECT_GT(none[kClassTerm], 0.0);
}

TEST(Losses, BundleComposition) {
  const std::array<double, kNumBaseTerms> base{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const auto b = LossBundle::combine(0.7, 0.25, base, Config{});
  EXPECT_NEAR(b.l_base, 2.1, 1e-12);
  EXPECT_NEAR(b.total, 0.7 + 0.25 + 2.1, 1e-12);
  EXPECT_TRUE(b.finite());
  Config w;
  w.loss_weight_occ = 0.0;
  w.loss_weight_com = 0.0;
  const auto plain = LossBundle::combine(0.7, 0.25, base, w);
  EXPECT_NEAR(plain.total, plain.l_base, 1e-12);
  EXPECT_FALSE(LossBundle::combine(std::nan(""), 0, base, Config{}).finite());
}

TEST(Optimizer, ZeroLearningRateIsNoOp) {
  const Config c = maskdet::testing::micro_config();
  model::Network<double> net(c, 1);
  const auto scenes = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 2);
  std::vector<const Sample*> batch{&scenes[0], &scenes[1]};
  std::vector<nn::Rng> rngs{nn::Rng(1), nn::Rng(2)};
  net.zero_grad();
  train_step<double>(net, batch, rngs);
  std::vector<Matrix<double>> before;
  net.visit_parameters([&](const std::string&, nn::Parameter<double>& p) { before.push_back(p.value); });
  AdamW<double> opt(0.0, 1e-4);
  opt.step(net);
  std::size_t i = 0;
  net.visit_parameters([&](const std::string& name, nn::Parameter<double>& p) {
    EXPECT_TRUE(p.value == before[i++]) << name;
  });
}

TEST(Optimizer, ClipGradNorm) {
  const Config c = maskdet::testing::micro_config();
  model::Network<double> net(c, 1);
  net.visit_parameters([](const std::string&, nn::Parameter<double>& p) { p.grad.setConstant(1.0); });
  const double norm = clip_grad_norm(net, 0.0);
  EXPECT_NEAR(norm, std::sqrt(static_cast<double>(net.parameter_count())), 1e-9);
  clip_grad_norm(net, 2.0);
  EXPECT_NEAR(clip_grad_norm(net, 0.0), 2.0, 1e-9);
}

TEST(Optimizer, StateRoundTripsThroughCheckpoint) {
  const Config c = maskdet::testing::micro_config();
  model::Network<double> a(c, 1);
  a.visit_parameters([](const std::string&, nn::Parameter<double>& p) { p.grad.setConstant(0.3); });
  AdamW<double> opt(1e-2, 0.0);
  opt.step(a);
  model::Checkpoint ck;
  opt.export_state(a, ck);
  model::Network<double> b = a;
  AdamW<double> resumed(1e-2, 0.0);
  resumed.import_state(b, ck);
  EXPECT_EQ(resumed.steps(), 1u);
  opt.step(a);
  resumed.step(b);
  std::vector<Matrix<double>> pa, pb;
  a.visit_parameters([&](const std::string&, nn::Parameter<double>& p) { pa.push_back(p.value); });
  b.visit_parameters([&](const std::string&, nn::Parameter<double>& p) { pb.push_back(p.value); });
  EXPECT_EQ(pa, pb);
}

TEST(Step, GradientMatchesFiniteDifferences) {
  const Config c = maskdet::testing::micro_config();
  const auto scenes = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 2);
  std::vector<const Sample*> batch{&scenes[0], &scenes[1]};
  model::Network<double> net(c, 3);
  maskdet::testing::jitter_parameters(net, 0.05, 4);
  auto run = [&](model::Network<double>& n, const StepOptions& o) {
    std::vector<nn::Rng> rngs{nn::Rng(5), nn::Rng(6)};
    return train_step<double>(n, batch, rngs, o);
  };
  net.zero_grad();
  model::Network<double> probe = net;
  const auto ref = run(probe, {});
  StepOptions fixed;
  fixed.frozen_depths = &ref.depths;
  fixed.fixed_matches = &ref.matches;
  fixed.fixed_flags = &ref.flags;
  run(net, fixed);
  const auto check = maskdet::testing::check_gradients(
      net,
      [&] {
        model::Network<double> copy = net;
        return run(copy, fixed).loss.total;
      },
      3, 1e-6, 1e-3, 1e-8);
  EXPECT_GT(check.checked, 100u);
  for (const auto& m : check.mismatches) {
    ADD_FAILURE() << m.parameter << "[" << m.index << "] analytic " << m.analytic << " numeric " << m.numeric;
  }
}

TEST(Step, BaselineHasNoCompletionLoss) {
  Config c = maskdet::testing::micro_config();
  c.use_masking = false;
  c.use_completion = false;
  model::Network<double> net(c, 1);
  const auto scenes = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 2);
  std::vector<const Sample*> batch{&scenes[0], &scenes[1]};
  std::vector<nn::Rng> rngs{nn::Rng(1), nn::Rng(2)};
  const auto before = occlusion::mask_sampling_calls();
  const auto r = train_step<double>(net, batch, rngs);
  EXPECT_EQ(r.loss.l_com, 0.0);
  EXPECT_EQ(occlusion::mask_sampling_calls(), before);
  EXPECT_NEAR(r.loss.total, r.loss.l_occ + r.loss.l_base, 1e-9);
}

TEST(Step, MaskStatisticsAreReported) {
  const Config c = maskdet::testing::micro_config();
  model::Network<double> net(c, 1);
  const auto scenes = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 2);
  std::vector<const Sample*> batch{&scenes[0], &scenes[1]};
  std::vector<nn::Rng> rngs{nn::Rng(1), nn::Rng(2)};
  const auto r = train_step<double>(net, batch, rngs);
  EXPECT_GT(r.mask.ratio_count, 0u);
  EXPECT_EQ(r.mask.entries, r.mask.ratio_count * static_cast<std::size_t>(c.query_dim));
  EXPECT_GE(r.mask.mean_ratio(), c.mask_ratio_clip.low);
  EXPECT_LE(r.mask.mean_ratio(), c.mask_ratio_clip.high);
  ASSERT_EQ(r.depths.size(), 2u);
  EXPECT_EQ(r.depths[0].size(), static_cast<std::size_t>(c.num_queries));
  EXPECT_TRUE(r.loss.finite());
}

namespace {

Config tiny_training_config() {
  Config c = maskdet::testing::micro_config();
  c.epochs = 3;
  c.learning_rate = 1e-3;
  return c;
}

std::vector<std::string> history_lines(const TrainResult& r) {
  std::vector<std::string> out;
  for (const auto& e : r.history) out.push_back(e.to_json_line());
  return out;
}

}  // namespace

TEST(Trainer, SameSeedSameHistory) {
  const auto train_set = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 8);
  const auto val_set = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 4, 100);
  const Config c = tiny_training_config();
  const auto a = train::train(c, train_set, val_set);
  const auto b = train::train(c, train_set, val_set);
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_EQ(history_lines(a), history_lines(b));
  Config other = c;
  other.seed = 1;
  EXPECT_NE(history_lines(train::train(other, train_set, val_set)), history_lines(a));
}

TEST(Trainer, ResumeReproducesUninterruptedRun) {
  const auto train_set = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 8);
  const auto val_set = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 4, 100);
  const Config c = tiny_training_config();
  maskdet::testing::TempDir full("full"), split("split");
  TrainOptions o;
  o.output_dir = full.path();
  train::train(c, train_set, val_set, o);
  o.output_dir = split.path();
  o.stop_after_epoch = 1;
  train::train(c, train_set, val_set, o);
  o.stop_after_epoch = 0;
  o.resume = true;
  const auto resumed = train::train(c, train_set, val_set, o);
  EXPECT_EQ(resumed.start_epoch, 2);
  EXPECT_EQ(read_text_file(full.path() / "metrics.jsonl"), read_text_file(split.path() / "metrics.jsonl"));
}

TEST(Trainer, ResumeWithDifferentConfigIsRefused) {
  const auto train_set = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 4);
  const Config c = tiny_training_config();
  maskdet::testing::TempDir dir("refuse");
  TrainOptions o;
  o.output_dir = dir.path();
  o.stop_after_epoch = 1;
  train::train(c, train_set, {}, o);
  Config changed = c;
  changed.learning_rate = 5e-4;
  o.resume = true;
  o.stop_after_epoch = 0;
  try {
    train::train(changed, train_set, {}, o);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
}

TEST(Trainer, NonFiniteLossAbortsWithBatchDump) {
  // An absurd step size overflows the single-precision activations.
  const auto train_set = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 4);
  Config c = tiny_training_config();
  c.learning_rate = 1e12;
  c.epochs = 20;
  maskdet::testing::TempDir dir("diverge");
  TrainOptions o;
  o.output_dir = dir.path();
  std::string message;
  try {
    train::train(c, train_set, {}, o);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    message = e.what();
  }
  const auto dump = read_text_file(dir.path() / "nonfinite_batch.json");
  const auto open = message.find("batch ids ");
  ASSERT_NE(open, std::string::npos) << message;
  const auto first_id = message.substr(open + 10, 6);
  EXPECT_NE(dump.find("\"" + first_id + "\""), std::string::npos) << dump;
}

TEST(Trainer, EpochRecordJsonRoundTrip) {
  const auto train_set = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 4);
  const auto val_set = maskdet::testing::make_scenes(maskdet::testing::micro_recipe(), 2, 100);
  Config c = tiny_training_config();
  c.epochs = 1;
  const auto r = train::train(c, train_set, val_set);
  const auto line = r.history.front().to_json_line();
  EXPECT_EQ(EpochRecord::from_json_line(line).to_json_line(), line);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_GT(r.history.front().mask_ratio_mean, 0.0);
}

TEST(Trainer, OrderAndRngAreKeyed) {
  EXPECT_EQ(epoch_order(3, 2, 10), epoch_order(3, 2, 10));
  EXPECT_NE(epoch_order(3, 2, 50), epoch_order(3, 3, 50));
  auto a = sample_rng(1, 2, 3), b = sample_rng(1, 2, 3), c = sample_rng(1, 2, 4);
  EXPECT_EQ(a(), b());
  EXPECT_NE(sample_rng(1, 2, 3)(), c());
}

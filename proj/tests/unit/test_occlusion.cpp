#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "maskdet/occlusion/image_mask.hpp"
#include "maskdet/occlusion/masking.hpp"

using namespace maskdet;
using namespace maskdet::occlusion;
using nn::Matrix;

namespace {

Matrix<double> numbered(int rows, int cols) {
  Matrix<double> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = 100.0 * i + j + 1;
  return m;
}

/// Stand-in completion: an affine map applied row by row.
Matrix<double> affine(const Matrix<double>& rows) { return (rows.array() * 2.0 + 1.0).matrix(); }

}  // namespace

TEST(Grouping, ExtremesAndTieBreak) {
  const auto q = numbered(3, 4);
  const std::vector<double> zeros(3, 0.0), ones(3, 1.0), mixed{0.2, 0.8, 0.5};
  const auto a = group_queries<double>(q, zeros, 0.5);
  EXPECT_EQ(a.non_occluded_index.size(), 3u);
  EXPECT_TRUE(a.occluded_index.empty());
  const auto b = group_queries<double>(q, ones, 0.5);
  EXPECT_TRUE(b.non_occluded_index.empty());
  EXPECT_EQ(b.occluded_index.size(), 3u);
  const auto c = group_queries<double>(q, mixed, 0.5);
  EXPECT_EQ(c.non_occluded_index, (std::vector<int>{0}));
  EXPECT_EQ(c.occluded_index, (std::vector<int>{1, 2}));
  EXPECT_EQ(c.occluded.row(1), q.row(2));
}

TEST(Grouping, IndexSetsPartitionQueries) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    const int k = 1 + t % 16;
    std::vector<double> p(static_cast<std::size_t>(k));
    for (auto& v : p) v = u(rng);
    const auto g = group_queries<double>(numbered(k, 3), p, 0.5);
    EXPECT_EQ(g.total(), k);
    std::vector<int> all = g.non_occluded_index;
    all.insert(all.end(), g.occluded_index.begin(), g.occluded_index.end());
    std::sort(all.begin(), all.end());
    std::vector<int> want(static_cast<std::size_t>(k));
    std::iota(want.begin(), want.end(), 0);
    EXPECT_EQ(all, want);
  }
  const std::vector<int> flags{1, 0, 1};
  const auto f = group_by_flags<double>(numbered(3, 2), flags);
  EXPECT_EQ(f.non_occluded_index, (std::vector<int>{1}));
  EXPECT_EQ(f.occluded_index, (std::vector<int>{0, 2}));
}

TEST(MaskRatio, Examples) {
  const RatioClip unit{0.0, 1.0};
  EXPECT_DOUBLE_EQ(mask_ratio(60.0, 60.0, unit), 0.0);
  EXPECT_DOUBLE_EQ(mask_ratio(0.0, 60.0, unit), 1.0);
  EXPECT_DOUBLE_EQ(mask_ratio(16.25, 65.0, unit), 0.75);
  const RatioClip def{};
  EXPECT_DOUBLE_EQ(mask_ratio(0.0, 60.0, def), 0.9);
  EXPECT_DOUBLE_EQ(mask_ratio(90.0, 60.0, def), 0.0);
  EXPECT_DOUBLE_EQ(mask_ratio(-5.0, 60.0, def), 0.9);
  EXPECT_DOUBLE_EQ(mask_ratio(50.0, 60.0, RatioClip{0.3, 0.9}), 0.3);
}

TEST(MaskRatio, MonotoneNonIncreasingInDepth) {
  double prev = 2.0;
  for (double d = -10.0; d <= 80.0; d += 0.01) {
    const double r = mask_ratio(d, 60.0, RatioClip{});
    EXPECT_LE(r, prev);
    prev = r;
  }
}

TEST(SampleMask, DegenerateRatios) {
  nn::Rng rng(2);
  const auto ones = sample_mask(0.0, 64, rng);
  const auto zeros = sample_mask(1.0, 64, rng);
  EXPECT_EQ(std::accumulate(ones.begin(), ones.end(), 0), 64);
  EXPECT_EQ(std::accumulate(zeros.begin(), zeros.end(), 0), 0);
}

TEST(SampleMask, EntriesAreBinaryAndDeterministic) {
  nn::Rng a(3), b(3);
  for (int t = 0; t < 20; ++t) {
    const auto ma = sample_mask(0.4, 32, a);
    const auto mb = sample_mask(0.4, 32, b);
    EXPECT_EQ(ma, mb);
    for (auto v : ma) EXPECT_TRUE(v == 0 || v == 1);
  }
}

TEST(SampleMask, ZeroRateWithinBinomialBound) {
  nn::Rng rng(4);
  const int n = 10000, dim = 64;
  for (const double r : {0.1, 0.5, 0.75}) {
    std::size_t zeros = 0;
    for (int i = 0; i < n; ++i) {
      for (auto v : sample_mask(r, dim, rng)) zeros += v == 0;
    }
    const double rate = static_cast<double>(zeros) / (static_cast<double>(n) * dim);
    EXPECT_LE(std::abs(rate - r), 3.0 * std::sqrt(r * (1 - r) / (static_cast<double>(n) * dim))) << r;
  }
}

TEST(SampleMask, CounterCountsCalls) {
  nn::Rng rng(5);
  const auto before = mask_sampling_calls();
  sample_mask(0.5, 8, rng);
  sample_mask(0.5, 8, rng);
  nn::FeatureMap<double> im{8, 8, Matrix<double>::Ones(64, 3)};
  sample_image_mask(im, 0.5, 4, rng);
  EXPECT_EQ(mask_sampling_calls() - before, 3u);
}

TEST(ApplyMask, Examples) {
  Matrix<double> q(1, 4);
  q << 1, 2, 3, 4;
  EXPECT_EQ(apply_mask<double>(q, {{1, 0, 1, 0}}), (Matrix<double>(1, 4) << 1, 0, 3, 0).finished());
  EXPECT_EQ(apply_mask<double>(q, {{1, 1, 1, 1}}), q);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> d;
  Matrix<double> big(5, 16);
  for (Eigen::Index i = 0; i < big.size(); ++i) big.data()[i] = d(rng);
  nn::Rng mrng(7);
  std::vector<std::vector<std::uint8_t>> masks;
  for (int i = 0; i < 5; ++i) masks.push_back(sample_mask(0.5, 16, mrng));
  const auto out = apply_mask(big, masks);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 16; ++j) {
      if (masks[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        EXPECT_EQ(out(i, j), big(i, j));
      } else {
        EXPECT_EQ(out(i, j), 0.0);
      }
    }
}

TEST(ImageMask, ZeroesWholePatches) {
  nn::FeatureMap<double> im{8, 12, Matrix<double>::Ones(96, 3)};
  nn::Rng rng(8);
  const auto out = sample_image_mask(im, 0.5, 4, rng);
  for (int py = 0; py < 2; ++py)
    for (int px = 0; px < 3; ++px) {
      const double first = out.data(py * 4 * 12 + px * 4, 0);
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
          for (int c = 0; c < 3; ++c) EXPECT_EQ(out.data((py * 4 + y) * 12 + px * 4 + x, c), first);
    }
  nn::Rng rng0(8);
  EXPECT_EQ(sample_image_mask(im, 0.0, 4, rng0).data, im.data);
}

TEST(Routing, TrainingPreservesOrderAndPassesOccluded) {
  const auto q = numbered(5, 6);
  const std::vector<int> flags{0, 1, 0, 1, 0};
  const auto g = group_by_flags<double>(q, flags);
  const std::vector<double> depths{10, 20, 30, 40, 50};
  MaskingOptions opt;
  nn::Rng rng(9);
  const auto route = route_training<double>(g, depths, affine, opt, rng);
  ASSERT_EQ(route.queries.rows(), 5);
  EXPECT_EQ(route.queries.row(1), q.row(1));
  EXPECT_EQ(route.queries.row(3), q.row(3));
  ASSERT_EQ(route.spec.ratio.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const int qi = route.spec.query_index[i];
    EXPECT_DOUBLE_EQ(route.spec.ratio[i], mask_ratio(depths[static_cast<std::size_t>(qi)], 60.0, RatioClip{}));
    EXPECT_EQ(route.queries.row(qi), affine(route.masked.row(static_cast<Eigen::Index>(i))));
  }
}

TEST(Routing, EdgeGroups) {
  const auto q = numbered(4, 6);
  MaskingOptions opt;
  nn::Rng rng(10);
  const std::vector<double> depths(4, 30.0);
  const auto none_occluded = route_training<double>(group_by_flags<double>(q, std::vector<int>(4, 0)), depths, affine, opt, rng);
  EXPECT_EQ(none_occluded.spec.masks.size(), 4u);
  EXPECT_EQ(none_occluded.queries, affine(none_occluded.masked));
  const auto all_occluded = route_training<double>(group_by_flags<double>(q, std::vector<int>(4, 1)), depths, affine, opt, rng);
  EXPECT_EQ(all_occluded.queries, q);
  EXPECT_TRUE(all_occluded.spec.masks.empty());
}

TEST(Routing, RandomStrategyUsesFixedRatio) {
  const auto q = numbered(3, 8);
  MaskingOptions opt;
  opt.strategy = MaskStrategy::Random;
  opt.fixed_ratio = 0.37;
  nn::Rng rng(11);
  const std::vector<double> depths{1, 30, 59};
  const auto route = route_training<double>(group_by_flags<double>(q, std::vector<int>(3, 0)), depths, affine, opt, rng);
  for (double r : route.spec.ratio) EXPECT_DOUBLE_EQ(r, 0.37);
  opt.enabled = false;
  const auto calls = mask_sampling_calls();
  const auto plain = route_training<double>(group_by_flags<double>(q, std::vector<int>(3, 0)), depths, affine, opt, rng);
  EXPECT_EQ(plain.masked, q);
  EXPECT_EQ(mask_sampling_calls(), calls);
}

TEST(Routing, InferenceDrawsNoMasksAndCompletesOccluded) {
  const auto q = numbered(4, 5);
  const auto before = mask_sampling_calls();
  const auto mixed = route_inference<double>(group_by_flags<double>(q, std::vector<int>{1, 0, 0, 1}), affine);
  EXPECT_EQ(mixed.row(0), affine(q.row(0)));
  EXPECT_EQ(mixed.row(1), q.row(1));
  EXPECT_EQ(mixed.row(3), affine(q.row(3)));
  EXPECT_EQ(route_inference<double>(group_by_flags<double>(q, std::vector<int>(4, 0)), affine), q);
  EXPECT_EQ(route_inference<double>(group_by_flags<double>(q, std::vector<int>(4, 1)), affine), affine(q));
  EXPECT_EQ(mask_sampling_calls(), before);
}

TEST(Routing, OutputSlotDependsOnlyOnItsQuery) {
  // Shuffling which queries share a group never changes any query's output.
  const int k = 8;
  const auto q = numbered(k, 6);
  std::mt19937_64 rng(12);
  std::vector<int> ref_flags(k, 0);
  for (int i = 0; i < k; i += 2) ref_flags[static_cast<std::size_t>(i)] = 1;
  const auto ref = route_inference<double>(group_by_flags<double>(q, ref_flags), affine);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix<double> shuffled(k, 6);
    std::vector<int> flags(k);
    for (int i = 0; i < k; ++i) {
      shuffled.row(i) = q.row(perm[static_cast<std::size_t>(i)]);
      flags[static_cast<std::size_t>(i)] = ref_flags[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    const auto out = route_inference<double>(group_by_flags<double>(shuffled, flags), affine);
    for (int i = 0; i < k; ++i) EXPECT_EQ(out.row(i), ref.row(perm[static_cast<std::size_t>(i)]));
  }
}

TEST(Routing, BatchSplitsBackPerImage) {
  const auto a = numbered(3, 4);
  const auto b = numbered(2, 4);
  std::vector<GroupedQueries<double>> groups{group_by_flags<double>(a, std::vector<int>{0, 1, 0}),
                                             group_by_flags<double>(b, std::vector<int>{0, 0})};
  std::vector<std::vector<double>> depths{{10, 10, 10}, {40, 40}};
  std::vector<nn::Rng> rngs{nn::Rng(1), nn::Rng(2)};
  const auto routes = route_training_batch<double>(groups, depths, affine, MaskingOptions{}, rngs);
  ASSERT_EQ(routes.size(), 2u);
  EXPECT_EQ(routes[0].queries.rows(), 3);
  EXPECT_EQ(routes[1].queries.rows(), 2);
  EXPECT_EQ(routes[0].queries.row(1), a.row(1));
  EXPECT_EQ(routes[1].completed, affine(routes[1].masked));
}

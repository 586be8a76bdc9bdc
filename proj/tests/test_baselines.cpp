#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "shockfis/baselines.hpp"
#include "shockfis/rng.hpp"
#include "shockfis/synthgen.hpp"

using namespace shockfis;

namespace {

ImageGrid step_image(std::size_t w, std::size_t h, std::size_t edge_x, double lo, double hi) {
  std::vector<double> v(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) v[y * w + x] = x < edge_x ? lo : hi;
  }
  return ImageGrid(w, h, std::move(v));
}

std::vector<FeatureVector> inlier_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FeatureVector> out(n);
  for (auto& f : out) {
    for (double& v : f) v = 0.5 + 0.05 * rng.normal();
  }
  return out;
}

}  // namespace

TEST(Sobel, ConstantImageGivesZero) {
  const ImageGrid m = sobel_magnitude(ImageGrid::filled(12, 9, 0.6));
  for (double v : m.values()) EXPECT_EQ(v, 0.0);
}

TEST(Sobel, UnitStepPeaksAtNormalizedValue) {
  const ImageGrid m = sobel_magnitude(step_image(10, 6, 5, 0.0, 1.0));
  for (std::size_t y = 0; y < 6; ++y) {
    EXPECT_NEAR(m.at(4, y), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(m.at(5, y), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_EQ(m.at(2, y), 0.0);
    EXPECT_EQ(m.at(8, y), 0.0);
  }
}

TEST(Sobel, GradientsMatchKernelCorrelation) {
  Rng rng(6);
  std::vector<double> v(13 * 9);
  for (double& x : v) x = rng.uniform();
  const Gradients g = sobel_gradients(v, 13, 9);
  const auto gx = correlate2d(v, 13, 9, kSobelX, 3);
  const auto gy = correlate2d(v, 13, 9, kSobelY, 3);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(g.gx[i], gx[i], 1e-12);
    EXPECT_NEAR(g.gy[i], gy[i], 1e-12);
  }
}

TEST(Sobel, RejectsTinyImage) { EXPECT_THROW(sobel_magnitude(ImageGrid::filled(2, 5, 0.1)), DataError); }

TEST(Canny, StepEdgeIsBinaryAndOnePixelWide) {
  for (std::size_t edge : {9u, 16u, 21u}) {
    const ImageGrid e = canny(step_image(32, 20, edge, 0.2, 0.8));
    for (std::size_t y = 0; y < 20; ++y) {
      std::size_t count = 0;
      for (std::size_t x = 0; x < 32; ++x) {
        const double v = e.at(x, y);
        ASSERT_TRUE(v == 0.0 || v == 1.0);
        if (v == 1.0) {
          ++count;
          EXPECT_TRUE(x + 1 == edge || x == edge) << "edge " << edge << " x " << x;
        }
      }
      EXPECT_EQ(count, 1u) << "row " << y << " edge " << edge;
    }
  }
}

TEST(Canny, ConstantImageHasNoEdges) {
  const ImageGrid e = canny(ImageGrid::filled(16, 16, 0.3));
  for (double v : e.values()) EXPECT_EQ(v, 0.0);
}

TEST(Canny, WeakStepBelowLowThresholdVanishes) {
  const ImageGrid e = canny(step_image(24, 12, 12, 0.50, 0.52));
  for (double v : e.values()) EXPECT_EQ(v, 0.0);
}

TEST(Canny, ValidatesThresholds) {
  EXPECT_THROW(canny(ImageGrid::filled(8, 8, 0), {1.0, 0.3, 0.2}), UsageError);
  EXPECT_THROW(canny(ImageGrid::filled(8, 8, 0), {1.0, 0.0, 0.2}), UsageError);
  EXPECT_THROW(canny(ImageGrid::filled(8, 8, 0), {0.0, 0.1, 0.2}), UsageError);
}

TEST(IsoForest, AveragePathLengthValues) {
  EXPECT_EQ(average_path_length(0), 0.0);
  EXPECT_EQ(average_path_length(1), 0.0);
  EXPECT_NEAR(average_path_length(2), 0.15443, 1e-5);
  const double h255 = std::log(255.0) + 0.5772156649;
  EXPECT_NEAR(average_path_length(256), 2.0 * h255 - 2.0 * 255.0 / 256.0, 1e-12);
}

TEST(IsoForest, PlantedOutlierScoresAboveNinetiethPercentile) {
  auto data = inlier_cloud(1000, 31);
  const FeatureVector outlier{0.95, 0.05, 0.95, 0.9};
  data.push_back(outlier);
  const auto model = isoforest_fit(data, {100, 256, 7});
  std::vector<double> inlier_scores;
  for (std::size_t i = 0; i + 1 < data.size(); ++i) inlier_scores.push_back(isoforest_score(model, data[i]));
  std::sort(inlier_scores.begin(), inlier_scores.end());
  const double p90 = inlier_scores[inlier_scores.size() * 9 / 10];
  EXPECT_GT(isoforest_score(model, outlier), p90);
  EXPECT_GT(isoforest_score(model, outlier), inlier_scores.back());
}

TEST(IsoForest, SeededFitIsDeterministic) {
  const auto data = inlier_cloud(300, 2);
  const auto a = isoforest_fit(data, {20, 64, 9});
  const auto b = isoforest_fit(data, {20, 64, 9});
  const auto c = isoforest_fit(data, {20, 64, 10});
  for (const auto& x : data) EXPECT_EQ(isoforest_score(a, x), isoforest_score(b, x));
  bool differs = false;
  for (const auto& x : data) differs |= isoforest_score(a, x) != isoforest_score(c, x);
  EXPECT_TRUE(differs);
}

TEST(IsoForest, TreesRespectHeightLimitAndSubsample) {
  const auto data = inlier_cloud(500, 3);
  const auto model = isoforest_fit(data, {10, 128, 1});
  EXPECT_EQ(model.subsample_size, 128u);
  EXPECT_EQ(model.height_limit, 7u);
  for (const auto& tree : model.trees) {
    EXPECT_EQ(tree.nodes[0].size, 128u);
    for (const auto& node : tree.nodes) {
      EXPECT_LE(node.depth, 7u);
      if (node.feature >= 0) {
        EXPECT_GT(node.threshold, node.range_lo);
        EXPECT_LE(node.threshold, node.range_hi);
        EXPECT_EQ(tree.nodes[node.left].size + tree.nodes[node.right].size, node.size);
      }
    }
  }
}

TEST(IsoForest, ScoresInUnitInterval) {
  const auto data = inlier_cloud(200, 4);
  const auto model = isoforest_fit(data, {30, 256, 5});
  EXPECT_EQ(model.subsample_size, 200u);
  for (const auto& x : data) {
    const double s = isoforest_score(model, x);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(IsoForest, RejectsBadParameters) {
  const auto data = inlier_cloud(10, 5);
  EXPECT_THROW(isoforest_fit(std::vector<FeatureVector>{}), DataError);
  EXPECT_THROW(isoforest_fit(data, {0, 256, 1}), UsageError);
  EXPECT_THROW(isoforest_fit(data, {10, 1, 1}), UsageError);
}

TEST(IsoForest, PixelMapShapeAndBinaryMode) {
  SynthSpec spec;
  spec.width = 40;
  spec.height = 30;
  const ImageGrid img = generate_shadowgraph(spec);
  IsoMapParams p;
  p.forest = {20, 128, 3};
  const ImageGrid scores = isoforest_map(img, p);
  EXPECT_TRUE(scores.same_shape(img));
  p.binary = true;
  const ImageGrid bin = isoforest_map(img, p);
  for (std::size_t i = 0; i < bin.size(); ++i) EXPECT_EQ(bin[i], scores[i] >= 0.5 ? 1.0 : 0.0);
}

TEST(Features, ConstantImageFeatures) {
  const auto f = pixel_features(ImageGrid::filled(8, 8, 0.25));
  for (const auto& v : f) {
    EXPECT_EQ(v[0], 0.25);
    EXPECT_NEAR(v[1], 0.25, 1e-15);
    EXPECT_EQ(v[2], 0.0);
    EXPECT_EQ(v[3], 0.0);
  }
}

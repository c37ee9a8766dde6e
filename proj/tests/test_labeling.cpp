#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "yolopoint/errors.hpp"
#include "yolopoint/labeling.hpp"
#include "yolopoint/postprocess.hpp"
#include "yolopoint/trainer.hpp"

using namespace yolopoint;


TEST(Synthetic, CheckerboardCornerCount) {
  SyntheticConfig cfg;
  cfg.checkerboard_rows = 2;
  cfg.checkerboard_cols = 2;
  std::mt19937_64 rng(1);
  const auto s = generate_synthetic(ShapeKind::Checkerboard, rng, cfg);
  EXPECT_EQ(s.points.size(), 9u);
}

TEST(Synthetic, FeaturelessKindsHaveNoPoints) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5; ++i) {
    EXPECT_TRUE(generate_synthetic(ShapeKind::Ellipse, rng).points.empty());
    EXPECT_TRUE(generate_synthetic(ShapeKind::GaussianNoise, rng).points.empty());
  }
}

TEST(Synthetic, PolygonLabelsAreRendererVertices) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto s = generate_synthetic(ShapeKind::Polygon, rng);
    ASSERT_EQ(s.primitives.size(), 1u);
    const auto& verts = s.primitives[0];
    ASSERT_EQ(s.points.size(), verts.size());
    for (std::size_t k = 0; k < verts.size(); ++k) {
      EXPECT_EQ(s.points.points[k].x, verts[k].x());
      EXPECT_EQ(s.points.points[k].y, verts[k].y());
    }
  }
}

TEST(Synthetic, AllKindsValidAndDeterministic) {
  for (auto kind : kAllShapeKinds) {
    std::mt19937_64 a(7), b(7);
    const auto x = generate_synthetic(kind, a), y = generate_synthetic(kind, b);
    EXPECT_TRUE(torch::equal(x.image, y.image)) << to_string(kind);
    EXPECT_GE(x.image.min().item<float>(), 0.0f);
    EXPECT_LE(x.image.max().item<float>(), 1.0f);
    for (const auto& p : x.points.points) {
      EXPECT_TRUE(p.x >= 0 && p.x <= 63 && p.y >= 0 && p.y <= 63) << to_string(kind);
    }
  }
}

TEST(Synthetic, LabelsIgnorePhotometricNoise) {
  SyntheticConfig clean;
  clean.photometric_noise = false;
  for (auto kind : kAllShapeKinds) {
    std::mt19937_64 a(11), b(11);
    const auto x = generate_synthetic(kind, a), y = generate_synthetic(kind, b, clean);
    ASSERT_EQ(x.points.size(), y.points.size()) << to_string(kind);
    for (std::size_t i = 0; i < x.points.size(); ++i) {
      EXPECT_EQ(x.points.points[i].x, y.points.points[i].x);
      EXPECT_EQ(x.points.points[i].y, y.points.points[i].y);
    }
  }
}

class Adaptation : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    torch::manual_seed(0);
    model_ = new YoloPoint(build_model(ModelConfig::for_scale(ModelScale::N, 1)));
    TrainConfig cfg;
    cfg.num_classes = 1;
    cfg.loss_weights.w_obj = 0;
    cfg.epochs_pretrain = 3;
    train(*model_, make_synthetic_dataset(400, 1, {}), cfg, {});
    (*model_)->eval();
  }
  static void TearDownTestSuite() {
    delete model_;
    model_ = nullptr;
  }
  static YoloPoint* model_;
};

YoloPoint* Adaptation::model_ = nullptr;

TEST_F(Adaptation, SinglePassCollapsesToInference) {
  std::mt19937_64 rng(4);
  const auto img = generate_synthetic(ShapeKind::Star, rng).image;
  AdaptationConfig cfg;
  cfg.num_homographies = 1;
  cfg.include_identity = true;
  const auto pl = homographic_adaptation(*model_, img, cfg, HomographySamplingConfig::zero_range());
  const auto plain = labels_from_heatmap(infer_heatmap(*model_, img), cfg.detection_threshold, cfg.nms_radius);
  EXPECT_TRUE(torch::equal(pl.target, plain.target));
  ASSERT_EQ(pl.points.size(), plain.points.size());
}

TEST_F(Adaptation, MatchesUnrolledAggregation) {
  std::mt19937_64 rng(5);
  const auto img = generate_synthetic(ShapeKind::Cube, rng).image;
  AdaptationConfig cfg;
  cfg.num_homographies = 4;
  cfg.include_identity = false;
  HomographySamplingConfig hc;
  hc.seed = 17;
  const auto agg = aggregate_heatmaps(*model_, img, cfg, hc);

  std::mt19937_64 hr(hc.seed);
  auto sum = torch::zeros({64, 64}, torch::kDouble), count = torch::zeros({64, 64}, torch::kDouble);
  for (int i = 0; i < 4; ++i) {
    const Homography h = sample_homography(hc, {64, 64}, hr);
    const auto warped = warp_image(img, h, {64, 64});
    const auto heat = infer_heatmap(*model_, warped.image);
    const auto keep = oracle::eroded_mask(warped.valid, cfg.border_margin);
    const auto back = warp_image(heat * keep, h.inverse(), {64, 64});
    const auto valid = back.valid.to(torch::kDouble);
    sum += back.image * valid;
    count += warp_image(keep, h.inverse(), {64, 64}).image * valid;
  }
  const auto mean = torch::where(count > 0, sum / count.clamp_min(1), torch::zeros_like(sum));
  EXPECT_LT((agg.mean - mean).abs().max().item<double>(), 1e-6);
  EXPECT_GE(agg.mean.min().item<double>(), 0.0);
  EXPECT_LE(agg.mean.max().item<double>(), 1.0);
}

TEST_F(Adaptation, PrefixPartialSums) {
  std::mt19937_64 rng(6);
  const auto img = generate_synthetic(ShapeKind::Checkerboard, rng).image;
  HomographySamplingConfig hc;
  hc.seed = 3;
  AdaptationConfig cfg;
  cfg.num_homographies = 4;
  const auto full = aggregate_heatmaps(*model_, img, cfg, hc);
  for (int k = 1; k < 4; ++k) {
    cfg.num_homographies = k;
    const auto part = aggregate_heatmaps(*model_, img, cfg, hc);
    ASSERT_EQ(part.homographies.size(), static_cast<std::size_t>(k + 1));
    for (int i = 0; i <= k; ++i) EXPECT_EQ(part.homographies[i].matrix(), full.homographies[i].matrix());
    // the remaining terms of the full run are all non-negative
    EXPECT_TRUE((full.sum - part.sum >= -1e-12).all().item<bool>());
    EXPECT_TRUE((full.count >= part.count).all().item<bool>());
  }
}

TEST_F(Adaptation, RejectsBadShapes) {
  EXPECT_THROW(homographic_adaptation(*model_, torch::zeros({3, 60, 64}), {}, {}), ShapeError);
  AdaptationConfig bad;
  bad.num_homographies = 0;
  EXPECT_THROW(homographic_adaptation(*model_, torch::zeros({3, 64, 64}), bad, {}), ValidationError);
  bad = {};
  bad.border_margin = -1;
  EXPECT_THROW(homographic_adaptation(*model_, torch::zeros({3, 64, 64}), bad, {}), ValidationError);
}

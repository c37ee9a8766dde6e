#include <gtest/gtest.h>

#include <fstream>

#include <cmath>
#include <filesystem>

#include "yolopoint/core_model.hpp"
#include "yolopoint/errors.hpp"
#include "yolopoint/losses.hpp"

using namespace yolopoint;
namespace fs = std::filesystem;

TEST(ModelConfig, DescriptorDimsPerScale) {
  EXPECT_EQ(ModelConfig::for_scale(ModelScale::N).descriptor_dim, 64);
  EXPECT_EQ(ModelConfig::for_scale(ModelScale::S).descriptor_dim, 128);
  EXPECT_EQ(ModelConfig::for_scale(ModelScale::M).descriptor_dim, 196);
  EXPECT_EQ(ModelConfig::for_scale(ModelScale::L).descriptor_dim, 256);
}

TEST(ModelConfig, RejectsInvalid) {
  auto cfg = ModelConfig::for_scale(ModelScale::N);
  cfg.descriptor_dim = 100;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = ModelConfig::for_scale(ModelScale::N);
  cfg.width_multiple = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(ModelConfig, ParameterCountGrowsWithScale) {
  std::int64_t prev = 0;
  for (auto s : {ModelScale::N, ModelScale::S, ModelScale::M, ModelScale::L}) {
    torch::manual_seed(0);
    YoloPoint m = build_model(ModelConfig::for_scale(s));
    const auto n = parameter_count(m);
    EXPECT_GT(n, prev) << to_string(s);
    prev = n;
  }
}

TEST(Forward, ShapesOnZeroInput) {
  torch::manual_seed(0);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N, 3));
  m->eval();
  torch::NoGradGuard g;
  const auto out = forward(m, torch::zeros({3, 64, 64}));
  EXPECT_EQ(out.detector_logits.sizes(), (std::vector<std::int64_t>{1, 65, 8, 8}));
  EXPECT_EQ(out.coarse_descriptors.sizes(), (std::vector<std::int64_t>{1, 64, 8, 8}));
  ASSERT_EQ(out.object_raw.size(), 3u);
  EXPECT_EQ(out.object_raw[0].sizes(), (std::vector<std::int64_t>{1, 3, 8, 8, 8}));
  EXPECT_EQ(out.object_raw[1].sizes(), (std::vector<std::int64_t>{1, 3, 4, 4, 8}));
  EXPECT_EQ(out.object_raw[2].sizes(), (std::vector<std::int64_t>{1, 3, 2, 2, 8}));
  EXPECT_TRUE(torch::isfinite(out.detector_logits).all().item<bool>());
  const auto norms = out.coarse_descriptors.norm(2, 1);
  EXPECT_LT((norms - 1).abs().max().item<double>(), 1e-5);
}

TEST(Forward, KittiSizedInput) {
  torch::manual_seed(0);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N));
  m->eval();
  torch::NoGradGuard g;
  const auto out = forward(m, torch::rand({1, 3, 288, 960}));
  EXPECT_EQ(out.detector_logits.sizes(), (std::vector<std::int64_t>{1, 65, 36, 120}));
  EXPECT_EQ(heatmap_from_logits(out.detector_logits).sizes(), (std::vector<std::int64_t>{1, 288, 960}));
}

TEST(Forward, DeterministicAndSensitive) {
  torch::manual_seed(1);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N));
  m->eval();
  torch::NoGradGuard g;
  const auto img = torch::rand({3, 64, 96});
  const auto a = forward(m, img), b = forward(m, img);
  EXPECT_TRUE(torch::equal(a.detector_logits, b.detector_logits));
  EXPECT_TRUE(torch::equal(a.coarse_descriptors, b.coarse_descriptors));
  auto other = img.clone();
  other.index_put_({0, 10, 10}, 1.0 - other.index({0, 10, 10}).item<float>());
  const auto c = forward(m, other);
  EXPECT_FALSE(torch::equal(a.detector_logits, c.detector_logits));
}

TEST(Forward, RejectsBadInput) {
  torch::manual_seed(0);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N));
  EXPECT_THROW(forward(m, torch::zeros({3, 60, 64})), DimensionError);
  EXPECT_THROW(forward(m, torch::zeros({3, 64, 70})), DimensionError);
  auto bad = torch::zeros({3, 64, 64});
  bad.index_put_({0, 0, 0}, std::nan(""));
  EXPECT_THROW(forward(m, bad), ValidationError);
}

TEST(Heatmap, UniformLogits) {
  const auto h = heatmap_from_logits(torch::zeros({65, 2, 3}));
  EXPECT_EQ(h.sizes(), (std::vector<std::int64_t>{16, 24}));
  EXPECT_LT((h - 1.0 / 65).abs().max().item<double>(), 1e-7);
}

TEST(Heatmap, DustbinSaturation) {
  auto logits = torch::zeros({65, 2, 2});
  logits.index_put_({64, 1, 0}, 1e4);
  const auto h = heatmap_from_logits(logits);
  EXPECT_LT(h.slice(0, 8, 16).slice(1, 0, 8).max().item<double>(), 1e-12);
  EXPECT_GT(h.slice(0, 0, 8).min().item<double>(), 0.01);
}

TEST(Heatmap, MatchesPerCellOracle) {
  torch::manual_seed(3);
  const auto logits = torch::randn({65, 2, 2}, torch::kDouble) * 3;
  const auto h = heatmap_from_logits(logits);
  auto l = logits.accessor<double, 3>();
  for (int cy = 0; cy < 2; ++cy) {
    for (int cx = 0; cx < 2; ++cx) {
      double z = 0;
      for (int k = 0; k < 65; ++k) z += std::exp(l[k][cy][cx]);
      for (int k = 0; k < 64; ++k) {
        const int y = cy * 8 + k / 8, x = cx * 8 + k % 8;
        EXPECT_NEAR(h.index({y, x}).item<double>(), std::exp(l[k][cy][cx]) / z, 1e-6);
      }
    }
  }
}

TEST(Heatmap, WrongChannelCount) { EXPECT_THROW(heatmap_from_logits(torch::zeros({64, 2, 2})), ShapeError); }

TEST(Gradients, EveryParameterReceivesGradient) {
  torch::manual_seed(4);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N, 2));
  m->train();
  const auto x = torch::rand({2, 3, 64, 64});
  const auto out = m->forward(x);
  const auto heat = heatmap_from_logits(out.detector_logits);
  const auto target = (torch::rand({2, 64, 64}) > 0.97).to(torch::kFloat);
  auto loss = detector_loss(heat, target) + out.coarse_descriptors.pow(3).sum() * 1e-3;
  const auto obj = object_loss(out.object_raw, {{{0, 0.4, 0.5, 0.3, 0.4}}, {{1, 0.6, 0.4, 0.5, 0.5}}},
                               m->config(), {64, 64});
  loss = loss + obj.total;
  loss.backward();
  for (const auto& p : m->named_parameters()) {
    ASSERT_TRUE(p.value().grad().defined()) << p.key();
    EXPECT_GT(p.value().grad().abs().sum().item<double>(), 0.0) << p.key();
  }
}

TEST(Checkpoint, RoundTripAndMismatch) {
  const fs::path dir = fs::temp_directory_path() / "yp_ckpt_test";
  fs::create_directories(dir);
  torch::manual_seed(5);
  YoloPoint a = build_model(ModelConfig::for_scale(ModelScale::N, 4));
  save_checkpoint(a, dir / "a.ckpt");
  YoloPoint b = load_model(dir / "a.ckpt");
  EXPECT_TRUE(b->config() == a->config());
  const auto pa = a->named_parameters(), pb = b->named_parameters();
  for (const auto& p : pa) EXPECT_TRUE(torch::equal(p.value(), pb[p.key()])) << p.key();
  for (const auto& buf : a->named_buffers()) EXPECT_TRUE(torch::equal(buf.value(), b->named_buffers()[buf.key()]));

  YoloPoint c = build_model(ModelConfig::for_scale(ModelScale::N, 7));
  EXPECT_THROW(load_checkpoint(c, dir / "a.ckpt"), CheckpointError);
  EXPECT_NO_THROW(load_checkpoint(c, dir / "a.ckpt", {.allow_detection_layer_mismatch = true}));
  YoloPoint s = build_model(ModelConfig::for_scale(ModelScale::S, 4));
  EXPECT_THROW(load_checkpoint(s, dir / "a.ckpt", {.allow_detection_layer_mismatch = true}), CheckpointError);

  {
    std::ofstream f(dir / "junk.ckpt", std::ios::binary);
    f << "not a checkpoint";
  }
  EXPECT_THROW(load_model(dir / "junk.ckpt"), CheckpointError);
  fs::remove_all(dir);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "yolopoint/errors.hpp"
#include "yolopoint/trainer.hpp"

using namespace yolopoint;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.num_classes = 2;
  cfg.batch_size = 4;
  cfg.descriptor.n_correspondences = 64;
  cfg.descriptor.n_non_correspondences = 64;
  return cfg;
}

// Synthetic shapes with one box each so the object term is exercised.
Dataset boxed_dataset(std::size_t n, std::uint64_t seed) {
  Dataset d = make_synthetic_dataset(n, seed, {});
  for (std::size_t i = 0; i < d.size(); ++i) {
    d.samples[i].boxes.push_back({static_cast<int>(i % 2), 0.5, 0.5, 0.3 + 0.01 * (i % 5), 0.4});
  }
  return d;
}

std::map<std::string, torch::Tensor> snapshot(YoloPoint& m) {
  std::map<std::string, torch::Tensor> s;
  for (const auto& p : m->named_parameters()) s[p.key()] = p.value().detach().clone();
  for (const auto& b : m->named_buffers()) s["buffer:" + b.key()] = b.value().detach().clone();
  return s;
}

}  // namespace

TEST(TrainStep, ZeroLearningRateLeavesWeights) {
  torch::manual_seed(0);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N, 2));
  m->eval();  // keep batch-norm running statistics fixed as well
  const Dataset d = boxed_dataset(4, 1);
  TrainConfig cfg = small_config();
  std::vector<torch::Tensor> params;
  for (auto& p : m->parameters()) params.push_back(p);
  TrainState state(params, 0.0, 3);
  std::mt19937_64 rng(1);
  const Batch b = build_batch(d, {0, 1, 2, 3}, cfg, rng);
  const auto before = snapshot(m);
  train_step(m, b, cfg, state);
  for (const auto& [k, v] : snapshot(m)) EXPECT_TRUE(torch::equal(v, before.at(k))) << k;
}

TEST(TrainStep, IdenticalSeedsGiveIdenticalLosses) {
  auto run = [] {
    torch::manual_seed(0);
    YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N, 2));
    m->train();
    const Dataset d = boxed_dataset(8, 2);
    TrainConfig cfg = small_config();
    std::vector<torch::Tensor> params;
    for (auto& p : m->parameters()) params.push_back(p);
    TrainState state(params, 1e-3, 5);
    std::vector<double> losses;
    for (int i = 0; i < 3; ++i) {
      const Batch b = build_batch(d, {0, 1, 2, 3}, cfg, state.rng);
      losses.push_back(train_step(m, b, cfg, state).total);
    }
    return losses;
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainStep, OverfitsSingleBatch) {
  torch::manual_seed(1);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N, 2));
  m->train();
  const Dataset d = boxed_dataset(4, 3);
  TrainConfig cfg = small_config();
  cfg.homography = HomographySamplingConfig::zero_range();
  std::vector<torch::Tensor> params;
  for (auto& p : m->parameters()) params.push_back(p);
  TrainState state(params, 1e-3, 7);
  std::mt19937_64 rng(2);
  const Batch b = build_batch(d, {0, 1, 2, 3}, cfg, rng, false);
  const double first = train_step(m, b, cfg, state).total;
  double last = first;
  for (int i = 1; i < 200; ++i) last = train_step(m, b, cfg, state).total;
  EXPECT_LE(last, first / 10) << "first " << first << " last " << last;
}

TEST(TrainStep, NonFiniteLossNamesComponent) {
  torch::manual_seed(0);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N, 2));
  const Dataset d = boxed_dataset(2, 4);
  TrainConfig cfg = small_config();
  std::mt19937_64 rng(3);
  const Batch b = build_batch(d, {0, 1}, cfg, rng, false);
  {
    torch::NoGradGuard guard;
    m->named_parameters()["b0.conv.weight"].fill_(std::nan(""));
  }
  try {
    compute_losses(m, b, cfg, rng);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("det"), std::string::npos) << e.what();
  }
}

TEST(PointTarget, RoundsToPixels) {
  KeypointSet k;
  k.points = {{3.4, 2.6, 1}, {0.0, 0.0, 1}, {7.49, 7.49, 1}};
  const auto t = point_target(k, {8, 8});
  EXPECT_EQ(t.sum().item<float>(), 3.0f);
  EXPECT_EQ(t.index({3, 3}).item<float>(), 1.0f);
  EXPECT_EQ(t.index({0, 0}).item<float>(), 1.0f);
}

TEST(Train, LogsCheckpointsAndConsistentTotals) {
  const fs::path out = fs::temp_directory_path() / "yp_train_run";
  fs::remove_all(out);
  torch::manual_seed(0);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N, 2));
  const Dataset d = boxed_dataset(8, 5), val = boxed_dataset(4, 6);
  TrainConfig cfg = small_config();
  cfg.epochs_pretrain = 2;
  TrainOptions opts;
  opts.out_dir = out;
  opts.validation = &val;
  int steps = 0;
  opts.on_step = [&](const StepLogEntry& e) {
    ++steps;
    const auto& l = e.losses;
    EXPECT_NEAR(total_loss(l.det, l.det_warp, l.desc, l.obj, cfg.loss_weights), l.total, 1e-6);
  };
  const auto rep = train(m, d, cfg, opts);
  EXPECT_EQ(steps, 4);
  ASSERT_EQ(rep.epochs.size(), 2u);
  EXPECT_TRUE(rep.epochs[1].val_loss.has_value());
  EXPECT_TRUE(fs::exists(out / "metrics.csv"));
  EXPECT_TRUE(fs::exists(out / "timing.csv"));
  EXPECT_TRUE(fs::is_symlink(out / "checkpoints" / "last"));
  EXPECT_TRUE(fs::is_symlink(out / "checkpoints" / "best"));
  EXPECT_TRUE(fs::exists(fs::canonical(out / "checkpoints" / "last")));
  std::ifstream f(out / "metrics.csv");
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "step,epoch,phase,det,det_warp,desc,obj,total,lr");
  fs::remove_all(out);
}

TEST(Finetune, FrozenPhaseTouchesOnlyDetectionLayer) {
  const fs::path dir = fs::temp_directory_path() / "yp_finetune";
  fs::remove_all(dir);
  fs::create_directories(dir);
  torch::manual_seed(0);
  YoloPoint pre = build_model(ModelConfig::for_scale(ModelScale::N, 80));
  save_checkpoint(pre, dir / "pre.ckpt");

  YoloPoint m = load_for_finetune(dir / "pre.ckpt", 3);
  EXPECT_EQ(m->config().num_classes, 3);
  const auto before = snapshot(m);
  Dataset d = boxed_dataset(8, 7);
  TrainConfig cfg = small_config();
  cfg.num_classes = 3;
  cfg.epochs_frozen = 1;
  cfg.epochs_unfrozen = 0;
  const auto rep = finetune_schedule(m, d, cfg, {});
  ASSERT_EQ(rep.epochs.size(), 1u);
  EXPECT_EQ(rep.epochs[0].phase, "frozen");
  bool detection_changed = false;
  for (const auto& [k, v] : snapshot(m)) {
    const std::string name = k.rfind("buffer:", 0) == 0 ? k.substr(7) : k;
    if (YoloPointImpl::is_detection_layer(name)) {
      detection_changed = detection_changed || !torch::equal(v, before.at(k));
    } else {
      EXPECT_TRUE(torch::equal(v, before.at(k))) << k;
    }
  }
  EXPECT_TRUE(detection_changed);
  fs::remove_all(dir);
}

TEST(Finetune, NoFrozenEpochsMeansPlainFineTuning) {
  torch::manual_seed(0);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N, 2));
  const auto before = snapshot(m);
  TrainConfig cfg = small_config();
  cfg.epochs_frozen = 0;
  cfg.epochs_unfrozen = 1;
  const auto rep = finetune_schedule(m, boxed_dataset(4, 8), cfg, {});
  ASSERT_EQ(rep.epochs.size(), 1u);
  EXPECT_EQ(rep.epochs[0].phase, "unfrozen");
  EXPECT_FALSE(torch::equal(snapshot(m).at("b0.conv.weight"), before.at("b0.conv.weight")));
}

TEST(Finetune, ClassCountMismatchIsRejected) {
  torch::manual_seed(0);
  YoloPoint m = build_model(ModelConfig::for_scale(ModelScale::N, 2));
  TrainConfig cfg = small_config();
  cfg.num_classes = 5;
  EXPECT_THROW(finetune_schedule(m, boxed_dataset(4, 9), cfg, {}), Error);
}

TEST(TrainConfig, FaithfulPresetAndValidation) {
  const auto f = TrainConfig::faithful_preset();
  EXPECT_EQ(f.batch_size, 64);
  EXPECT_EQ(f.lr_pretrain, 1e-3);
  EXPECT_EQ(f.lr_finetune, 1e-4);
  EXPECT_EQ(f.epochs_frozen, 20);
  EXPECT_EQ(f.epochs_unfrozen, 50);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

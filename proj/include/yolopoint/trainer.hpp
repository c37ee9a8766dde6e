#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "yolopoint/core_model.hpp"
#include "yolopoint/data_io.hpp"
#include "yolopoint/geometry.hpp"
#include "yolopoint/labeling.hpp"
#include "yolopoint/losses.hpp"

namespace yolopoint {

struct AugmentationConfig {
  bool mosaic = false;
  bool brightness = true;
  bool contrast = true;
  bool blur = true;
  PhotometricConfig photometric;
  MosaicConfig mosaic_cfg;
};

struct TrainConfig {
  ModelScale model_scale = ModelScale::N;
  int num_classes = 80;
  ImageShape image{64, 64};
  int batch_size = 8;
  double lr_pretrain = 1e-3;
  double lr_finetune = 1e-4;
  // Multiplicative per-epoch decay; 1 keeps the rate constant.
  double lr_decay = 1.0;
  int epochs_pretrain = 10;
  int epochs_frozen = 2;
  int epochs_unfrozen = 3;
  LossWeights loss_weights;
  DescriptorLossConfig descriptor;
  ObjectLossConfig object;
  HomographySamplingConfig homography;
  AugmentationConfig augmentation;
  std::uint64_t seed = 0;

  void validate() const;
  // Batch 64, learning rates 1e-3 / 1e-4, 20 frozen + 50 unfrozen epochs.
  static TrainConfig faithful_preset();
};

struct Dataset {
  std::vector<LabeledImage> samples;  // images already at the training size

  std::size_t size() const { return samples.size(); }
};

// Synthetic shapes with corner labels (no boxes).
Dataset make_synthetic_dataset(std::size_t count, std::uint64_t seed, const SyntheticConfig& cfg);
Dataset load_dataset(const std::vector<SampleRecord>& records, int num_classes, ImageShape shape);

struct Batch {
  torch::Tensor images;  // B x 3 x H x W
  std::vector<KeypointSet> points;
  std::vector<std::vector<BoxLabel>> boxes;

  std::size_t size() const { return points.size(); }
};

// Assembles samples[indices] with the enabled augmentations.
Batch build_batch(const Dataset& data, const std::vector<std::size_t>& indices, const TrainConfig& cfg,
                  std::mt19937_64& rng, bool augment = true);

// Binary H x W map: a pixel is positive iff a point rounds to it.
torch::Tensor point_target(const KeypointSet& points, ImageShape shape);

struct StepLosses {
  double det = 0.0;
  double det_warp = 0.0;
  double desc = 0.0;
  double obj = 0.0;
  double total = 0.0;
};

struct TrainState {
  std::unique_ptr<torch::optim::Adam> optimizer;
  std::mt19937_64 rng;
  std::int64_t step = 0;

  TrainState(std::vector<torch::Tensor> params, double lr, std::uint64_t seed);
  double lr() const;
  void set_lr(double lr);
};

// Losses of one batch: one sampled warp per image, forward passes on the
// original and warped images, object term on the original only. When
// total_out is given it receives the differentiable total. Throws
// DivergenceError naming the first non-finite component.
StepLosses compute_losses(YoloPoint& model, const Batch& batch, const TrainConfig& cfg,
                          std::mt19937_64& rng, torch::Tensor* total_out = nullptr);
// compute_losses + one Adam step. Leaves the train/eval mode to the caller.
StepLosses train_step(YoloPoint& model, const Batch& batch, const TrainConfig& cfg, TrainState& state);

struct StepLogEntry {
  std::int64_t step = 0;
  int epoch = 0;
  std::string phase;
  StepLosses losses;
  double lr = 0.0;
  double time_ms = 0.0;
};

// <dir>/metrics.csv: "step,epoch,phase,det,det_warp,desc,obj,total,lr".
// <dir>/timing.csv: "step,time_ms", kept apart so metrics stay reproducible.
class MetricsLog {
 public:
  explicit MetricsLog(const std::filesystem::path& dir);
  void append(const StepLogEntry& e);

 private:
  std::ofstream metrics_;
  std::ofstream timing_;
};

struct EpochSummary {
  std::string phase;
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::filesystem::path checkpoint;
};

struct TrainReport {
  std::vector<EpochSummary> epochs;
  std::filesystem::path best_checkpoint;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no checkpoints or logs
  const Dataset* validation = nullptr;
  std::function<void(const StepLogEntry&)> on_step;
};

// Mean loss over the dataset with warps drawn from a fixed seed; no updates.
double evaluate_loss(YoloPoint& model, const Dataset& data, const TrainConfig& cfg);

// Pre-training: cfg.epochs_pretrain epochs at cfg.lr_pretrain over shuffled batches.
TrainReport train(YoloPoint& model, const Dataset& data, const TrainConfig& cfg, const TrainOptions& opts);

// Two-phase fine-tuning. The caller loads the pretrained weights and swaps
// the detection layer for the new class count. Phase 1 trains only the
// detection layer (batch-norm statistics frozen as well) for epochs_frozen;
// phase 2 trains everything for epochs_unfrozen. Both use lr_finetune.
TrainReport finetune_schedule(YoloPoint& model, const Dataset& data, const TrainConfig& cfg,
                              const TrainOptions& opts);

// Loads a pretrained checkpoint and replaces its detection layer when the
// class count differs.
YoloPoint load_for_finetune(const std::filesystem::path& checkpoint, int num_classes);

// Points `link` (e.g. out/last) at `target`, replacing an existing entry.
void update_symlink(const std::filesystem::path& link, const std::filesystem::path& target);

}  // namespace yolopoint

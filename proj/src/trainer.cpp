#include "yolopoint/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>

#include "yolopoint/errors.hpp"

namespace yolopoint {

void TrainConfig::validate() const {
  if (num_classes < 1) throw ValidationError("num_classes must be >= 1");
  if (image.height <= 0 || image.width <= 0 || image.height % 32 || image.width % 32) {
    throw ValidationError("training image size must be positive multiples of 32");
  }
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(lr_pretrain > 0) || !(lr_finetune > 0)) throw ValidationError("learning rates must be > 0");
  if (!(lr_decay > 0) || lr_decay > 1) throw ValidationError("lr_decay must be in (0, 1]");
  if (epochs_pretrain < 0 || epochs_frozen < 0 || epochs_unfrozen < 0) {
    throw ValidationError("epoch counts must be >= 0");
  }
  loss_weights.validate();
  descriptor.validate();
  homography.validate();
}

TrainConfig TrainConfig::faithful_preset() {
  TrainConfig c;
  c.batch_size = 64;
  c.lr_pretrain = 1e-3;
  c.lr_finetune = 1e-4;
  c.epochs_pretrain = 100;
  c.epochs_frozen = 20;
  c.epochs_unfrozen = 50;
  c.augmentation.mosaic = true;
  return c;
}

Dataset make_synthetic_dataset(std::size_t count, std::uint64_t seed, const SyntheticConfig& cfg) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticSample s = generate_synthetic(rng, cfg);
    d.samples.push_back({s.image, s.points, {}});
  }
  return d;
}

Dataset load_dataset(const std::vector<SampleRecord>& records, int num_classes, ImageShape shape) {
  Dataset d;
  d.samples.reserve(records.size());
  for (const auto& r : records) d.samples.push_back(load_sample(r, num_classes, shape));
  return d;
}

torch::Tensor point_target(const KeypointSet& points, ImageShape shape) {
  auto t = torch::zeros({shape.height, shape.width}, torch::kFloat32);
  auto a = t.accessor<float, 2>();
  for (const auto& p : points.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    const long c = std::lround(p.x), r = std::lround(p.y);
    if (r >= 0 && r < shape.height && c >= 0 && c < shape.width) a[r][c] = 1.0f;
  }
  return t;
}

Batch build_batch(const Dataset& data, const std::vector<std::size_t>& indices, const TrainConfig& cfg,
                  std::mt19937_64& rng, bool augment) {
  if (indices.empty()) throw ValidationError("build_batch: empty batch");
  const auto& aug = cfg.augmentation;
  PhotometricConfig photo = aug.photometric;
  if (!aug.brightness) photo.max_brightness = 0.0;
  if (!aug.contrast) photo.max_contrast = 0.0;
  if (!aug.blur) photo.max_blur_sigma = 0.0;
  const bool photometric = aug.brightness || aug.contrast || aug.blur;

  Batch b;
  std::vector<torch::Tensor> images;
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  for (std::size_t idx : indices) {
    if (idx >= data.size()) throw ContractError("build_batch: sample index out of range");
    LabeledImage s = data.samples[idx];
    if (augment && aug.mosaic) {
      std::array<LabeledImage, 4> four = {s, data.samples[pick(rng)], data.samples[pick(rng)],
                                          data.samples[pick(rng)]};
      s = mosaic_augment(four, cfg.image, rng, aug.mosaic_cfg).sample;
    }
    if (s.image.size(1) != cfg.image.height || s.image.size(2) != cfg.image.width) {
      throw ShapeError("build_batch: sample is " + std::to_string(s.image.size(1)) + "x" +
                       std::to_string(s.image.size(2)) + ", expected the training size");
    }
    if (augment && photometric) s.image = photometric_augment(s.image, rng, photo);
    images.push_back(s.image);
    b.points.push_back(std::move(s.points));
    b.boxes.push_back(std::move(s.boxes));
  }
  b.images = torch::stack(images);
  return b;
}

TrainState::TrainState(std::vector<torch::Tensor> params, double lr, std::uint64_t seed)
    : optimizer(std::make_unique<torch::optim::Adam>(std::move(params), torch::optim::AdamOptions(lr))),
      rng(seed) {}

double TrainState::lr() const {
  return static_cast<const torch::optim::AdamOptions&>(optimizer->param_groups().front().options()).lr();
}

void TrainState::set_lr(double lr) {
  for (auto& g : optimizer->param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
}

namespace {

void check_finite(const torch::Tensor& t, const char* name) {
  const double v = t.item<double>();
  if (!std::isfinite(v)) {
    throw DivergenceError(std::string("non-finite ") + name + " loss (" + std::to_string(v) + ")");
  }
}

Homography sample_usable_homography(const TrainConfig& cfg, std::mt19937_64& rng) {
  const int rows = cfg.image.height / kCellSize, cols = cfg.image.width / kCellSize;
  for (int attempt = 0; attempt < 20; ++attempt) {
    Homography h = sample_homography(cfg.homography, cfg.image, rng);
    if (!cell_correspondences(h, rows, cols, kCellSize).empty()) return h;
  }
  throw DegenerateGeometryError("no sampled homography keeps any cell inside the image");
}

}  // namespace

StepLosses compute_losses(YoloPoint& model, const Batch& batch, const TrainConfig& cfg,
                          std::mt19937_64& rng, torch::Tensor* total_out) {
  const ImageShape shape{static_cast<int>(batch.images.size(2)), static_cast<int>(batch.images.size(3))};
  TrainConfig local = cfg;
  local.image = shape;
  const std::size_t n = batch.size();

  std::vector<Homography> hs;
  std::vector<torch::Tensor> targets, warped_targets;
  for (std::size_t i = 0; i < n; ++i) {
    hs.push_back(sample_usable_homography(local, rng));
    targets.push_back(point_target(batch.points[i], shape));
    KeypointSet moved;
    for (const auto& p : batch.points[i].points) {
      try {
        const Eigen::Vector2d q = hs.back().apply({p.x, p.y});
        moved.points.push_back({q.x(), q.y(), p.confidence});
      } catch (const DegeneratePointError&) {
      }
    }
    warped_targets.push_back(point_target(moved, shape));
  }
  const WarpResult warped = warp_batch(batch.images, hs);
  const torch::Tensor target = torch::stack(targets);
  const torch::Tensor target_w = torch::stack(warped_targets) * warped.valid.to(torch::kFloat32);

  const RawModelOutput out = forward(model, batch.images);
  const RawModelOutput out_w = forward(model, warped.image);

  const torch::Tensor det = detector_loss(heatmap_from_logits(out.detector_logits), target);
  const torch::Tensor det_w = detector_loss(heatmap_from_logits(out_w.detector_logits), target_w, warped.valid);
  DescriptorLossConfig dc = cfg.descriptor;
  dc.sampling_seed = rng();
  const torch::Tensor desc = descriptor_loss(out.coarse_descriptors, out_w.coarse_descriptors, hs, dc).total;
  torch::Tensor obj = torch::zeros({}, det.options());
  if (cfg.loss_weights.w_obj > 0) {
    obj = object_loss(out.object_raw, batch.boxes, model->config(), shape, cfg.object).total;
  }

  check_finite(det, "detector");
  check_finite(det_w, "warped detector");
  check_finite(desc, "descriptor");
  check_finite(obj, "object");
  const torch::Tensor total = total_loss(det, det_w, desc, obj, cfg.loss_weights);

  StepLosses l;
  l.det = det.item<double>();
  l.det_warp = det_w.item<double>();
  l.desc = desc.item<double>();
  l.obj = obj.item<double>();
  l.total = total_loss(l.det, l.det_warp, l.desc, l.obj, cfg.loss_weights);
  if (total_out) *total_out = total;
  return l;
}

StepLosses train_step(YoloPoint& model, const Batch& batch, const TrainConfig& cfg, TrainState& state) {
  torch::Tensor total;
  const StepLosses l = compute_losses(model, batch, cfg, state.rng, &total);
  state.optimizer->zero_grad();
  total.backward();
  state.optimizer->step();
  ++state.step;
  return l;
}

MetricsLog::MetricsLog(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  metrics_.open(dir / "metrics.csv");
  timing_.open(dir / "timing.csv");
  if (!metrics_ || !timing_) throw IngestionError("cannot write logs in " + dir.string());
  metrics_ << "step,epoch,phase,det,det_warp,desc,obj,total,lr\n" << std::setprecision(9);
  timing_ << "step,time_ms\n" << std::fixed << std::setprecision(3);
}

void MetricsLog::append(const StepLogEntry& e) {
  metrics_ << e.step << ',' << e.epoch << ',' << e.phase << ',' << e.losses.det << ',' << e.losses.det_warp
           << ',' << e.losses.desc << ',' << e.losses.obj << ',' << e.losses.total << ',' << e.lr << '\n';
  timing_ << e.step << ',' << e.time_ms << '\n';
  metrics_.flush();
  timing_.flush();
}

double evaluate_loss(YoloPoint& model, const Dataset& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw ValidationError("evaluate_loss: empty dataset");
  torch::NoGradGuard guard;
  const bool was_training = model->is_training();
  model->eval();
  std::mt19937_64 rng(cfg.seed ^ 0x5eedULL);
  double sum = 0.0;
  for (std::size_t start = 0; start < data.size(); start += cfg.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + cfg.batch_size); ++i) idx.push_back(i);
    const Batch b = build_batch(data, idx, cfg, rng, false);
    sum += compute_losses(model, b, cfg, rng).total * static_cast<double>(idx.size());
  }
  model->train(was_training);
  return sum / static_cast<double>(data.size());
}

void update_symlink(const std::filesystem::path& link, const std::filesystem::path& target) {
  std::error_code ec;
  if (std::filesystem::is_symlink(std::filesystem::symlink_status(link, ec)) ||
      std::filesystem::exists(link, ec)) {
    std::filesystem::remove(link);
  }
  std::filesystem::create_symlink(target.filename(), link);
}

namespace {

void set_batchnorm_eval(YoloPoint& model) {
  for (const auto& m : model->modules(false)) {
    if (auto* bn = dynamic_cast<torch::nn::BatchNorm2dImpl*>(m.get())) bn->eval();
  }
}

struct EpochRunner {
  YoloPoint& model;
  const Dataset& data;
  const TrainConfig& cfg;
  const TrainOptions& opts;
  std::unique_ptr<MetricsLog> log;
  TrainReport report;
  std::optional<double> best_score;
  int epoch_counter = 0;

  EpochRunner(YoloPoint& m, const Dataset& d, const TrainConfig& c, const TrainOptions& o)
      : model(m), data(d), cfg(c), opts(o) {
    if (!opts.out_dir.empty()) {
      std::filesystem::create_directories(opts.out_dir / "checkpoints");
      log = std::make_unique<MetricsLog>(opts.out_dir);
    }
  }

  void run(TrainState& state, const std::string& phase, int epochs, double base_lr, bool freeze_bn) {
    if (data.size() == 0) throw ValidationError("training dataset is empty");
    std::vector<std::size_t> order(data.size());
    for (int e = 0; e < epochs; ++e) {
      ++epoch_counter;
      state.set_lr(base_lr * std::pow(cfg.lr_decay, e));
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), state.rng);
      double sum = 0.0;
      std::size_t seen = 0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> idx(order.begin() + start,
                                     order.begin() + std::min(order.size(), start + cfg.batch_size));
        const Batch b = build_batch(data, idx, cfg, state.rng, true);
        model->train();
        if (freeze_bn) set_batchnorm_eval(model);
        StepLosses l;
        try {
          l = train_step(model, b, cfg, state);
        } catch (const DivergenceError& err) {
          throw DivergenceError(phase + " epoch " + std::to_string(epoch_counter) + " step " +
                                std::to_string(state.step + 1) + ": " + err.what());
        }
        sum += l.total * static_cast<double>(idx.size());
        seen += idx.size();
        StepLogEntry entry{state.step, epoch_counter, phase, l, state.lr(),
                           std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                               .count()};
        if (log) log->append(entry);
        if (opts.on_step) opts.on_step(entry);
      }
      EpochSummary s;
      s.phase = phase;
      s.epoch = epoch_counter;
      s.train_loss = sum / static_cast<double>(seen);
      if (opts.validation) s.val_loss = evaluate_loss(model, *opts.validation, cfg);
      if (!opts.out_dir.empty()) {
        std::ostringstream name;
        name << phase << "_epoch_" << std::setw(3) << std::setfill('0') << epoch_counter << ".ckpt";
        s.checkpoint = opts.out_dir / "checkpoints" / name.str();
        save_checkpoint(model, s.checkpoint);
        update_symlink(opts.out_dir / "checkpoints" / "last", s.checkpoint);
        const double score = s.val_loss.value_or(s.train_loss);
        if (!best_score || score < *best_score) {
          best_score = score;
          report.best_checkpoint = s.checkpoint;
          update_symlink(opts.out_dir / "checkpoints" / "best", s.checkpoint);
        }
      }
      report.epochs.push_back(s);
    }
  }
};

}  // namespace

TrainReport train(YoloPoint& model, const Dataset& data, const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  EpochRunner runner(model, data, cfg, opts);
  TrainState state(model->parameters(), cfg.lr_pretrain, cfg.seed);
  runner.run(state, "pretrain", cfg.epochs_pretrain, cfg.lr_pretrain, false);
  model->eval();
  return runner.report;
}

TrainReport finetune_schedule(YoloPoint& model, const Dataset& data, const TrainConfig& cfg,
                              const TrainOptions& opts) {
  cfg.validate();
  if (model->config().num_classes != cfg.num_classes) {
    throw CheckpointError("finetune: model has " + std::to_string(model->config().num_classes) +
                          " classes, config asks for " + std::to_string(cfg.num_classes));
  }
  EpochRunner runner(model, data, cfg, opts);
  if (cfg.epochs_frozen > 0) {
    std::vector<torch::Tensor> head;
    for (auto& p : model->named_parameters()) {
      const bool trainable = YoloPointImpl::is_detection_layer(p.key());
      p.value().set_requires_grad(trainable);
      if (trainable) head.push_back(p.value());
    }
    TrainState state(head, cfg.lr_finetune, cfg.seed);
    runner.run(state, "frozen", cfg.epochs_frozen, cfg.lr_finetune, true);
    for (auto& p : model->parameters()) p.set_requires_grad(true);
  }
  if (cfg.epochs_unfrozen > 0) {
    TrainState state(model->parameters(), cfg.lr_finetune, cfg.seed + 1);
    runner.run(state, "unfrozen", cfg.epochs_unfrozen, cfg.lr_finetune, false);
  }
  model->eval();
  return runner.report;
}

YoloPoint load_for_finetune(const std::filesystem::path& checkpoint, int num_classes) {
  YoloPoint model = load_model(checkpoint);
  if (model->config().num_classes != num_classes) model->replace_detection_layer(num_classes);
  return model;
}

}  // namespace yolopoint

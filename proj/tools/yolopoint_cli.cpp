// Command-line entry point: one binary, one subcommand per pipeline stage.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "yolopoint/config.hpp"
#include "yolopoint/core_model.hpp"
#include "yolopoint/data_io.hpp"
#include "yolopoint/errors.hpp"
#include "yolopoint/evalsuite.hpp"
#include "yolopoint/labeling.hpp"
#include "yolopoint/plots.hpp"
#include "yolopoint/postprocess.hpp"
#include "yolopoint/trainer.hpp"
#include "yolopoint/vo.hpp"

namespace fs = std::filesystem;
using namespace yolopoint;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr const char* kDataRootEnv = "YOLOPOINT_DATA_ROOT";

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string device = "cpu";
  std::vector<std::string> overrides;
  std::string model_scale;
  int verbose = 0;
};

void add_common(CLI::App* sub, Common& c, bool with_scale) {
  sub->add_option("--config", c.config, "JSON config file (keys below)");
  sub->add_option("--out", c.out, "output directory")->required();
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--device", c.device, "compute device")->check(CLI::IsMember({"cpu", "cuda"}));
  sub->add_option("--override", c.overrides, "config override key=value (repeatable)");
  if (with_scale) {
    sub->add_option("--model-scale", c.model_scale, "model size")->check(CLI::IsMember({"n", "s", "m", "l"}));
  }
  sub->add_flag("-v,--verbose", c.verbose, "progress output on stderr");
}

std::string key_listing(const Json& defaults) {
  std::ostringstream s;
  s << "\nConfig keys (default):\n";
  for (const auto& [k, v] : config_keys(defaults)) s << "  " << std::left << std::setw(40) << k << v << '\n';
  return s.str();
}

// Relative input paths fall back to the data root when they do not exist
// relative to the working directory.
fs::path data_path(const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  if (path.is_absolute() || fs::exists(path)) return path;
  if (const char* root = std::getenv(kDataRootEnv)) {
    const fs::path alt = fs::path(root) / path;
    if (fs::exists(alt)) return alt;
  }
  return path;
}

fs::path require_input(const std::string& p, const std::string& what) {
  const fs::path path = data_path(p);
  if (path.empty() || !fs::exists(path)) throw UsageError(what + " '" + p + "' does not exist");
  return path;
}

Json resolve(const Json& defaults, const Common& c, std::vector<std::string> extra) {
  if (c.device != "cpu") {
    if (!torch::cuda::is_available()) throw UsageError("device '" + c.device + "' is not available");
    throw UsageError("this build runs on cpu only");
  }
  std::vector<std::string> all = c.overrides;
  all.insert(all.end(), extra.begin(), extra.end());
  std::optional<fs::path> file;
  if (!c.config.empty()) file = require_input(c.config, "config file");
  return resolve_config(defaults, file, all);
}

fs::path prepare_out(const Common& c, const Json& resolved) {
  const fs::path out(c.out);
  fs::create_directories(out);
  write_json(out / "resolved_config.json", resolved);
  return out;
}

void log(const Common& c, const std::string& msg) {
  if (c.verbose) std::cerr << msg << '\n';
}

std::string zero_pad(std::size_t i, int width = 6) {
  std::ostringstream s;
  s << std::setw(width) << std::setfill('0') << i;
  return s.str();
}

YoloPoint model_from(const std::string& checkpoint, const std::string& scale, int num_classes,
                     std::uint64_t seed) {
  if (!checkpoint.empty()) return load_model(require_input(checkpoint, "checkpoint"));
  torch::manual_seed(seed);
  return build_model(ModelConfig::for_scale(parse_scale(scale), num_classes));
}

// ---- gen-synthetic ------------------------------------------------------

struct GenArgs {
  Common common;
  std::optional<int> count;
};

Json gen_defaults() {
  return {{"count", 100}, {"seed", 0}, {"validation_count", 0}, {"synthetic", to_json(SyntheticConfig{})}};
}

void run_gen(const GenArgs& a) {
  std::vector<std::string> extra;
  if (a.count) extra.push_back("count=" + std::to_string(*a.count));
  if (a.common.seed) extra.push_back("seed=" + std::to_string(*a.common.seed));
  const Json cfg = resolve(gen_defaults(), a.common, extra);
  const int count = cfg.at("count").get<int>();
  const int val = cfg.at("validation_count").get<int>();
  if (count < 1 || val < 0 || val > count) throw UsageError("count must be >= 1 and validation_count in [0, count]");
  const SyntheticConfig sc = synthetic_config_from_json(cfg.at("synthetic"));
  const fs::path out = prepare_out(a.common, cfg);
  fs::create_directories(out / "images");
  fs::create_directories(out / "labels");

  std::mt19937_64 rng(cfg.at("seed").get<std::uint64_t>());
  std::vector<SampleRecord> records;
  for (int i = 0; i < count; ++i) {
    const SyntheticSample s = generate_synthetic(rng, sc);
    const std::string stem = zero_pad(i);
    SampleRecord r;
    r.image = out / "images" / (stem + ".png");
    r.keypoint_labels = out / "labels" / (stem + ".txt");
    save_image(r.image, s.image);
    write_point_labels(*r.keypoint_labels, s.points);
    records.push_back(r);
    if ((i + 1) % 100 == 0) log(a.common, "generated " + std::to_string(i + 1));
  }
  records = split_records(std::move(records), static_cast<std::size_t>(val), cfg.at("seed").get<std::uint64_t>());
  write_manifest(out / "manifest.tsv", records);
  std::cout << "wrote " << count << " samples to " << out.string() << '\n';
}

// ---- label --------------------------------------------------------------

struct LabelArgs {
  Common common;
  std::string manifest;
  std::string checkpoint;
};

Json label_defaults() {
  return {{"height", 0},
          {"width", 0},
          {"model_scale", "n"},
          {"adaptation", to_json(AdaptationConfig{})},
          {"homography", to_json(HomographySamplingConfig{})}};
}

void run_label(const LabelArgs& a) {
  std::vector<std::string> extra;
  if (a.common.seed) extra.push_back("homography.seed=" + std::to_string(*a.common.seed));
  if (!a.common.model_scale.empty()) extra.push_back("model_scale=" + a.common.model_scale);
  const Json cfg = resolve(label_defaults(), a.common, extra);
  const AdaptationConfig ac = adaptation_config_from_json(cfg.at("adaptation"));
  const HomographySamplingConfig hc = homography_config_from_json(cfg.at("homography"));
  const ImageShape fixed{cfg.at("height").get<int>(), cfg.at("width").get<int>()};
  if ((fixed.height != 0 || fixed.width != 0) && (fixed.height % 32 || fixed.width % 32 || fixed.height <= 0 ||
                                                  fixed.width <= 0)) {
    throw UsageError("label: height/width must both be 0 or positive multiples of 32");
  }
  const auto records = read_manifest(require_input(a.manifest, "manifest"));
  YoloPoint model = model_from(a.checkpoint, cfg.at("model_scale").get<std::string>(), 80, hc.seed);
  model->eval();
  const fs::path out = prepare_out(a.common, cfg);
  fs::create_directories(out / "labels");

  std::vector<SampleRecord> labeled;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const torch::Tensor native = load_image(r.image);
    const ImageShape nat{static_cast<int>(native.size(1)), static_cast<int>(native.size(2))};
    const ImageShape in = fixed.height > 0 ? fixed : ImageShape{nat.height / 32 * 32, nat.width / 32 * 32};
    if (in.height <= 0 || in.width <= 0) throw IngestionError(r.image.string() + ": image smaller than 32 px");
    const PseudoLabels pl = homographic_adaptation(model, resize_image(native, in), ac, hc);
    // back to native pixels
    KeypointSet pts = pl.points;
    const double sx = static_cast<double>(nat.width) / in.width, sy = static_cast<double>(nat.height) / in.height;
    for (auto& p : pts.points) {
      p.x = (p.x + 0.5) * sx - 0.5;
      p.y = (p.y + 0.5) * sy - 0.5;
    }
    SampleRecord rec = r;
    rec.keypoint_labels = out / "labels" / (zero_pad(i) + "_" + r.image.stem().string() + ".txt");
    write_point_labels(*rec.keypoint_labels, pts);
    labeled.push_back(rec);
    log(a.common, "labeled " + r.image.string() + ": " + std::to_string(pts.size()) + " points");
  }
  write_manifest(out / "manifest.tsv", labeled);
  std::cout << "labeled " << labeled.size() << " images into " << out.string() << '\n';
}

// ---- train / finetune ---------------------------------------------------

struct TrainArgs {
  Common common;
  std::string manifest;
  std::string checkpoint;
};

Json train_defaults() {
  Json j = to_json(TrainConfig{});
  j["data"] = {{"synthetic_count", 2000}, {"validation_count", 0}};
  return j;
}

std::vector<std::string> train_extra(const Common& c) {
  std::vector<std::string> extra;
  if (c.seed) extra.push_back("seed=" + std::to_string(*c.seed));
  if (!c.model_scale.empty()) extra.push_back("model_scale=" + c.model_scale);
  return extra;
}

void write_epoch_summary(const fs::path& path, const TrainReport& report) {
  std::ofstream f(path);
  f << "epoch,phase,train_loss,val_loss\n" << std::setprecision(9);
  for (const auto& e : report.epochs) {
    f << e.epoch << ',' << e.phase << ',' << e.train_loss << ',';
    if (e.val_loss) f << *e.val_loss;
    f << '\n';
  }
}

std::pair<Dataset, Dataset> datasets_for(const TrainArgs& a, const Json& cfg, const TrainConfig& tc) {
  const int val_count = cfg.at("data").at("validation_count").get<int>();
  if (val_count < 0) throw UsageError("data.validation_count must be >= 0");
  Dataset train_set, val_set;
  if (!a.manifest.empty()) {
    auto records = read_manifest(require_input(a.manifest, "manifest"));
    if (val_count > 0) records = split_records(std::move(records), static_cast<std::size_t>(val_count), tc.seed);
    std::vector<SampleRecord> tr, va;
    for (auto& r : records) (r.split == "val" ? va : tr).push_back(r);
    train_set = load_dataset(tr, tc.num_classes, tc.image);
    val_set = load_dataset(va, tc.num_classes, tc.image);
  } else {
    SyntheticConfig sc;
    sc.shape = tc.image;
    const int n = cfg.at("data").at("synthetic_count").get<int>();
    if (n < 1) throw UsageError("data.synthetic_count must be >= 1");
    train_set = make_synthetic_dataset(static_cast<std::size_t>(n), tc.seed, sc);
    if (val_count > 0) val_set = make_synthetic_dataset(static_cast<std::size_t>(val_count), tc.seed + 1, sc);
  }
  if (train_set.size() == 0) throw UsageError("no training samples");
  return {std::move(train_set), std::move(val_set)};
}

TrainOptions train_options(const fs::path& out, const Dataset& val, const Common& c) {
  TrainOptions o;
  o.out_dir = out;
  if (val.size() > 0) o.validation = &val;
  if (c.verbose) {
    o.on_step = [](const StepLogEntry& e) {
      if (e.step % 50 == 0) {
        std::cerr << e.phase << " epoch " << e.epoch << " step " << e.step << " loss " << e.losses.total << '\n';
      }
    };
  }
  return o;
}

void run_train(const TrainArgs& a) {
  const Json cfg = resolve(train_defaults(), a.common, train_extra(a.common));
  const TrainConfig tc = train_config_from_json(cfg);
  auto [train_set, val_set] = datasets_for(a, cfg, tc);
  torch::manual_seed(tc.seed);
  YoloPoint model = a.checkpoint.empty() ? build_model(ModelConfig::for_scale(tc.model_scale, tc.num_classes))
                                         : load_model(require_input(a.checkpoint, "checkpoint"));
  if (model->config().num_classes != tc.num_classes) {
    throw UsageError("checkpoint has " + std::to_string(model->config().num_classes) +
                     " classes, config num_classes is " + std::to_string(tc.num_classes));
  }
  const fs::path out = prepare_out(a.common, cfg);
  const TrainReport report = train(model, train_set, tc, train_options(out, val_set, a.common));
  write_epoch_summary(out / "epochs.csv", report);
  save_checkpoint(model, out / "final.ckpt");
  std::cout << "trained " << report.epochs.size() << " epochs; final checkpoint " << (out / "final.ckpt").string()
            << '\n';
}

void run_finetune(const TrainArgs& a) {
  if (a.checkpoint.empty()) throw UsageError("finetune needs --checkpoint");
  const Json cfg = resolve(train_defaults(), a.common, train_extra(a.common));
  const TrainConfig tc = train_config_from_json(cfg);
  auto [train_set, val_set] = datasets_for(a, cfg, tc);
  torch::manual_seed(tc.seed);
  YoloPoint model = load_for_finetune(require_input(a.checkpoint, "checkpoint"), tc.num_classes);
  const fs::path out = prepare_out(a.common, cfg);
  const TrainReport report = finetune_schedule(model, train_set, tc, train_options(out, val_set, a.common));
  write_epoch_summary(out / "epochs.csv", report);
  save_checkpoint(model, out / "final.ckpt");
  std::cout << "fine-tuned " << report.epochs.size() << " epochs; final checkpoint "
            << (out / "final.ckpt").string() << '\n';
}

// ---- eval-hpatches ------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string root;
  std::string checkpoint;
  std::optional<int> max_points;
  std::optional<int> nms_radius;
};

Json eval_defaults() { return {{"seed", 0}, {"model_scale", "n"}, {"eval", to_json(EvalConfig{})}}; }

void run_eval(const EvalArgs& a) {
  std::vector<std::string> extra;
  if (a.common.seed) extra.push_back("seed=" + std::to_string(*a.common.seed));
  if (!a.common.model_scale.empty()) extra.push_back("model_scale=" + a.common.model_scale);
  if (a.max_points) extra.push_back("eval.max_points=" + std::to_string(*a.max_points));
  if (a.nms_radius) extra.push_back("eval.nms_radius=" + std::to_string(*a.nms_radius));
  const Json cfg = resolve(eval_defaults(), a.common, extra);
  const EvalConfig ec = eval_config_from_json(cfg.at("eval"));
  const auto scenes = load_hpatches(require_input(a.root, "HPatches root"));
  if (scenes.empty()) throw IngestionError("no scenes under " + a.root);
  YoloPoint model = model_from(a.checkpoint, cfg.at("model_scale").get<std::string>(), 80,
                               cfg.at("seed").get<std::uint64_t>());
  model->eval();
  KeypointDetector detect = [&](const torch::Tensor& image) {
    torch::NoGradGuard guard;
    const RawModelOutput raw = forward(model, image.unsqueeze(0));
    KeypointSet k = extract_keypoints(heatmap_from_logits(raw.detector_logits)[0], ec.conf_threshold,
                                      ec.nms_radius, ec.max_points);
    return sample_descriptors(raw.coarse_descriptors[0], k);
  };
  const fs::path out = prepare_out(a.common, cfg);
  const auto rows = evaluate_hpatches(scenes, detect, ec);
  std::ostringstream eps;
  eps << "correct_dist_eps " << ec.correct_dist_eps << " px (repeatability, nn_map, matching_score)";
  write_metric_rows(out / "hpatches_metrics.csv", rows, {eps.str()});
  const std::string table = summary_table(rows);
  std::ofstream(out / "summary.txt") << table;
  std::cout << table;

  // plots: repeatability histogram and one match visualization
  std::vector<double> rep;
  for (const auto& r : rows) {
    if (r.metric == "repeatability") rep.push_back(r.value);
  }
  save_plot(out / "repeatability_hist.png", histogram_plot(rep, 20, "repeatability per scene"));
  const auto& pair = scenes.front().pairs.front();
  const torch::Tensor ia = load_image(pair.image_a, ec.resolution), ib = load_image(pair.image_b, ec.resolution);
  const KeypointSet ka = detect(ia), kb = detect(ib);
  const ImageShape na = image_shape_of(pair.image_a), nb = image_shape_of(pair.image_b);
  const Eigen::Matrix3d sa = Eigen::Vector3d(static_cast<double>(ec.resolution.width) / na.width,
                                             static_cast<double>(ec.resolution.height) / na.height, 1.0)
                                 .asDiagonal();
  const Eigen::Matrix3d sb = Eigen::Vector3d(static_cast<double>(ec.resolution.width) / nb.width,
                                             static_cast<double>(ec.resolution.height) / nb.height, 1.0)
                                 .asDiagonal();
  const Homography h(sb * pair.h.matrix() * sa.inverse());
  save_plot(out / "matches.png", match_plot(ia, ib, ka, kb, match_descriptors(ka, kb), &h, ec.correct_dist_eps));
}

// ---- vo -----------------------------------------------------------------

struct VoArgs {
  Common common;
  std::string root;
  std::string checkpoint;
  std::string keypoints_dir;
  bool no_filter = false;
  std::optional<int> max_points;
  std::optional<int> nms_radius;
};

Json vo_defaults() {
  const auto names = kitti_class_names();
  std::vector<std::string> dynamic;
  const auto flags = default_dynamic_flags(names);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (flags[i]) dynamic.push_back(names[i]);
  }
  return {{"sequence", "00"},
          {"camera", "image_0"},
          {"projection", "P0"},
          {"model_scale", "n"},
          {"class_names", names},
          {"dynamic_classes", dynamic},
          {"vo", to_json(VoConfig{})}};
}

void run_vo(const VoArgs& a) {
  std::vector<std::string> extra;
  if (a.common.seed) extra.push_back("vo.seed=" + std::to_string(*a.common.seed));
  if (!a.common.model_scale.empty()) extra.push_back("model_scale=" + a.common.model_scale);
  if (a.no_filter) extra.push_back("vo.filter_dynamic=false");
  if (a.max_points) extra.push_back("vo.max_points=" + std::to_string(*a.max_points));
  if (a.nms_radius) extra.push_back("vo.nms_radius=" + std::to_string(*a.nms_radius));
  const Json cfg = resolve(vo_defaults(), a.common, extra);
  const VoConfig vc = vo_config_from_json(cfg.at("vo"));
  const auto names = cfg.at("class_names").get<std::vector<std::string>>();
  const auto dynamic = cfg.at("dynamic_classes").get<std::vector<std::string>>();
  std::vector<bool> flags(names.size(), false);
  for (const auto& d : dynamic) {
    const auto it = std::find(names.begin(), names.end(), d);
    if (it == names.end()) throw UsageError("dynamic class '" + d + "' is not in class_names");
    flags[it - names.begin()] = true;
  }
  KittiSequence seq = load_kitti_sequence(require_input(a.root, "KITTI root"), cfg.at("sequence").get<std::string>(),
                                          cfg.at("camera").get<std::string>());
  if (cfg.at("projection").get<std::string>() != "P0") {
    seq.intrinsics = read_kitti_calibration(data_path(a.root) / "sequences" / seq.id / "calib.txt",
                                            cfg.at("projection").get<std::string>());
  }

  std::optional<YoloPoint> model;
  FrameSource source;
  if (!a.keypoints_dir.empty()) {
    source = file_frame_source(require_input(a.keypoints_dir, "keypoints directory"), seq.frames, names, flags);
  } else {
    model = model_from(a.checkpoint, cfg.at("model_scale").get<std::string>(), static_cast<int>(names.size()),
                       vc.seed);
    if ((*model)->config().num_classes != static_cast<int>(names.size())) {
      throw UsageError("checkpoint predicts " + std::to_string((*model)->config().num_classes) +
                       " classes but class_names lists " + std::to_string(names.size()));
    }
    source = model_frame_source(*model, seq.frames, vc, names, flags);
  }
  const fs::path out = prepare_out(a.common, cfg);
  const auto [traj, report] = run_sequence(source, seq.frames.size(), seq.intrinsics, seq.ground_truth, vc);
  write_trajectory(out / "trajectory.txt", traj);
  write_trajectory(out / "ground_truth.txt", seq.ground_truth);
  write_vo_report(out / "report.json", report);
  write_metric_rows(out / "vo_metrics.csv", {{seq.id, "translation_rmse_m", report.translation_rmse},
                                             {seq.id, "rotation_rmse_deg", report.rotation_rmse}},
                    {"scale: " + report.scale_policy});
  {
    std::ofstream t(out / "timing.json");
    t << "{\n  \"mean_iteration_time_ms\": " << report.mean_iteration_time << "\n}\n";
  }
  const std::string label = vc.filter_dynamic ? "filtered" : "unfiltered";
  save_plot(out / "trajectory.png", trajectory_plot({{"ground truth", seq.ground_truth}, {label, traj}},
                                                    "sequence " + seq.id));
  save_plot(out / "error_over_time.png", error_over_time_plot({{label, traj}}, seq.ground_truth));
  std::cout << "scale: " << report.scale_policy << '\n'
            << "translation RMSE " << report.translation_rmse << " m, rotation RMSE " << report.rotation_rmse
            << " deg, " << report.mean_iteration_time << " ms/frame\n";
}

// ---- export-plots -------------------------------------------------------

struct PlotArgs {
  Common common;
  std::vector<std::string> runs;
};

Json plot_defaults() { return {{"histogram_bins", 20}}; }

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream f(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

void run_plots(const PlotArgs& a) {
  const Json cfg = resolve(plot_defaults(), a.common, {});
  const int bins = cfg.at("histogram_bins").get<int>();
  if (bins < 1) throw UsageError("histogram_bins must be >= 1");
  const fs::path out = prepare_out(a.common, cfg);
  int written = 0;
  std::vector<std::pair<std::string, Trajectory>> trajectories;
  std::optional<Trajectory> ground_truth;
  for (const auto& run_str : a.runs) {
    const fs::path run = require_input(run_str, "run directory");
    const std::string name = run.filename().string();
    if (fs::exists(run / "metrics.csv")) {
      const auto rows = read_csv(run / "metrics.csv");
      std::vector<Series> series = {{"total", {}, {}}, {"det", {}, {}}, {"det_warp", {}, {}},
                                    {"desc", {}, {}},  {"obj", {}, {}}};
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() < 9) continue;
        const double step = std::stod(rows[i][0]);
        const int cols[] = {7, 3, 4, 5, 6};
        for (int k = 0; k < 5; ++k) {
          series[k].x.push_back(step);
          series[k].y.push_back(std::stod(rows[i][cols[k]]));
        }
      }
      save_plot(out / (name + "_loss.png"), line_plot(series, name + " training loss", "step", "loss"));
      ++written;
    }
    if (fs::exists(run / "hpatches_metrics.csv")) {
      std::map<std::string, std::vector<double>> by_metric;
      for (const auto& r : read_metric_rows(run / "hpatches_metrics.csv")) by_metric[r.metric].push_back(r.value);
      for (const auto& [metric, values] : by_metric) {
        save_plot(out / (name + "_" + metric + "_hist.png"), histogram_plot(values, bins, metric));
        ++written;
      }
    }
    if (fs::exists(run / "trajectory.txt")) {
      const Trajectory t = read_trajectory(run / "trajectory.txt");
      if (fs::exists(run / "ground_truth.txt")) {
        const Trajectory gt = read_trajectory(run / "ground_truth.txt");
        if (ground_truth && gt.size() != ground_truth->size()) {
          throw UsageError("runs cover different sequences; plot them separately");
        }
        ground_truth = gt;
      }
      trajectories.emplace_back(name, t);
    }
  }
  if (!trajectories.empty()) {
    auto all = trajectories;
    if (ground_truth) all.insert(all.begin(), {"ground truth", *ground_truth});
    save_plot(out / "trajectories.png", trajectory_plot(all, "trajectories"));
    ++written;
    if (ground_truth) {
      save_plot(out / "error_over_time.png", error_over_time_plot(trajectories, *ground_truth));
      ++written;
    }
  }
  std::cout << "wrote " << written << " plots to " << out.string() << '\n';
}

int exit_code_for(const Error& e) { return e.category() == ErrorCategory::Usage ? kExitUsage : kExitRuntime; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"YOLOPoint: joint keypoint, descriptor and object detection"};
  app.require_subcommand(1);
  app.footer(std::string("Relative input paths are also looked up under $") + kDataRootEnv + ".");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "render synthetic shapes with corner labels");
  add_common(gen_cmd, gen.common, false);
  gen_cmd->add_option("--count", gen.count, "number of images");
  gen_cmd->footer(key_listing(gen_defaults()));

  LabelArgs lab;
  auto* label_cmd = app.add_subcommand("label", "homographic-adaptation pseudo-labels for a manifest");
  add_common(label_cmd, lab.common, true);
  label_cmd->add_option("--manifest", lab.manifest, "input manifest")->required();
  label_cmd->add_option("--checkpoint", lab.checkpoint, "model checkpoint");
  label_cmd->footer(key_listing(label_defaults()));

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train from scratch (synthetic shapes unless --manifest)");
  add_common(train_cmd, tr.common, true);
  train_cmd->add_option("--manifest", tr.manifest, "training manifest");
  train_cmd->add_option("--checkpoint", tr.checkpoint, "initial weights");
  train_cmd->footer(key_listing(train_defaults()));

  TrainArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune", "frozen-then-unfrozen fine-tuning with a new detection layer");
  add_common(ft_cmd, ft.common, true);
  ft_cmd->add_option("--manifest", ft.manifest, "training manifest")->required();
  ft_cmd->add_option("--checkpoint", ft.checkpoint, "pretrained checkpoint")->required();
  ft_cmd->footer(key_listing(train_defaults()));

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval-hpatches", "repeatability, homography estimation, NN mAP, matching score");
  add_common(eval_cmd, ev.common, true);
  eval_cmd->add_option("--root", ev.root, "HPatches root")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint");
  eval_cmd->add_option("--max-points", ev.max_points, "keypoint budget");
  eval_cmd->add_option("--nms-radius", ev.nms_radius, "NMS radius in pixels");
  eval_cmd->footer(key_listing(eval_defaults()));

  VoArgs vo;
  auto* vo_cmd = app.add_subcommand("vo", "frame-to-frame visual odometry on a KITTI-layout sequence");
  add_common(vo_cmd, vo.common, true);
  vo_cmd->add_option("--root", vo.root, "KITTI odometry root")->required();
  vo_cmd->add_option("--checkpoint", vo.checkpoint, "model checkpoint");
  vo_cmd->add_option("--keypoints-dir", vo.keypoints_dir, "read keypoints/boxes from interchange files instead");
  vo_cmd->add_flag("--no-filter-dynamic", vo.no_filter, "keep keypoints inside dynamic-class boxes");
  vo_cmd->add_option("--max-points", vo.max_points, "keypoint budget");
  vo_cmd->add_option("--nms-radius", vo.nms_radius, "NMS radius in pixels");
  vo_cmd->footer(key_listing(vo_defaults()));

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("export-plots", "plots from finished run directories");
  add_common(plot_cmd, pl.common, false);
  plot_cmd->add_option("runs", pl.runs, "run directories")->required();
  plot_cmd->footer(key_listing(plot_defaults()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen_cmd) run_gen(gen);
    if (*label_cmd) run_label(lab);
    if (*train_cmd) run_train(tr);
    if (*ft_cmd) run_finetune(ft);
    if (*eval_cmd) run_eval(ev);
    if (*vo_cmd) run_vo(vo);
    if (*plot_cmd) run_plots(pl);
  } catch (const Error& e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error [usage error]: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error [runtime]: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

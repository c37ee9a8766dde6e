#include "yolopoint/vo.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <json.hpp>
#include <opencv2/calib3d.hpp>
#include <opencv2/core/eigen.hpp>

#include "yolopoint/errors.hpp"
#include "yolopoint/postprocess.hpp"

namespace yolopoint {

namespace {

constexpr double kRadToDeg = 180.0 / M_PI;

Eigen::Matrix3d kabsch(const std::vector<Eigen::Vector3d>& from, const std::vector<Eigen::Vector3d>& to,
                       const std::vector<int>& idx) {
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i : idx) cov += to[i] * from[i].transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

struct RotationFit {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  int inliers = 0;
};

// Pure-rotation model x_b ~ K R K^-1 x_a fitted by two-point RANSAC.
// Least-squares essential matrix over the RANSAC inliers (normalized
// coordinates, projected onto the essential manifold). RANSAC alone keeps the
// best minimal-sample model.
std::optional<cv::Mat> refit_essential(const std::vector<cv::Point2d>& pa, const std::vector<cv::Point2d>& pb,
                                       const cv::Mat& mask, const CameraIntrinsics& k) {
  const Eigen::Matrix3d kinv = k.matrix().inverse();
  std::vector<Eigen::Matrix<double, 1, 9>> rows;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!mask.at<unsigned char>(static_cast<int>(i))) continue;
    const Eigen::Vector3d a = kinv * Eigen::Vector3d(pa[i].x, pa[i].y, 1.0);
    const Eigen::Vector3d b = kinv * Eigen::Vector3d(pb[i].x, pb[i].y, 1.0);
    Eigen::Matrix<double, 1, 9> r;
    r << b.x() * a.x(), b.x() * a.y(), b.x(), b.y() * a.x(), b.y() * a.y(), b.y(), a.x(), a.y(), 1.0;
    rows.push_back(r);
  }
  if (rows.size() < 8) return std::nullopt;
  Eigen::MatrixXd m(rows.size(), 9);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
  Eigen::Matrix3d em;
  em << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  Eigen::JacobiSVD<Eigen::Matrix3d> es(em, Eigen::ComputeFullU | Eigen::ComputeFullV);
  em = es.matrixU() * Eigen::Vector3d(1, 1, 0).asDiagonal() * es.matrixV().transpose();
  cv::Mat out;
  cv::eigen2cv(em, out);
  return out;
}

RotationFit fit_rotation_only(const std::vector<cv::Point2d>& pa, const std::vector<cv::Point2d>& pb,
                              const CameraIntrinsics& k, std::mt19937_64& rng, const PoseConfig& cfg) {
  const Eigen::Matrix3d km = k.matrix();
  const Eigen::Matrix3d kinv = km.inverse();
  const int n = static_cast<int>(pa.size());
  std::vector<Eigen::Vector3d> ba(n), bb(n);
  for (int i = 0; i < n; ++i) {
    ba[i] = (kinv * Eigen::Vector3d(pa[i].x, pa[i].y, 1.0)).normalized();
    bb[i] = (kinv * Eigen::Vector3d(pb[i].x, pb[i].y, 1.0)).normalized();
  }
  const double thr2 = cfg.ransac_threshold_px * cfg.ransac_threshold_px;
  auto inliers_of = [&](const Eigen::Matrix3d& r) {
    const Eigen::Matrix3d h = km * r * kinv;
    std::vector<int> in;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d q = h * Eigen::Vector3d(pa[i].x, pa[i].y, 1.0);
      if (std::abs(q.z()) < 1e-12) continue;
      const double dx = q.x() / q.z() - pb[i].x, dy = q.y() / q.z() - pb[i].y;
      if (dx * dx + dy * dy <= thr2) in.push_back(i);
    }
    return in;
  };

  RotationFit best;
  std::vector<int> best_in;
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int it = 0; it < cfg.rotation_only_iterations; ++it) {
    const int i = pick(rng);
    int j = pick(rng);
    if (i == j) continue;
    const Eigen::Matrix3d r = kabsch(ba, bb, {i, j});
    auto in = inliers_of(r);
    if (in.size() > best_in.size()) {
      best_in = std::move(in);
      best.rotation = r;
    }
  }
  if (best_in.size() >= 2) {
    best.rotation = kabsch(ba, bb, best_in);
    best_in = inliers_of(best.rotation);
  }
  best.inliers = static_cast<int>(best_in.size());
  return best;
}

Pose motion_from_relative(const Eigen::Matrix3d& r, const Eigen::Vector3d& t, double scale) {
  // camera B expressed in camera A's frame
  Pose p;
  p.rotation = r.transpose();
  p.translation = -r.transpose() * t * scale;
  return p;
}

}  // namespace

RelativePose relative_pose(const MatchSet& matches, const KeypointSet& a, const KeypointSet& b,
                           const CameraIntrinsics& k, std::mt19937_64& rng, const PoseConfig& cfg) {
  k.validate();
  const std::size_t n = matches.pairs.size();
  if (n < 5) {
    throw DegenerateFrameError("relative_pose: " + std::to_string(n) + " matches, need at least 5");
  }
  std::vector<cv::Point2d> pa, pb;
  pa.reserve(n);
  pb.reserve(n);
  for (const auto& m : matches.pairs) {
    if (m.index_a < 0 || m.index_a >= static_cast<int>(a.size()) || m.index_b < 0 ||
        m.index_b >= static_cast<int>(b.size())) {
      throw ContractError("relative_pose: match index out of range");
    }
    pa.emplace_back(a.points[m.index_a].x, a.points[m.index_a].y);
    pb.emplace_back(b.points[m.index_b].x, b.points[m.index_b].y);
  }

  cv::Mat km;
  cv::eigen2cv(k.matrix(), km);
  cv::Mat mask;
  cv::Mat e = cv::findEssentialMat(pa, pb, km, cv::RANSAC, cfg.ransac_confidence,
                                   cfg.ransac_threshold_px, mask);
  RelativePose out;
  out.inlier_mask.assign(n, false);
  int essential_inliers = 0;
  if (!e.empty() && e.rows >= 3) {
    cv::Mat r, t;
    cv::Mat e3 = e.rowRange(0, 3).clone();
    if (auto refined = refit_essential(pa, pb, mask, k)) e3 = *refined;
    essential_inliers = cv::recoverPose(e3, pa, pb, km, r, t, mask);
    if (essential_inliers >= 5) {
      Eigen::Matrix3d re;
      Eigen::Vector3d te;
      cv::cv2eigen(r, re);
      cv::cv2eigen(t, te);
      out.rotation = orthonormalize(re);
      out.translation = te.normalized();
      for (std::size_t i = 0; i < n; ++i) out.inlier_mask[i] = mask.at<unsigned char>(static_cast<int>(i)) != 0;
    } else {
      essential_inliers = 0;
    }
  }

  const RotationFit rot = fit_rotation_only(pa, pb, k, rng, cfg);
  if (rot.inliers >= 5 && rot.inliers >= cfg.rotation_only_ratio * essential_inliers) {
    // Parallax too small to separate translation from rotation.
    out.rotation = orthonormalize(rot.rotation);
    out.translation_reliable = false;
    const Eigen::Matrix3d km_e = k.matrix();
    const Eigen::Matrix3d h = km_e * out.rotation * km_e.inverse();
    const double thr2 = cfg.ransac_threshold_px * cfg.ransac_threshold_px;
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector3d q = h * Eigen::Vector3d(pa[i].x, pa[i].y, 1.0);
      const double dx = q.x() / q.z() - pb[i].x, dy = q.y() / q.z() - pb[i].y;
      out.inlier_mask[i] = dx * dx + dy * dy <= thr2;
      count += out.inlier_mask[i];
    }
    out.inliers = count;
    return out;
  }
  if (essential_inliers < 5) throw DegenerateFrameError("relative_pose: no consensus");
  out.inliers = essential_inliers;
  return out;
}

VoReport score_trajectory(const Trajectory& estimate, const Trajectory& ground_truth) {
  if (estimate.size() != ground_truth.size()) {
    throw ContractError("score_trajectory: estimate has " + std::to_string(estimate.size()) +
                        " poses, ground truth " + std::to_string(ground_truth.size()));
  }
  VoReport report;
  const std::size_t n = estimate.size();
  if (n == 0) return report;
  double t_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t_sum += (estimate.poses[i].translation - ground_truth.poses[i].translation).squaredNorm();
  }
  report.translation_rmse = std::sqrt(t_sum / static_cast<double>(n));
  if (n > 1) {
    double r_sum = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      const Eigen::Matrix3d rel_est = estimate.poses[i - 1].rotation.transpose() * estimate.poses[i].rotation;
      const Eigen::Matrix3d rel_gt =
          ground_truth.poses[i - 1].rotation.transpose() * ground_truth.poses[i].rotation;
      const double a = rotation_angle(rel_gt.transpose() * rel_est) * kRadToDeg;
      r_sum += a * a;
    }
    report.rotation_rmse = std::sqrt(r_sum / static_cast<double>(n - 1));
  }
  return report;
}

std::pair<Trajectory, VoReport> run_sequence(const FrameSource& source, std::size_t frame_count,
                                             const CameraIntrinsics& k, const Trajectory& ground_truth,
                                             const VoConfig& cfg) {
  k.validate();
  if (ground_truth.size() != frame_count) {
    throw ContractError("run_sequence: " + std::to_string(frame_count) + " frames but " +
                        std::to_string(ground_truth.size()) + " ground-truth poses");
  }
  std::mt19937_64 rng(cfg.seed);
  Trajectory traj;
  std::vector<VoFrameLog> logs;
  std::vector<std::string> events;
  double total_ms = 0.0;
  std::size_t timed = 0;

  std::optional<FrameFeatures> prev;
  std::size_t prev_index = 0;
  Pose last_motion;  // per-frame motion, constant-velocity fallback
  bool have_motion = false;

  auto step_pose = [&](std::size_t i, const Pose& motion) {
    Pose p = traj.poses[i - 1] * motion;
    p.rotation = orthonormalize(p.rotation);
    return p;
  };

  for (std::size_t i = 0; i < frame_count; ++i) {
    VoFrameLog log;
    log.frame = i;
    const auto t0 = std::chrono::steady_clock::now();
    FrameFeatures cur;
    try {
      cur = source(i);
    } catch (const IngestionError& err) {
      log.skipped = true;
      const std::string msg = "frame " + std::to_string(i) + " skipped: " + err.what();
      std::cerr << "warning: " << msg << "\n";
      events.push_back(msg);
      traj.poses.push_back(i == 0 ? Pose::identity() : step_pose(i, have_motion ? last_motion : Pose{}));
      logs.push_back(log);
      continue;
    }
    log.keypoints = static_cast<int>(cur.keypoints.size());
    if (cfg.filter_dynamic) cur.keypoints = filter_dynamic_keypoints(cur.keypoints, cur.detections);
    log.kept_keypoints = static_cast<int>(cur.keypoints.size());

    if (!prev) {
      // first usable frame anchors the chain
      traj.poses.push_back(i == 0 ? Pose::identity() : step_pose(i, have_motion ? last_motion : Pose{}));
    } else {
      const Pose gt_motion = ground_truth.poses[prev_index].inverse() * ground_truth.poses[i];
      const double scale = gt_motion.translation.norm();
      const std::size_t gap = i - prev_index;
      try {
        MatchSet matches;
        if (cur.keypoints.has_descriptors() && prev->keypoints.has_descriptors()) {
          matches = match_descriptors(prev->keypoints, cur.keypoints, cfg.ratio_test);
        }
        log.matches = static_cast<int>(matches.pairs.size());
        const RelativePose rel = relative_pose(matches, prev->keypoints, cur.keypoints, k, rng, cfg.pose);
        log.inliers = rel.inliers;
        log.inlier_ratio = log.matches > 0 ? static_cast<double>(rel.inliers) / log.matches : 0.0;
        log.translation_reliable = rel.translation_reliable;
        Eigen::Vector3d t_unit = rel.translation;
        if (!rel.translation_reliable) {
          // keep the previous heading; the rotation estimate is still good
          const Eigen::Vector3d prev_dir = -last_motion.rotation.transpose() * last_motion.translation;
          t_unit = (have_motion && prev_dir.norm() > 0) ? prev_dir.normalized() : Eigen::Vector3d::Zero();
          events.push_back("frame " + std::to_string(i) + ": rotation-only motion, translation unreliable");
        }
        const Pose motion = motion_from_relative(rel.rotation, t_unit, scale);
        Pose p = traj.poses[prev_index] * motion;
        p.rotation = orthonormalize(p.rotation);
        traj.poses.resize(i);
        traj.poses.push_back(p);
        if (gap == 1) {
          last_motion = motion;
          have_motion = true;
        }
      } catch (const DegenerateFrameError& err) {
        log.degenerate = true;
        events.push_back("frame " + std::to_string(i) + " degenerate (" + err.what() +
                         "), reusing previous motion");
        traj.poses.push_back(step_pose(i, have_motion ? last_motion : Pose{}));
      }
    }
    prev = std::move(cur);
    prev_index = i;
    log.time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    total_ms += log.time_ms;
    ++timed;
    logs.push_back(log);
  }

  VoReport report = score_trajectory(traj, ground_truth);
  report.frames = std::move(logs);
  report.events = std::move(events);
  report.mean_iteration_time = timed ? total_ms / static_cast<double>(timed) : 0.0;
  return {traj, report};
}

FrameSource model_frame_source(YoloPoint& model, std::vector<std::filesystem::path> frames,
                               const VoConfig& cfg, std::vector<std::string> class_names,
                               std::vector<bool> dynamic_flags) {
  return [&model, frames = std::move(frames), cfg, class_names = std::move(class_names),
          dynamic_flags = std::move(dynamic_flags)](std::size_t i) {
    if (i >= frames.size()) throw ContractError("frame index out of range");
    torch::Tensor native;
    try {
      native = load_image(frames[i]);
    } catch (const IngestionError&) {
      throw;
    } catch (const std::exception& err) {
      throw IngestionError(frames[i].string() + ": " + err.what());
    }
    const ImageShape nat{static_cast<int>(native.size(1)), static_cast<int>(native.size(2))};
    ImageShape in = cfg.input_shape;
    if (in.height <= 0 || in.width <= 0) in = {nat.height / 32 * 32, nat.width / 32 * 32};
    if (in.height <= 0 || in.width <= 0) throw IngestionError(frames[i].string() + ": image too small");
    const torch::Tensor img = resize_image(native, in);

    torch::NoGradGuard guard;
    model->eval();
    const RawModelOutput raw = forward(model, img.unsqueeze(0));
    const torch::Tensor heat = heatmap_from_logits(raw.detector_logits)[0];
    KeypointSet kps = extract_keypoints(heat, cfg.conf_threshold, cfg.nms_radius, cfg.max_points);
    kps = sample_descriptors(raw.coarse_descriptors[0], kps);
    std::vector<torch::Tensor> obj;
    for (const auto& t : raw.object_raw) obj.push_back(t[0]);
    DetectionSet dets = decode_boxes(obj, model->config().anchors, cfg.box_conf_threshold,
                                     cfg.box_iou_threshold, in);

    const double sx = static_cast<double>(nat.width) / in.width;
    const double sy = static_cast<double>(nat.height) / in.height;
    for (auto& p : kps.points) {
      p.x = (p.x + 0.5) * sx - 0.5;
      p.y = (p.y + 0.5) * sy - 0.5;
    }
    for (auto& b : dets.boxes) {
      b.x1 *= sx;
      b.x2 *= sx;
      b.y1 *= sy;
      b.y2 *= sy;
    }
    dets.class_names = class_names;
    dets.dynamic_flags = dynamic_flags;
    return FrameFeatures{std::move(kps), std::move(dets)};
  };
}

void write_box_file(const std::filesystem::path& path, const DetectionSet& detections) {
  std::ofstream f(path);
  if (!f) throw IngestionError("cannot write " + path.string());
  f << std::setprecision(9);
  for (const auto& b : detections.boxes) {
    f << b.x1 << ' ' << b.y1 << ' ' << b.x2 << ' ' << b.y2 << ' ' << b.class_id << ' ' << b.confidence
      << '\n';
  }
}

DetectionSet read_box_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IngestionError("cannot read " + path.string());
  DetectionSet out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Detection d;
    if (!(ss >> d.x1 >> d.y1 >> d.x2 >> d.y2 >> d.class_id >> d.confidence)) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": malformed box line");
    }
    out.boxes.push_back(d);
  }
  return out;
}

FrameSource file_frame_source(const std::filesystem::path& dir, std::vector<std::filesystem::path> frames,
                              std::vector<std::string> class_names, std::vector<bool> dynamic_flags) {
  return [dir, frames = std::move(frames), class_names = std::move(class_names),
          dynamic_flags = std::move(dynamic_flags)](std::size_t i) {
    if (i >= frames.size()) throw ContractError("frame index out of range");
    const std::string stem = frames[i].stem().string();
    const auto kp_path = dir / (stem + ".txt");
    if (!std::filesystem::exists(kp_path)) throw IngestionError("missing keypoint file " + kp_path.string());
    FrameFeatures out;
    out.keypoints = read_keypoint_file(kp_path);
    const auto box_path = dir / (stem + ".boxes.txt");
    if (std::filesystem::exists(box_path)) out.detections = read_box_file(box_path);
    out.detections.class_names = class_names;
    out.detections.dynamic_flags = dynamic_flags;
    return out;
  };
}

std::pair<Trajectory, VoReport> run_sequence(YoloPoint& model, const KittiSequence& sequence,
                                             const VoConfig& cfg, std::vector<std::string> class_names,
                                             std::vector<bool> dynamic_flags) {
  const FrameSource source =
      model_frame_source(model, sequence.frames, cfg, std::move(class_names), std::move(dynamic_flags));
  return run_sequence(source, sequence.frames.size(), sequence.intrinsics, sequence.ground_truth, cfg);
}

void write_vo_report(const std::filesystem::path& path, const VoReport& report) {
  nlohmann::ordered_json j;
  j["translation_rmse_m"] = report.translation_rmse;
  j["rotation_rmse_deg"] = report.rotation_rmse;
  j["scale_policy"] = report.scale_policy;
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const auto& f : report.frames) {
    frames.push_back({{"frame", f.frame},
                      {"keypoints", f.keypoints},
                      {"kept_keypoints", f.kept_keypoints},
                      {"matches", f.matches},
                      {"inliers", f.inliers},
                      {"inlier_ratio", f.inlier_ratio},
                      {"degenerate", f.degenerate},
                      {"skipped", f.skipped},
                      {"translation_reliable", f.translation_reliable}});
  }
  j["frames"] = frames;
  j["events"] = report.events;
  std::ofstream f(path);
  if (!f) throw IngestionError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

SyntheticSequence make_synthetic_sequence(const SyntheticSequenceConfig& cfg) {
  if (cfg.frames == 0) throw ValidationError("synthetic sequence needs at least one frame");
  cfg.intrinsics.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticSequence seq;
  seq.intrinsics = cfg.intrinsics;
  seq.class_names = kitti_class_names();
  seq.dynamic_flags = default_dynamic_flags(seq.class_names);

  // camera-to-world poses: yaw about the camera y axis, forward along z
  Pose cur;
  for (std::size_t i = 0; i < cfg.frames; ++i) {
    seq.ground_truth.poses.push_back(cur);
    Pose step;
    step.rotation = Eigen::AngleAxisd(cfg.yaw_rate, Eigen::Vector3d::UnitY()).toRotationMatrix();
    step.translation = Eigen::Vector3d(0, 0, cfg.speed);
    cur = cur * step;
  }

  const double depth_extent = cfg.speed * static_cast<double>(cfg.frames) + 80.0;
  std::vector<Eigen::Vector3d> statics(cfg.static_points);
  for (auto& p : statics) {
    const double z = 4.0 + u01(rng) * depth_extent;
    p = {(u01(rng) * 2 - 1) * (0.2 + 0.6 * z), -3.0 + 5.0 * u01(rng), z};
  }
  // object: box-shaped cloud in its own frame, translating with object_velocity
  const Eigen::Vector3d half_size(2.0, 0.8, 1.0);
  const Eigen::Vector3d object_start(-12.0, 0.6, 14.0);
  std::vector<Eigen::Vector3d> object(cfg.object_points);
  for (auto& p : object) {
    p = {(u01(rng) * 2 - 1) * half_size.x(), (u01(rng) * 2 - 1) * half_size.y(),
         (u01(rng) * 2 - 1) * half_size.z()};
  }
  const std::size_t total = statics.size() + object.size();
  std::vector<std::vector<float>> desc(total, std::vector<float>(cfg.descriptor_dim));
  for (auto& d : desc) {
    double norm = 0.0;
    for (auto& v : d) {
      v = static_cast<float>(gauss(rng));
      norm += static_cast<double>(v) * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : d) v = static_cast<float>(v / norm);
  }

  const Eigen::Matrix3d km = cfg.intrinsics.matrix();
  const int car_id = 0;
  for (std::size_t i = 0; i < cfg.frames; ++i) {
    const Pose w2c = seq.ground_truth.poses[i].inverse();
    FrameFeatures ff;
    auto project = [&](const Eigen::Vector3d& world, std::size_t id) {
      const Eigen::Vector3d c = w2c.rotation * world + w2c.translation;
      if (c.z() < 0.5) return false;
      const Eigen::Vector3d q = km * c;
      const Eigen::Vector2d pix(q.x() / q.z(), q.y() / q.z());
      if (pix.x() < 0 || pix.y() < 0 || pix.x() > cfg.image.width - 1 || pix.y() > cfg.image.height - 1) {
        return false;
      }
      ff.keypoints.points.push_back({pix.x(), pix.y(), 1.0});
      ff.keypoints.descriptors.push_back(desc[id]);
      return true;
    };
    for (std::size_t s = 0; s < statics.size(); ++s) project(statics[s], s);
    if (!object.empty()) {
      const Eigen::Vector3d center = object_start + cfg.object_velocity * static_cast<double>(i);
      for (std::size_t o = 0; o < object.size(); ++o) project(center + object[o], statics.size() + o);
      // oracle box from the projected corners, clipped to the image
      double x1 = 1e18, y1 = 1e18, x2 = -1e18, y2 = -1e18;
      bool any_front = false;
      for (int c = 0; c < 8; ++c) {
        const Eigen::Vector3d corner = center + Eigen::Vector3d((c & 1 ? 1 : -1) * half_size.x(),
                                                                (c & 2 ? 1 : -1) * half_size.y(),
                                                                (c & 4 ? 1 : -1) * half_size.z());
        const Eigen::Vector3d cc = w2c.rotation * corner + w2c.translation;
        if (cc.z() < 0.5) continue;
        const Eigen::Vector3d q = km * cc;
        x1 = std::min(x1, q.x() / q.z());
        x2 = std::max(x2, q.x() / q.z());
        y1 = std::min(y1, q.y() / q.z());
        y2 = std::max(y2, q.y() / q.z());
        any_front = true;
      }
      x1 = std::max(x1, 0.0);
      y1 = std::max(y1, 0.0);
      x2 = std::min(x2, cfg.image.width - 1.0);
      y2 = std::min(y2, cfg.image.height - 1.0);
      if (any_front && x2 > x1 && y2 > y1) ff.detections.boxes.push_back({x1, y1, x2, y2, car_id, 0.9});
    }
    ff.detections.class_names = seq.class_names;
    ff.detections.dynamic_flags = seq.dynamic_flags;
    seq.frames.push_back(std::move(ff));
  }
  return seq;
}

}  // namespace yolopoint

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "yolopoint/core_model.hpp"
#include "yolopoint/data_io.hpp"
#include "yolopoint/evalsuite.hpp"
#include "yolopoint/trajectory.hpp"
#include "yolopoint/types.hpp"

namespace yolopoint {

struct PoseConfig {
  double ransac_threshold_px = 1.0;
  double ransac_confidence = 0.999;
  // Rotation-only model wins when it explains at least this fraction of the
  // essential-matrix inliers; translation is then flagged unreliable.
  double rotation_only_ratio = 0.9;
  int rotation_only_iterations = 200;
};

// Motion of camera B relative to camera A: x_b = rotation * x_a + translation.
struct RelativePose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::UnitZ();  // unit norm
  std::vector<bool> inlier_mask;  // per match
  int inliers = 0;
  bool translation_reliable = true;
};

// Five-point essential matrix inside RANSAC, cheirality-checked
// decomposition. Throws DegenerateFrameError with fewer than 5 matches or
// without consensus.
RelativePose relative_pose(const MatchSet& matches, const KeypointSet& a, const KeypointSet& b,
                           const CameraIntrinsics& k, std::mt19937_64& rng, const PoseConfig& cfg = {});

struct FrameFeatures {
  KeypointSet keypoints;  // with descriptors, native image pixels
  DetectionSet detections;
};

// Produces features for frame i; throws IngestionError for unreadable frames.
using FrameSource = std::function<FrameFeatures(std::size_t frame_index)>;

struct VoConfig {
  bool filter_dynamic = true;
  double ratio_test = 0.0;  // 0 disables; 0.8 is the usual setting
  int max_points = 1000;
  int nms_radius = 8;
  double conf_threshold = 0.015;
  double box_conf_threshold = 0.25;
  double box_iou_threshold = 0.45;
  ImageShape input_shape{0, 0};  // model input; {0,0} rounds the native size down to /32
  std::uint64_t seed = 0;
  PoseConfig pose;
};

struct VoFrameLog {
  std::size_t frame = 0;
  int keypoints = 0;
  int kept_keypoints = 0;
  int matches = 0;
  int inliers = 0;
  double inlier_ratio = 0.0;
  bool degenerate = false;
  bool skipped = false;
  bool translation_reliable = true;
  double time_ms = 0.0;
};

struct VoReport {
  double translation_rmse = 0.0;  // meters
  double rotation_rmse = 0.0;     // degrees
  double mean_iteration_time = 0.0;  // ms per frame
  std::vector<VoFrameLog> frames;
  std::vector<std::string> events;
  std::string scale_policy = "ground-truth inter-frame translation norm";
};

// Translation RMSE over per-frame position errors; rotation RMSE over the
// geodesic angles between estimated and true frame-to-frame rotations.
VoReport score_trajectory(const Trajectory& estimate, const Trajectory& ground_truth);

std::pair<Trajectory, VoReport> run_sequence(const FrameSource& source, std::size_t frame_count,
                                             const CameraIntrinsics& k, const Trajectory& ground_truth,
                                             const VoConfig& cfg);

// Network-backed source: resize, forward, keypoints + descriptors + boxes,
// all mapped back to native pixels.
FrameSource model_frame_source(YoloPoint& model, std::vector<std::filesystem::path> frames,
                               const VoConfig& cfg, std::vector<std::string> class_names,
                               std::vector<bool> dynamic_flags);

// Features read from interchange files: <dir>/<frame stem>.txt with
// "x y confidence d0 ..." lines, and optional <dir>/<frame stem>.boxes.txt with
// "x1 y1 x2 y2 class_id confidence" lines.
FrameSource file_frame_source(const std::filesystem::path& dir, std::vector<std::filesystem::path> frames,
                              std::vector<std::string> class_names, std::vector<bool> dynamic_flags);
void write_box_file(const std::filesystem::path& path, const DetectionSet& detections);
DetectionSet read_box_file(const std::filesystem::path& path);

std::pair<Trajectory, VoReport> run_sequence(YoloPoint& model, const KittiSequence& sequence,
                                             const VoConfig& cfg, std::vector<std::string> class_names,
                                             std::vector<bool> dynamic_flags);

// JSON report without wall-clock fields, so reruns compare byte for byte.
void write_vo_report(const std::filesystem::path& path, const VoReport& report);

// Rendered test scene: a camera driving forward through a static point cloud
// while an object crosses in front of it. Keypoints are exact projections and
// every 3D point carries a fixed random descriptor, so matches are perfect.
struct SyntheticSequenceConfig {
  std::size_t frames = 50;
  ImageShape image{376, 1241};
  CameraIntrinsics intrinsics{718.856, 718.856, 607.1928, 185.2157};
  double speed = 1.0;          // m per frame along the optical axis
  double yaw_rate = 0.004;     // rad per frame
  int static_points = 1500;
  int object_points = 0;       // 0 disables the moving object
  Eigen::Vector3d object_velocity{0.6, 0.0, 1.0};  // m per frame, world frame
  int descriptor_dim = 64;
  std::uint64_t seed = 7;
};

struct SyntheticSequence {
  CameraIntrinsics intrinsics;
  Trajectory ground_truth;
  std::vector<FrameFeatures> frames;
  std::vector<std::string> class_names;
  std::vector<bool> dynamic_flags;
};

SyntheticSequence make_synthetic_sequence(const SyntheticSequenceConfig& cfg);

}  // namespace yolopoint

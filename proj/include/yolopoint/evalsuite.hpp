#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "yolopoint/geometry.hpp"
#include "yolopoint/types.hpp"

namespace yolopoint {

struct Match {
  int index_a = 0;
  int index_b = 0;
  double distance = 0.0;
};

struct MatchSet {
  std::vector<Match> pairs;
};

// Mutual nearest neighbours under Euclidean descriptor distance, ties toward
// the smaller index. ratio > 0 additionally applies Lowe's ratio test on the
// A side (d1 < ratio * d2). Throws ContractError if descriptors are missing or
// lengths differ.
MatchSet match_descriptors(const KeypointSet& a, const KeypointSet& b, double ratio = 0.0);

// Symmetric repeatability. Only points whose warp lands inside the other image
// are counted. Throws UndefinedMetricError when no point is counted.
double repeatability(const KeypointSet& a, const KeypointSet& b, const Homography& h, double eps,
                     ImageShape shape_a, ImageShape shape_b);
inline double repeatability(const KeypointSet& a, const KeypointSet& b, const Homography& h,
                            double eps, ImageShape shape) {
  return repeatability(a, b, h, eps, shape, shape);
}

struct HomographyEstimate {
  bool estimated = false;  // false: fewer than 4 matches or degenerate fit
  std::vector<bool> correct;  // one flag per eps
  double mean_corner_error = 0.0;
  int matches = 0;
  int inliers = 0;
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
};

// Robust fit from mutual-NN matches, scored by the mean distance of the four
// warped image corners against the true homography.
HomographyEstimate homography_estimation(const KeypointSet& a, const KeypointSet& b,
                                         const Homography& true_h, ImageShape image_shape,
                                         const std::vector<double>& eps_list);

// Area under the precision/recall curve (trapezoidal, starting at recall 0 with
// precision 1) of nearest-neighbour matches ranked by descriptor distance.
// Zero when no match is geometrically correct.
double nn_map(const KeypointSet& a, const KeypointSet& b, const Homography& h, double eps);

// Correct mutual-NN matches over keypoints in the shared region, averaged over
// both directions.
double matching_score(const KeypointSet& a, const KeypointSet& b, const Homography& h, double eps,
                      ImageShape shape_a, ImageShape shape_b);
inline double matching_score(const KeypointSet& a, const KeypointSet& b, const Homography& h,
                             double eps, ImageShape shape) {
  return matching_score(a, b, h, eps, shape, shape);
}

struct EvalConfig {
  ImageShape resolution{256, 320};
  int max_points = 300;
  int nms_radius = 8;
  double conf_threshold = 0.015;
  double correct_dist_eps = 3.0;
  std::vector<double> homography_eps_list = {1.0, 3.0, 5.0};

  void validate() const;
};

struct MetricRow {
  std::string scene;
  std::string metric;
  double value = 0.0;
};

struct HPatchesPair {
  std::filesystem::path image_a;
  std::filesystem::path image_b;
  Homography h;  // maps image_a pixels to image_b pixels at native resolution
};

struct HPatchesScene {
  std::string name;
  std::vector<HPatchesPair> pairs;
};

// Reads a scene directory: 1.ppm ... 6.ppm (any extension OpenCV reads) plus
// H_1_2 ... H_1_6. Throws IngestionError on missing files.
HPatchesScene load_hpatches_scene(const std::filesystem::path& scene_dir);
std::vector<HPatchesScene> load_hpatches(const std::filesystem::path& root);

// Keypoints with descriptors for an RGB image already resized to the
// evaluation resolution (3 x H x W, values in [0,1]).
using KeypointDetector = std::function<KeypointSet(const torch::Tensor& image)>;

// Evaluates every pair of every scene at cfg.resolution. One row per scene and
// metric (scene mean over its pairs), in scene order.
std::vector<MetricRow> evaluate_hpatches(const std::vector<HPatchesScene>& scenes,
                                         const KeypointDetector& detect, const EvalConfig& cfg);

// "scene,metric,value" rows, fixed precision.
void write_metric_rows(const std::filesystem::path& path, const std::vector<MetricRow>& rows,
                       const std::vector<std::string>& header_comments = {});
std::vector<MetricRow> read_metric_rows(const std::filesystem::path& path);
// Per-metric means for illumination (i_), viewpoint (v_) and all scenes.
std::string summary_table(const std::vector<MetricRow>& rows);

}  // namespace yolopoint

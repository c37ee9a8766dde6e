#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "yolopoint/evalsuite.hpp"
#include "yolopoint/trajectory.hpp"
#include "yolopoint/types.hpp"

namespace yolopoint {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Line chart with auto-scaled axes and a legend. Series colors follow a
// fixed palette in order.
cv::Mat line_plot(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                  const std::string& y_label, cv::Size size = {800, 500}, bool equal_aspect = false);

cv::Mat histogram_plot(const std::vector<double>& values, int bins, const std::string& title,
                       cv::Size size = {800, 500});

// Top-down (x, z) view of camera positions.
cv::Mat trajectory_plot(const std::vector<std::pair<std::string, Trajectory>>& trajectories,
                        const std::string& title);

// Per-frame position error against ground truth, one series per estimate.
cv::Mat error_over_time_plot(const std::vector<std::pair<std::string, Trajectory>>& estimates,
                             const Trajectory& ground_truth);

// Side-by-side images with keypoints and match lines (green: correct under
// `h` within eps, red: wrong). Without `h` every line is drawn green.
cv::Mat match_plot(const torch::Tensor& image_a, const torch::Tensor& image_b, const KeypointSet& a,
                   const KeypointSet& b, const MatchSet& matches, const Homography* h = nullptr,
                   double eps = 3.0);

// Keypoints (green: kept, red: inside a dynamic box) and boxes drawn on the image.
cv::Mat detection_plot(const torch::Tensor& image, const KeypointSet& keypoints, const DetectionSet& detections);

void save_plot(const std::filesystem::path& path, const cv::Mat& plot);

}  // namespace yolopoint

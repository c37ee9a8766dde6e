#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "yolopoint/core_model.hpp"
#include "yolopoint/types.hpp"

namespace yolopoint {

// Greedy suppression over pixels strictly above conf_threshold, visited by
// descending confidence with ties broken by (y, x). A pixel is dropped when a
// kept point lies within nms_radius in Chebyshev distance. Stops at max_points.
KeypointSet extract_keypoints(const torch::Tensor& heatmap, double conf_threshold, int nms_radius,
                              int max_points);

// Bilinear lookup of the D x Hc x Wc grid at each keypoint, followed by
// re-normalization. Pixel x maps to grid column (x + 0.5) / 8 - 0.5, so a cell
// center reproduces that cell's vector exactly.
KeypointSet sample_descriptors(const torch::Tensor& coarse_descriptors, const KeypointSet& keypoints);

// Decodes YOLO-style raw outputs for one image (object_raw[s] is A x h x w x (5+C),
// or 1 x A x ... ). Confidence = objectness * best class score; class-wise greedy NMS.
DetectionSet decode_boxes(const std::vector<torch::Tensor>& object_raw,
                          const std::array<std::vector<Anchor>, kNumDetectionScales>& anchors,
                          double conf_threshold, double iou_threshold,
                          ImageShape image_shape = {0, 0});

double box_iou(const Detection& a, const Detection& b);

// Drops keypoints inside (edges inclusive) any box whose class is dynamic.
KeypointSet filter_dynamic_keypoints(const KeypointSet& keypoints, const DetectionSet& detections);

// Default movable classes for KITTI object labels.
std::vector<std::string> kitti_class_names();
std::vector<bool> default_dynamic_flags(const std::vector<std::string>& class_names);

// Keypoint interchange: one line per point, "x y confidence d0 ... d{D-1}".
void write_keypoint_file(const std::filesystem::path& path, const KeypointSet& keypoints);
KeypointSet read_keypoint_file(const std::filesystem::path& path);

}  // namespace yolopoint

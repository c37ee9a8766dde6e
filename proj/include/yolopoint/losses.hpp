#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "yolopoint/core_model.hpp"
#include "yolopoint/geometry.hpp"
#include "yolopoint/types.hpp"

namespace yolopoint {

inline constexpr double kDetectorClip = 1e-7;

// Mean binary cross-entropy over pixels. Predictions are clipped to
// [1e-7, 1 - 1e-7]. With a valid mask (bool, same shape) the mean runs over
// valid pixels only.
torch::Tensor detector_loss(const torch::Tensor& predicted_heatmap, const torch::Tensor& target,
                            const torch::Tensor& valid_mask = {});

struct DescriptorLossConfig {
  double positive_margin = 1.0;
  int n_correspondences = 600;
  int n_non_correspondences = 600;
  std::uint64_t sampling_seed = 0;

  void validate() const;
};

struct DescriptorLossTerms {
  torch::Tensor correspondence;      // (1/N) sum max(0, m_p - d.d')
  torch::Tensor non_correspondence;  // (1/M) sum d.d' over non-matching pairs
  torch::Tensor total;
  std::int64_t n_pairs = 0;
  std::int64_t m_pairs = 0;
};

// Sparse hinge loss over sampled cell correspondences. `coarse` and `warped`
// are B x D x Hc x Wc grids; homographies[k] maps image k to warped image k.
// When N (or M) is at least the number of available pairs, every pair is used.
// Throws DegenerateGeometryError if no cell lands inside the warped grid.
DescriptorLossTerms descriptor_loss(const torch::Tensor& coarse, const torch::Tensor& warped,
                                    const std::vector<Homography>& homographies,
                                    const DescriptorLossConfig& cfg);

struct ObjectLossConfig {
  double box_gain = 0.05;
  double obj_gain = 1.0;
  double cls_gain = 0.5;
  std::array<double, kNumDetectionScales> balance = {4.0, 1.0, 0.4};
  double anchor_threshold = 4.0;  // max width/height ratio for anchor matching
  // Objectness target at matched cells: (1 - r) + r * IoU (IoU without gradient).
  double iou_ratio = 1.0;
};

struct ObjectLossTerms {
  torch::Tensor box;
  torch::Tensor objectness;
  torch::Tensor classification;
  torch::Tensor total;  // box_gain * box + obj_gain * objectness + cls_gain * classification
  std::int64_t matches = 0;
};

// Ground truth: per-image lists of normalized boxes. image_shape is the
// network input size; object_raw as produced by YoloPoint::forward.
ObjectLossTerms object_loss(const std::vector<torch::Tensor>& object_raw,
                            const std::vector<std::vector<BoxLabel>>& ground_truth,
                            const ModelConfig& model_cfg, ImageShape image_shape,
                            const ObjectLossConfig& cfg = {});

// Complete IoU between boxes given as (cx, cy, w, h) along the last axis.
torch::Tensor complete_iou(const torch::Tensor& a, const torch::Tensor& b);

struct LossWeights {
  double w_desc = 1.0;
  double w_obj = 1.0;

  void validate() const;
};

// det + det_warp + w_desc * desc + w_obj * obj
torch::Tensor total_loss(const torch::Tensor& det, const torch::Tensor& det_warp,
                         const torch::Tensor& desc, const torch::Tensor& obj,
                         const LossWeights& weights);
double total_loss(double det, double det_warp, double desc, double obj, const LossWeights& weights);

}  // namespace yolopoint

#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "yolopoint/core_model.hpp"
#include "yolopoint/geometry.hpp"
#include "yolopoint/types.hpp"

namespace yolopoint {

enum class ShapeKind { Polygon, LineSegments, Star, Checkerboard, Stripes, Cube, Ellipse, GaussianNoise };

inline constexpr std::array<ShapeKind, 8> kAllShapeKinds = {
    ShapeKind::Polygon, ShapeKind::LineSegments, ShapeKind::Star,    ShapeKind::Checkerboard,
    ShapeKind::Stripes, ShapeKind::Cube,         ShapeKind::Ellipse, ShapeKind::GaussianNoise};

std::string to_string(ShapeKind kind);
ShapeKind parse_shape_kind(const std::string& s);

struct SyntheticConfig {
  ImageShape shape{64, 64};
  bool photometric_noise = true;
  double max_blur_sigma = 1.0;
  double max_noise_std = 0.03;
  double max_brightness = 0.1;
  // Checkerboard cell counts; <= 0 draws them at random (2..4).
  int checkerboard_rows = 0;
  int checkerboard_cols = 0;
};

struct SyntheticSample {
  torch::Tensor image;  // 3 x H x W, gray replicated
  KeypointSet points;
  ShapeKind kind = ShapeKind::Polygon;
  // Vertex lists handed to the rasterizer, one per drawn primitive.
  std::vector<std::vector<Eigen::Vector2i>> primitives;
};

// Geometry comes from `rng`; photometric noise uses a separate stream seeded
// from the first draw, so labels do not depend on the noise settings.
SyntheticSample generate_synthetic(ShapeKind kind, std::mt19937_64& rng, const SyntheticConfig& cfg = {});
// Draws the kind from a fixed mixture.
SyntheticSample generate_synthetic(std::mt19937_64& rng, const SyntheticConfig& cfg = {});

struct AdaptationConfig {
  int num_homographies = 100;
  double detection_threshold = 0.015;
  bool include_identity = true;
  int nms_radius = 4;
  // Responses within this many pixels of the warp's out-of-image fill are
  // dropped before warping back.
  int border_margin = 3;

  void validate() const;
};

struct AggregatedHeatmap {
  torch::Tensor sum;    // H x W, float64
  torch::Tensor count;  // H x W, summed per-warp validity weights
  torch::Tensor mean;   // sum / count, 0 where count == 0
  std::vector<Homography> homographies;  // in accumulation order
};

// Warp, detect and unwarp over the identity (optional) plus num_homographies
// sampled warps drawn from one generator seeded with sampling.seed. Each
// warp's heatmap is masked by its eroded valid region before unwarping.
AggregatedHeatmap aggregate_heatmaps(YoloPoint& model, const torch::Tensor& image,
                                     const AdaptationConfig& cfg,
                                     const HomographySamplingConfig& sampling);

struct PseudoLabels {
  torch::Tensor target;  // H x W binary (float32)
  KeypointSet points;
};

// Thresholds the aggregated heatmap and applies grid NMS.
PseudoLabels labels_from_heatmap(const torch::Tensor& heatmap, double threshold, int nms_radius);

PseudoLabels homographic_adaptation(YoloPoint& model, const torch::Tensor& image,
                                    const AdaptationConfig& cfg,
                                    const HomographySamplingConfig& sampling);

// Single forward pass heatmap (H x W, float64) for one 3 x H x W image.
torch::Tensor infer_heatmap(YoloPoint& model, const torch::Tensor& image);

}  // namespace yolopoint

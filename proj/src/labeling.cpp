#include "yolopoint/labeling.hpp"

#include <cmath>

#include "yolopoint/errors.hpp"
#include "yolopoint/postprocess.hpp"

namespace yolopoint {

void AdaptationConfig::validate() const {
  if (num_homographies < 1) throw ValidationError("num_homographies must be >= 1");
  if (!(detection_threshold > 0 && detection_threshold < 1)) {
    throw ValidationError("detection_threshold must lie in (0, 1)");
  }
  if (nms_radius < 0) throw ValidationError("nms_radius must be >= 0");
  if (border_margin < 0) throw ValidationError("border_margin must be >= 0");
}

namespace {

torch::Tensor erode_mask(const torch::Tensor& valid, int margin) {
  auto m = valid.to(torch::kDouble);
  if (margin == 0) return m;
  // min-pool; the padding counts as valid so the image border is kept
  namespace F = torch::nn::functional;
  const auto opts = F::MaxPool2dFuncOptions(2 * margin + 1).stride(1).padding(margin);
  return -F::max_pool2d(-m.unsqueeze(0).unsqueeze(0), opts).squeeze(0).squeeze(0);
}

}  // namespace

torch::Tensor infer_heatmap(YoloPoint& model, const torch::Tensor& image) {
  torch::NoGradGuard no_grad;
  const auto out = forward(model, image);
  return heatmap_from_logits(out.detector_logits).squeeze(0).to(torch::kDouble);
}

AggregatedHeatmap aggregate_heatmaps(YoloPoint& model, const torch::Tensor& image,
                                     const AdaptationConfig& cfg,
                                     const HomographySamplingConfig& sampling) {
  cfg.validate();
  if (image.dim() != 3) throw ShapeError("homographic adaptation expects a 3 x H x W image");
  const ImageShape shape{static_cast<int>(image.size(1)), static_cast<int>(image.size(2))};
  if (shape.height % 32 != 0 || shape.width % 32 != 0) {
    throw ShapeError("image " + std::to_string(shape.height) + " x " + std::to_string(shape.width) +
                     " does not fit the model (sides must be divisible by 32)");
  }

  AggregatedHeatmap agg;
  agg.sum = torch::zeros({shape.height, shape.width}, torch::kDouble);
  agg.count = torch::zeros({shape.height, shape.width}, torch::kDouble);
  std::mt19937_64 rng(sampling.seed);
  if (cfg.include_identity) agg.homographies.push_back(Homography::identity());
  for (int i = 0; i < cfg.num_homographies; ++i) {
    agg.homographies.push_back(sample_homography(sampling, shape, rng));
  }

  for (const auto& h : agg.homographies) {
    const auto warped = warp_image(image, h, shape);
    const auto heat = infer_heatmap(model, warped.image);
    const auto keep = erode_mask(warped.valid, cfg.border_margin);
    const auto back = warp_image(heat * keep, h.inverse(), shape);
    const auto weight = warp_image(keep, h.inverse(), shape).image * back.valid.to(torch::kDouble);
    agg.sum += back.image * back.valid.to(torch::kDouble);
    agg.count += weight;
  }
  agg.mean = torch::where(agg.count > 0, agg.sum / agg.count.clamp_min(1.0), torch::zeros_like(agg.sum));
  return agg;
}

PseudoLabels labels_from_heatmap(const torch::Tensor& heatmap, double threshold, int nms_radius) {
  PseudoLabels out;
  const int h = static_cast<int>(heatmap.size(0)), w = static_cast<int>(heatmap.size(1));
  out.points = extract_keypoints(heatmap, threshold, nms_radius, h * w);
  out.target = torch::zeros({h, w}, torch::kFloat32);
  auto acc = out.target.accessor<float, 2>();
  for (const auto& p : out.points.points) acc[static_cast<int>(p.y)][static_cast<int>(p.x)] = 1.0f;
  return out;
}

PseudoLabels homographic_adaptation(YoloPoint& model, const torch::Tensor& image,
                                    const AdaptationConfig& cfg,
                                    const HomographySamplingConfig& sampling) {
  const auto agg = aggregate_heatmaps(model, image, cfg, sampling);
  return labels_from_heatmap(agg.mean, cfg.detection_threshold, cfg.nms_radius);
}

}  // namespace yolopoint

#include "yolopoint/losses.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

#include "yolopoint/errors.hpp"

namespace yolopoint {

namespace F = torch::nn::functional;

torch::Tensor detector_loss(const torch::Tensor& predicted_heatmap, const torch::Tensor& target,
                            const torch::Tensor& valid_mask) {
  if (predicted_heatmap.sizes() != target.sizes()) {
    throw ShapeError("detector_loss: prediction shape " + c10::str(predicted_heatmap.sizes()) +
                     " does not match target shape " + c10::str(target.sizes()));
  }
  auto x = predicted_heatmap.clamp(kDetectorClip, 1.0 - kDetectorClip);
  auto y = target.to(x.scalar_type());
  auto bce = -(y * torch::log(x) + (1 - y) * torch::log(1 - x));
  if (!valid_mask.defined()) return bce.mean();
  if (valid_mask.sizes() != target.sizes()) {
    throw ShapeError("detector_loss: mask shape does not match target shape");
  }
  auto m = valid_mask.to(x.scalar_type());
  return (bce * m).sum() / m.sum().clamp_min(1.0);
}

void DescriptorLossConfig::validate() const {
  if (!(positive_margin > 0) || !std::isfinite(positive_margin)) {
    throw ValidationError("positive margin m_p must be > 0");
  }
  if (n_correspondences < 1 || n_non_correspondences < 1) {
    throw ValidationError("descriptor loss sample counts N and M must be >= 1");
  }
}

namespace {

struct Correspondence {
  std::int64_t source;  // flat row into the B*Hc*Wc descriptor table
  std::int64_t target;
};

}  // namespace

DescriptorLossTerms descriptor_loss(const torch::Tensor& coarse, const torch::Tensor& warped,
                                    const std::vector<Homography>& homographies,
                                    const DescriptorLossConfig& cfg) {
  cfg.validate();
  if (coarse.dim() != 4 || coarse.sizes() != warped.sizes()) {
    throw ShapeError("descriptor_loss expects two B x D x Hc x Wc grids of equal shape");
  }
  const auto batch = coarse.size(0), dim = coarse.size(1), rows = coarse.size(2),
             cols = coarse.size(3);
  if (static_cast<std::int64_t>(homographies.size()) != batch) {
    throw ShapeError("descriptor_loss needs one homography per batch element");
  }

  std::vector<Correspondence> all;
  for (std::int64_t k = 0; k < batch; ++k) {
    const auto base = k * rows * cols;
    for (const auto& c : cell_correspondences(homographies[k], static_cast<int>(rows),
                                              static_cast<int>(cols), kCellSize)) {
      all.push_back({base + c.source.row * cols + c.source.col,
                     base + c.target.row * cols + c.target.col});
    }
  }
  if (all.empty()) {
    throw DegenerateGeometryError("descriptor_loss: no cell maps inside the warped image");
  }

  std::mt19937_64 rng(cfg.sampling_seed);
  std::vector<Correspondence> sampled;
  if (static_cast<std::size_t>(cfg.n_correspondences) >= all.size()) {
    sampled = all;
  } else {
    // partial Fisher-Yates, without replacement
    std::vector<Correspondence> pool = all;
    for (int i = 0; i < cfg.n_correspondences; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    sampled.assign(pool.begin(), pool.begin() + cfg.n_correspondences);
  }

  // D~' : distinct warped cells hit by the sampled correspondences
  std::vector<std::int64_t> targets;
  std::unordered_map<std::int64_t, std::size_t> target_slot;
  for (const auto& c : sampled) {
    if (target_slot.emplace(c.target, targets.size()).second) targets.push_back(c.target);
  }

  std::vector<std::int64_t> neg_anchor, neg_target;
  const auto per_anchor = static_cast<std::int64_t>(targets.size()) - 1;
  const auto total_pairs = static_cast<std::int64_t>(sampled.size()) * per_anchor;
  if (total_pairs > 0) {
    if (cfg.n_non_correspondences >= total_pairs) {
      for (const auto& c : sampled) {
        for (auto t : targets) {
          if (t == c.target) continue;
          neg_anchor.push_back(c.source);
          neg_target.push_back(t);
        }
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick_anchor(0, sampled.size() - 1);
      std::uniform_int_distribution<std::int64_t> pick_target(0, per_anchor - 1);
      for (int i = 0; i < cfg.n_non_correspondences; ++i) {
        const auto& c = sampled[pick_anchor(rng)];
        auto slot = pick_target(rng);
        if (slot >= static_cast<std::int64_t>(target_slot.at(c.target))) ++slot;
        neg_anchor.push_back(c.source);
        neg_target.push_back(targets[slot]);
      }
    }
  }

  auto table = coarse.permute({0, 2, 3, 1}).reshape({-1, dim});
  auto table_w = warped.permute({0, 2, 3, 1}).reshape({-1, dim});
  auto index = [](const std::vector<std::int64_t>& v) {
    return torch::from_blob(const_cast<std::int64_t*>(v.data()),
                            {static_cast<std::int64_t>(v.size())}, torch::kLong)
        .clone();
  };

  std::vector<std::int64_t> src, dst;
  for (const auto& c : sampled) {
    src.push_back(c.source);
    dst.push_back(c.target);
  }
  auto pos_dot = (table.index_select(0, index(src)) * table_w.index_select(0, index(dst))).sum(1);

  DescriptorLossTerms out;
  out.n_pairs = static_cast<std::int64_t>(sampled.size());
  out.correspondence = torch::relu(cfg.positive_margin - pos_dot).mean();
  if (neg_anchor.empty()) {
    out.non_correspondence = torch::zeros({}, coarse.options());
  } else {
    auto neg_dot =
        (table.index_select(0, index(neg_anchor)) * table_w.index_select(0, index(neg_target))).sum(1);
    out.non_correspondence = neg_dot.mean();
  }
  out.m_pairs = static_cast<std::int64_t>(neg_anchor.size());
  out.total = out.correspondence + out.non_correspondence;
  return out;
}

torch::Tensor complete_iou(const torch::Tensor& a, const torch::Tensor& b) {
  constexpr double eps = 1e-7;
  auto ax = a.select(-1, 0), ay = a.select(-1, 1), aw = a.select(-1, 2), ah = a.select(-1, 3);
  auto bx = b.select(-1, 0), by = b.select(-1, 1), bw = b.select(-1, 2), bh = b.select(-1, 3);
  auto a_x1 = ax - aw / 2, a_x2 = ax + aw / 2, a_y1 = ay - ah / 2, a_y2 = ay + ah / 2;
  auto b_x1 = bx - bw / 2, b_x2 = bx + bw / 2, b_y1 = by - bh / 2, b_y2 = by + bh / 2;

  auto inter = (torch::min(a_x2, b_x2) - torch::max(a_x1, b_x1)).clamp_min(0) *
               (torch::min(a_y2, b_y2) - torch::max(a_y1, b_y1)).clamp_min(0);
  auto uni = aw * ah + bw * bh - inter + eps;
  auto iou = inter / uni;

  auto cw = torch::max(a_x2, b_x2) - torch::min(a_x1, b_x1);
  auto ch = torch::max(a_y2, b_y2) - torch::min(a_y1, b_y1);
  auto c2 = cw * cw + ch * ch + eps;
  auto rho2 = ((bx - ax) * (bx - ax) + (by - ay) * (by - ay));
  const double k = 4.0 / (std::numbers::pi * std::numbers::pi);
  auto v = k * torch::pow(torch::atan(bw / (bh + eps)) - torch::atan(aw / (ah + eps)), 2);
  auto alpha = v / (v - iou + (1 + eps));
  return iou - (rho2 / c2 + v * alpha);
}

ObjectLossTerms object_loss(const std::vector<torch::Tensor>& object_raw,
                            const std::vector<std::vector<BoxLabel>>& ground_truth,
                            const ModelConfig& model_cfg, ImageShape image_shape,
                            const ObjectLossConfig& cfg) {
  if (object_raw.size() != static_cast<std::size_t>(kNumDetectionScales)) {
    throw ShapeError("object_loss expects one raw tensor per detection scale");
  }
  const auto batch = object_raw[0].size(0);
  if (static_cast<std::int64_t>(ground_truth.size()) != batch) {
    throw ShapeError("object_loss needs one ground-truth list per image");
  }
  constexpr double tol = 1e-6;
  for (const auto& boxes : ground_truth) {
    for (const auto& g : boxes) {
      const bool ok = g.w > 0 && g.h > 0 && g.cx - g.w / 2 >= -tol && g.cx + g.w / 2 <= 1 + tol &&
                      g.cy - g.h / 2 >= -tol && g.cy + g.h / 2 <= 1 + tol;
      if (!ok) throw ValidationError("ground-truth box outside normalized [0,1] image bounds");
      if (g.class_id < 0 || g.class_id >= model_cfg.num_classes) {
        throw ValidationError("ground-truth class id " + std::to_string(g.class_id) +
                              " out of range");
      }
    }
  }

  const auto opts = object_raw[0].options();
  auto lbox = torch::zeros({}, opts);
  auto lobj = torch::zeros({}, opts);
  auto lcls = torch::zeros({}, opts);
  std::int64_t matches = 0;

  for (int s = 0; s < kNumDetectionScales; ++s) {
    const auto& raw = object_raw[s];
    const auto na = raw.size(1), gh = raw.size(2), gw = raw.size(3), no = raw.size(4);
    if (no != 5 + model_cfg.num_classes || na != model_cfg.anchors_per_scale()) {
      throw ShapeError("object_raw layout does not match the model config");
    }
    const double stride = kDetectionStrides[s];

    std::vector<std::int64_t> b_idx, a_idx, y_idx, x_idx, cls;
    std::vector<double> tbox;  // cx, cy (cell offsets), w, h (cells)
    std::vector<double> anchor_wh;
    for (std::int64_t b = 0; b < batch; ++b) {
      for (const auto& g : ground_truth[b]) {
        const double cx = g.cx * image_shape.width / stride;
        const double cy = g.cy * image_shape.height / stride;
        const double w = g.w * image_shape.width / stride;
        const double h = g.h * image_shape.height / stride;
        const auto gi = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(cx)), 0, gw - 1);
        const auto gj = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(cy)), 0, gh - 1);
        for (std::int64_t a = 0; a < na; ++a) {
          const double aw = model_cfg.anchors[s][a].w / stride;
          const double ah = model_cfg.anchors[s][a].h / stride;
          const double rw = w / aw, rh = h / ah;
          const double worst = std::max({rw, 1 / rw, rh, 1 / rh});
          if (worst >= cfg.anchor_threshold) continue;
          b_idx.push_back(b);
          a_idx.push_back(a);
          y_idx.push_back(gj);
          x_idx.push_back(gi);
          cls.push_back(g.class_id);
          tbox.insert(tbox.end(), {cx - gi, cy - gj, w, h});
          anchor_wh.insert(anchor_wh.end(), {aw, ah});
        }
      }
    }

    auto tobj = torch::zeros({batch, na, gh, gw}, opts);
    const auto n = static_cast<std::int64_t>(b_idx.size());
    if (n > 0) {
      auto as_long = [](std::vector<std::int64_t>& v) {
        return torch::from_blob(v.data(), {static_cast<std::int64_t>(v.size())}, torch::kLong).clone();
      };
      auto bi = as_long(b_idx), ai = as_long(a_idx), yi = as_long(y_idx), xi = as_long(x_idx);
      auto ps = raw.index({bi, ai, yi, xi});  // n x no
      auto t = torch::from_blob(tbox.data(), {n, 4}, torch::kDouble).to(opts.dtype()).clone();
      auto anc = torch::from_blob(anchor_wh.data(), {n, 2}, torch::kDouble).to(opts.dtype()).clone();

      auto pxy = torch::sigmoid(ps.slice(1, 0, 2)) * 2 - 0.5;
      auto pwh = torch::pow(torch::sigmoid(ps.slice(1, 2, 4)) * 2, 2) * anc;
      auto ciou = complete_iou(torch::cat({pxy, pwh}, 1), t);
      lbox = lbox + (1.0 - ciou).mean();

      auto score = ciou.detach().clamp_min(0).to(opts.dtype());
      tobj.index_put_({bi, ai, yi, xi}, (1.0 - cfg.iou_ratio) + cfg.iou_ratio * score);

      auto tcls = torch::zeros({n, model_cfg.num_classes}, opts);
      tcls.index_put_({torch::arange(n), as_long(cls)}, 1.0);
      lcls = lcls + F::binary_cross_entropy_with_logits(ps.slice(1, 5), tcls);
      matches += n;
    }
    lobj = lobj + cfg.balance[s] * F::binary_cross_entropy_with_logits(raw.select(-1, 4), tobj);
  }

  ObjectLossTerms out;
  out.box = lbox;
  out.objectness = lobj;
  out.classification = lcls;
  out.total = cfg.box_gain * lbox + cfg.obj_gain * lobj + cfg.cls_gain * lcls;
  out.matches = matches;
  return out;
}

void LossWeights::validate() const {
  if (!std::isfinite(w_desc) || !std::isfinite(w_obj) || w_desc < 0 || w_obj < 0) {
    throw ValidationError("loss weights must be finite and non-negative");
  }
}

torch::Tensor total_loss(const torch::Tensor& det, const torch::Tensor& det_warp,
                         const torch::Tensor& desc, const torch::Tensor& obj,
                         const LossWeights& weights) {
  weights.validate();
  for (const auto* t : {&det, &det_warp, &desc, &obj}) {
    if (!torch::isfinite(*t).all().item<bool>()) {
      throw ValidationError("total_loss: non-finite loss component");
    }
  }
  return det + det_warp + weights.w_desc * desc + weights.w_obj * obj;
}

double total_loss(double det, double det_warp, double desc, double obj, const LossWeights& weights) {
  weights.validate();
  for (double v : {det, det_warp, desc, obj}) {
    if (!std::isfinite(v)) throw ValidationError("total_loss: non-finite loss component");
  }
  return det + det_warp + weights.w_desc * desc + weights.w_obj * obj;
}

}  // namespace yolopoint

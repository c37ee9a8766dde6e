#include "yolopoint/config.hpp"

#include <fstream>
#include <sstream>

#include "yolopoint/errors.hpp"

namespace yolopoint {

namespace {

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) {
    // integers stay integers
    return !(a.is_number_integer() && b.is_number_float());
  }
  return a.type() == b.type();
}

void merge_into(Json& base, const Json& user, const std::string& prefix) {
  if (!user.is_object()) throw UsageError("config " + (prefix.empty() ? "root" : prefix) + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw UsageError("unknown config key '" + key + "'");
    Json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_into(slot, it.value(), key);
    } else {
      if (!same_kind(slot, it.value())) {
        throw UsageError("config key '" + key + "' expects " + std::string(slot.type_name()) + ", got " +
                         it.value().dump());
      }
      slot = it.value();
    }
  }
}

void collect_keys(const Json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) {
      collect_keys(it.value(), key, out);
    } else {
      out.emplace_back(key, it.value().dump());
    }
  }
}

}  // namespace

Json resolve_config(const Json& defaults, const std::optional<std::filesystem::path>& file,
                    const std::vector<std::string>& overrides) {
  Json merged = defaults;
  if (file) {
    Json user;
    try {
      user = read_json(*file);
    } catch (const IngestionError& e) {
      throw UsageError(e.what());
    }
    merge_into(merged, user, "");
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + ov + "' is not key=value");
    const std::string key = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);
    // build the nested object for this key and merge it like a file
    Json value = Json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    Json* cursor = &merged;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!cursor->is_object() || !cursor->contains(parts[i])) throw UsageError("unknown config key '" + key + "'");
      cursor = &(*cursor)[parts[i]];
    }
    if (!cursor->is_object() || !cursor->contains(parts.back())) {
      throw UsageError("unknown config key '" + key + "'");
    }
    Json& slot = (*cursor)[parts.back()];
    if (slot.is_string() && !value.is_string()) value = raw;
    if (slot.is_object() || !same_kind(slot, value)) {
      throw UsageError("config key '" + key + "' expects " + std::string(slot.type_name()) + ", got " + raw);
    }
    slot = value;
  }
  return merged;
}

std::vector<std::pair<std::string, std::string>> config_keys(const Json& defaults) {
  std::vector<std::pair<std::string, std::string>> out;
  collect_keys(defaults, "", out);
  return out;
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream f(path);
  if (!f) throw IngestionError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IngestionError("cannot read " + path.string());
  Json j = Json::parse(f, nullptr, false, true);
  if (j.is_discarded()) throw IngestionError(path.string() + ": not valid JSON");
  return j;
}

Json to_json(const HomographySamplingConfig& c) {
  return {{"max_translation", c.max_translation}, {"max_rotation", c.max_rotation},
          {"scale_min", c.scale_min},             {"scale_max", c.scale_max},
          {"max_perspective", c.max_perspective}, {"seed", c.seed}};
}

HomographySamplingConfig homography_config_from_json(const Json& j) {
  HomographySamplingConfig c;
  c.max_translation = j.at("max_translation").get<double>();
  c.max_rotation = j.at("max_rotation").get<double>();
  c.scale_min = j.at("scale_min").get<double>();
  c.scale_max = j.at("scale_max").get<double>();
  c.max_perspective = j.at("max_perspective").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

Json to_json(const SyntheticConfig& c) {
  return {{"height", c.shape.height},
          {"width", c.shape.width},
          {"photometric_noise", c.photometric_noise},
          {"max_blur_sigma", c.max_blur_sigma},
          {"max_noise_std", c.max_noise_std},
          {"max_brightness", c.max_brightness},
          {"checkerboard_rows", c.checkerboard_rows},
          {"checkerboard_cols", c.checkerboard_cols}};
}

SyntheticConfig synthetic_config_from_json(const Json& j) {
  SyntheticConfig c;
  c.shape = {j.at("height").get<int>(), j.at("width").get<int>()};
  c.photometric_noise = j.at("photometric_noise").get<bool>();
  c.max_blur_sigma = j.at("max_blur_sigma").get<double>();
  c.max_noise_std = j.at("max_noise_std").get<double>();
  c.max_brightness = j.at("max_brightness").get<double>();
  c.checkerboard_rows = j.at("checkerboard_rows").get<int>();
  c.checkerboard_cols = j.at("checkerboard_cols").get<int>();
  if (c.shape.height < 16 || c.shape.width < 16) throw UsageError("synthetic images must be at least 16x16");
  return c;
}

Json to_json(const AdaptationConfig& c) {
  return {{"num_homographies", c.num_homographies},
          {"detection_threshold", c.detection_threshold},
          {"include_identity", c.include_identity},
          {"nms_radius", c.nms_radius},
          {"border_margin", c.border_margin}};
}

AdaptationConfig adaptation_config_from_json(const Json& j) {
  AdaptationConfig c;
  c.num_homographies = j.at("num_homographies").get<int>();
  c.detection_threshold = j.at("detection_threshold").get<double>();
  c.include_identity = j.at("include_identity").get<bool>();
  c.nms_radius = j.at("nms_radius").get<int>();
  c.border_margin = j.at("border_margin").get<int>();
  c.validate();
  return c;
}

Json to_json(const EvalConfig& c) {
  return {{"height", c.resolution.height},
          {"width", c.resolution.width},
          {"max_points", c.max_points},
          {"nms_radius", c.nms_radius},
          {"conf_threshold", c.conf_threshold},
          {"correct_dist_eps", c.correct_dist_eps},
          {"homography_eps_list", c.homography_eps_list}};
}

EvalConfig eval_config_from_json(const Json& j) {
  EvalConfig c;
  c.resolution = {j.at("height").get<int>(), j.at("width").get<int>()};
  c.max_points = j.at("max_points").get<int>();
  c.nms_radius = j.at("nms_radius").get<int>();
  c.conf_threshold = j.at("conf_threshold").get<double>();
  c.correct_dist_eps = j.at("correct_dist_eps").get<double>();
  c.homography_eps_list = j.at("homography_eps_list").get<std::vector<double>>();
  c.validate();
  return c;
}

Json to_json(const VoConfig& c) {
  return {{"filter_dynamic", c.filter_dynamic},
          {"ratio_test", c.ratio_test},
          {"max_points", c.max_points},
          {"nms_radius", c.nms_radius},
          {"conf_threshold", c.conf_threshold},
          {"box_conf_threshold", c.box_conf_threshold},
          {"box_iou_threshold", c.box_iou_threshold},
          {"input_height", c.input_shape.height},
          {"input_width", c.input_shape.width},
          {"seed", c.seed},
          {"ransac_threshold_px", c.pose.ransac_threshold_px},
          {"ransac_confidence", c.pose.ransac_confidence},
          {"rotation_only_ratio", c.pose.rotation_only_ratio},
          {"rotation_only_iterations", c.pose.rotation_only_iterations}};
}

VoConfig vo_config_from_json(const Json& j) {
  VoConfig c;
  c.filter_dynamic = j.at("filter_dynamic").get<bool>();
  c.ratio_test = j.at("ratio_test").get<double>();
  c.max_points = j.at("max_points").get<int>();
  c.nms_radius = j.at("nms_radius").get<int>();
  c.conf_threshold = j.at("conf_threshold").get<double>();
  c.box_conf_threshold = j.at("box_conf_threshold").get<double>();
  c.box_iou_threshold = j.at("box_iou_threshold").get<double>();
  c.input_shape = {j.at("input_height").get<int>(), j.at("input_width").get<int>()};
  c.seed = j.at("seed").get<std::uint64_t>();
  c.pose.ransac_threshold_px = j.at("ransac_threshold_px").get<double>();
  c.pose.ransac_confidence = j.at("ransac_confidence").get<double>();
  c.pose.rotation_only_ratio = j.at("rotation_only_ratio").get<double>();
  c.pose.rotation_only_iterations = j.at("rotation_only_iterations").get<int>();
  if (c.max_points < 1 || c.nms_radius < 0) throw UsageError("vo: max_points >= 1 and nms_radius >= 0 required");
  if (c.ratio_test < 0 || c.ratio_test >= 1) throw UsageError("vo: ratio_test must be in [0, 1)");
  if ((c.input_shape.height % 32) || (c.input_shape.width % 32)) {
    throw UsageError("vo: input size must be 0 (auto) or a multiple of 32");
  }
  return c;
}

Json to_json(const TrainConfig& c) {
  const auto& a = c.augmentation;
  return {{"model_scale", to_string(c.model_scale)},
          {"num_classes", c.num_classes},
          {"height", c.image.height},
          {"width", c.image.width},
          {"batch_size", c.batch_size},
          {"lr_pretrain", c.lr_pretrain},
          {"lr_finetune", c.lr_finetune},
          {"lr_decay", c.lr_decay},
          {"epochs_pretrain", c.epochs_pretrain},
          {"epochs_frozen", c.epochs_frozen},
          {"epochs_unfrozen", c.epochs_unfrozen},
          {"seed", c.seed},
          {"loss_weights", {{"w_desc", c.loss_weights.w_desc}, {"w_obj", c.loss_weights.w_obj}}},
          {"descriptor",
           {{"positive_margin", c.descriptor.positive_margin},
            {"n_correspondences", c.descriptor.n_correspondences},
            {"n_non_correspondences", c.descriptor.n_non_correspondences}}},
          {"object",
           {{"box_gain", c.object.box_gain},
            {"obj_gain", c.object.obj_gain},
            {"cls_gain", c.object.cls_gain},
            {"balance", c.object.balance},
            {"anchor_threshold", c.object.anchor_threshold},
            {"iou_ratio", c.object.iou_ratio}}},
          {"homography", to_json(c.homography)},
          {"augmentation",
           {{"mosaic", a.mosaic},
            {"brightness", a.brightness},
            {"contrast", a.contrast},
            {"blur", a.blur},
            {"max_brightness", a.photometric.max_brightness},
            {"max_contrast", a.photometric.max_contrast},
            {"max_blur_sigma", a.photometric.max_blur_sigma},
            {"mosaic_center_min", a.mosaic_cfg.center_min},
            {"mosaic_center_max", a.mosaic_cfg.center_max},
            {"mosaic_max_extra_scale", a.mosaic_cfg.max_extra_scale},
            {"mosaic_min_box_fraction", a.mosaic_cfg.min_box_fraction}}}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  try {
    c.model_scale = parse_scale(j.at("model_scale").get<std::string>());
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  c.num_classes = j.at("num_classes").get<int>();
  c.image = {j.at("height").get<int>(), j.at("width").get<int>()};
  c.batch_size = j.at("batch_size").get<int>();
  c.lr_pretrain = j.at("lr_pretrain").get<double>();
  c.lr_finetune = j.at("lr_finetune").get<double>();
  c.lr_decay = j.at("lr_decay").get<double>();
  c.epochs_pretrain = j.at("epochs_pretrain").get<int>();
  c.epochs_frozen = j.at("epochs_frozen").get<int>();
  c.epochs_unfrozen = j.at("epochs_unfrozen").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& w = j.at("loss_weights");
  c.loss_weights.w_desc = w.at("w_desc").get<double>();
  c.loss_weights.w_obj = w.at("w_obj").get<double>();
  const auto& d = j.at("descriptor");
  c.descriptor.positive_margin = d.at("positive_margin").get<double>();
  c.descriptor.n_correspondences = d.at("n_correspondences").get<int>();
  c.descriptor.n_non_correspondences = d.at("n_non_correspondences").get<int>();
  const auto& o = j.at("object");
  c.object.box_gain = o.at("box_gain").get<double>();
  c.object.obj_gain = o.at("obj_gain").get<double>();
  c.object.cls_gain = o.at("cls_gain").get<double>();
  const auto bal = o.at("balance").get<std::vector<double>>();
  if (bal.size() != kNumDetectionScales) throw UsageError("object.balance needs 3 values");
  std::copy(bal.begin(), bal.end(), c.object.balance.begin());
  c.object.anchor_threshold = o.at("anchor_threshold").get<double>();
  c.object.iou_ratio = o.at("iou_ratio").get<double>();
  c.homography = homography_config_from_json(j.at("homography"));
  const auto& a = j.at("augmentation");
  c.augmentation.mosaic = a.at("mosaic").get<bool>();
  c.augmentation.brightness = a.at("brightness").get<bool>();
  c.augmentation.contrast = a.at("contrast").get<bool>();
  c.augmentation.blur = a.at("blur").get<bool>();
  c.augmentation.photometric.max_brightness = a.at("max_brightness").get<double>();
  c.augmentation.photometric.max_contrast = a.at("max_contrast").get<double>();
  c.augmentation.photometric.max_blur_sigma = a.at("max_blur_sigma").get<double>();
  c.augmentation.mosaic_cfg.center_min = a.at("mosaic_center_min").get<double>();
  c.augmentation.mosaic_cfg.center_max = a.at("mosaic_center_max").get<double>();
  c.augmentation.mosaic_cfg.max_extra_scale = a.at("mosaic_max_extra_scale").get<double>();
  c.augmentation.mosaic_cfg.min_box_fraction = a.at("mosaic_min_box_fraction").get<double>();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  return c;
}

}  // namespace yolopoint

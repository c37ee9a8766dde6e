#include "yolopoint/core_model.hpp"

#include <cmath>

#include "yolopoint/errors.hpp"

namespace yolopoint {

namespace F = torch::nn::functional;

ModelScale parse_scale(const std::string& s) {
  if (s == "n" || s == "N") return ModelScale::N;
  if (s == "s" || s == "S") return ModelScale::S;
  if (s == "m" || s == "M") return ModelScale::M;
  if (s == "l" || s == "L") return ModelScale::L;
  throw ValidationError("unknown model scale '" + s + "' (expected n, s, m or l)");
}

std::string to_string(ModelScale s) {
  switch (s) {
    case ModelScale::N: return "n";
    case ModelScale::S: return "s";
    case ModelScale::M: return "m";
    case ModelScale::L: return "l";
  }
  return "?";
}

ModelConfig ModelConfig::for_scale(ModelScale scale, int num_classes) {
  ModelConfig c;
  c.scale = scale;
  c.num_classes = num_classes;
  switch (scale) {
    case ModelScale::N: c.width_multiple = 0.25; c.depth_multiple = 0.33; c.descriptor_dim = 64; break;
    case ModelScale::S: c.width_multiple = 0.50; c.depth_multiple = 0.33; c.descriptor_dim = 128; break;
    case ModelScale::M: c.width_multiple = 0.75; c.depth_multiple = 0.67; c.descriptor_dim = 196; break;
    case ModelScale::L: c.width_multiple = 1.00; c.depth_multiple = 1.00; c.descriptor_dim = 256; break;
  }
  c.anchors = {std::vector<Anchor>{{10, 13}, {16, 30}, {33, 23}},
               std::vector<Anchor>{{30, 61}, {62, 45}, {59, 119}},
               std::vector<Anchor>{{116, 90}, {156, 198}, {373, 326}}};
  return c;
}

void ModelConfig::validate() const {
  if (!(width_multiple > 0) || !(depth_multiple > 0) || !std::isfinite(width_multiple) ||
      !std::isfinite(depth_multiple)) {
    throw ValidationError("width_multiple and depth_multiple must be positive");
  }
  if (descriptor_dim != 64 && descriptor_dim != 128 && descriptor_dim != 196 &&
      descriptor_dim != 256) {
    throw ValidationError("descriptor_dim must be one of 64, 128, 196, 256");
  }
  if (num_classes < 1) throw ValidationError("num_classes must be >= 1");
  if (input_channels != 3) throw ValidationError("input_channels must be 3");
  if (cell_size != kCellSize) throw ValidationError("cell_size must be 8");
  const std::size_t na = anchors[0].size();
  if (na == 0) throw ValidationError("anchor_spec must list at least one prior per scale");
  for (const auto& scale_anchors : anchors) {
    if (scale_anchors.size() != na) {
      throw ValidationError("every detection scale needs the same number of anchors");
    }
    for (const auto& a : scale_anchors) {
      if (!(a.w > 0) || !(a.h > 0)) throw ValidationError("anchor sizes must be positive");
    }
  }
}

int ModelConfig::channels(int base) const {
  return std::max(8, static_cast<int>(std::ceil(base * width_multiple / 8.0)) * 8);
}

int ModelConfig::depth(int base) const {
  return std::max(1, static_cast<int>(std::lround(base * depth_multiple)));
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& scale_anchors : anchors) {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& an : scale_anchors) s.push_back({an.w, an.h});
    a.push_back(s);
  }
  return {{"scale", to_string(scale)},
          {"width_multiple", width_multiple},
          {"depth_multiple", depth_multiple},
          {"descriptor_dim", descriptor_dim},
          {"num_classes", num_classes},
          {"input_channels", input_channels},
          {"cell_size", cell_size},
          {"anchors", a}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c = for_scale(parse_scale(j.at("scale").get<std::string>()));
  c.width_multiple = j.at("width_multiple").get<double>();
  c.depth_multiple = j.at("depth_multiple").get<double>();
  c.descriptor_dim = j.at("descriptor_dim").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.input_channels = j.value("input_channels", 3);
  c.cell_size = j.value("cell_size", kCellSize);
  if (j.contains("anchors")) {
    const auto& a = j.at("anchors");
    if (a.size() != kNumDetectionScales) throw ValidationError("anchors must list 3 scales");
    for (int s = 0; s < kNumDetectionScales; ++s) {
      c.anchors[s].clear();
      for (const auto& an : a[s]) c.anchors[s].push_back({an.at(0).get<double>(), an.at(1).get<double>()});
    }
  }
  c.validate();
  return c;
}

bool ModelConfig::operator==(const ModelConfig& other) const { return to_json() == other.to_json(); }

ConvBnSiLUImpl::ConvBnSiLUImpl(int in, int out, int kernel, int stride, int padding) {
  if (padding < 0) padding = kernel / 2;
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                                                       .stride(stride)
                                                       .padding(padding)
                                                       .bias(false)));
  bn = register_module("bn", torch::nn::BatchNorm2d(
                                 torch::nn::BatchNorm2dOptions(out).eps(1e-3).momentum(0.03)));
}

torch::Tensor ConvBnSiLUImpl::forward(const torch::Tensor& x) { return F::silu(bn(conv(x))); }

BottleneckImpl::BottleneckImpl(int in, int out, bool shortcut) : add_(shortcut && in == out) {
  cv1 = register_module("cv1", ConvBnSiLU(in, out, 1, 1));
  cv2 = register_module("cv2", ConvBnSiLU(out, out, 3, 1));
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  auto y = cv2(cv1(x));
  return add_ ? x + y : y;
}

C3Impl::C3Impl(int in, int out, int n, bool shortcut) {
  const int hidden = out / 2;
  cv1 = register_module("cv1", ConvBnSiLU(in, hidden, 1, 1));
  cv2 = register_module("cv2", ConvBnSiLU(in, hidden, 1, 1));
  cv3 = register_module("cv3", ConvBnSiLU(2 * hidden, out, 1, 1));
  m = register_module("m", torch::nn::Sequential());
  for (int i = 0; i < n; ++i) m->push_back(Bottleneck(hidden, hidden, shortcut));
}

torch::Tensor C3Impl::forward(const torch::Tensor& x) {
  return cv3(torch::cat({m->forward(cv1(x)), cv2(x)}, 1));
}

SPPFImpl::SPPFImpl(int in, int out, int kernel) {
  const int hidden = in / 2;
  cv1 = register_module("cv1", ConvBnSiLU(in, hidden, 1, 1));
  cv2 = register_module("cv2", ConvBnSiLU(hidden * 4, out, 1, 1));
  pool = register_module(
      "pool", torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(kernel).stride(1).padding(kernel / 2)));
}

torch::Tensor SPPFImpl::forward(const torch::Tensor& x) {
  auto a = cv1(x);
  auto p1 = pool(a);
  auto p2 = pool(p1);
  auto p3 = pool(p2);
  return cv2(torch::cat({a, p1, p2, p3}, 1));
}

YoloPointImpl::YoloPointImpl(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  const int c64 = c.channels(64), c128 = c.channels(128), c256 = c.channels(256),
            c512 = c.channels(512), c1024 = c.channels(1024);

  b0 = register_module("b0", ConvBnSiLU(c.input_channels, c64, 6, 2, 2));
  b1 = register_module("b1", ConvBnSiLU(c64, c128, 3, 2));
  b2 = register_module("b2", C3(c128, c128, c.depth(3)));
  b3 = register_module("b3", ConvBnSiLU(c128, c256, 3, 2));
  b4 = register_module("b4", C3(c256, c256, c.depth(6)));
  b5 = register_module("b5", ConvBnSiLU(c256, c512, 3, 2));
  b6 = register_module("b6", C3(c512, c512, c.depth(9)));
  b7 = register_module("b7", ConvBnSiLU(c512, c1024, 3, 2));
  b8 = register_module("b8", C3(c1024, c1024, c.depth(3)));
  b9 = register_module("b9", SPPF(c1024, c1024, 5));

  det_c3 = register_module("det_c3", C3(c256, c256, c.depth(3)));
  det_conv = register_module("det_conv", ConvBnSiLU(c256, c256, 3, 1));
  det_out = register_module("det_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(c256, kDetectorChannels, 1)));

  desc_reduce = register_module("desc_reduce", ConvBnSiLU(c256, c128, 1, 1));
  desc_c3 = register_module("desc_c3", C3(2 * c128, c128, c.depth(3)));
  desc_down = register_module("desc_down", ConvBnSiLU(c128, c256, 3, 2));
  desc_out = register_module("desc_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(c256, c.descriptor_dim, 1)));

  h10 = register_module("h10", ConvBnSiLU(c1024, c512, 1, 1));
  h13 = register_module("h13", C3(2 * c512, c512, c.depth(3), false));
  h14 = register_module("h14", ConvBnSiLU(c512, c256, 1, 1));
  h17 = register_module("h17", C3(2 * c256, c256, c.depth(3), false));
  h18 = register_module("h18", ConvBnSiLU(c256, c256, 3, 2));
  h20 = register_module("h20", C3(2 * c256, c512, c.depth(3), false));
  h21 = register_module("h21", ConvBnSiLU(c512, c512, 3, 2));
  h23 = register_module("h23", C3(2 * c512, c1024, c.depth(3), false));

  replace_detection_layer(c.num_classes);
}

void YoloPointImpl::replace_detection_layer(int num_classes) {
  if (num_classes < 1) throw ValidationError("num_classes must be >= 1");
  config_.num_classes = num_classes;
  const int outputs = config_.anchors_per_scale() * (5 + num_classes);
  const std::array<int, kNumDetectionScales> in = {config_.channels(256), config_.channels(512),
                                                   config_.channels(1024)};
  auto list = torch::nn::ModuleList();
  for (int s = 0; s < kNumDetectionScales; ++s) {
    list->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in[s], outputs, 1)));
  }
  if (detect) {
    detect = replace_module("detect", list);
  } else {
    detect = register_module("detect", list);
  }
  init_detection_biases();
}

void YoloPointImpl::init_detection_biases() {
  torch::NoGradGuard no_grad;
  const int na = config_.anchors_per_scale();
  const int no = 5 + config_.num_classes;
  for (int s = 0; s < kNumDetectionScales; ++s) {
    auto conv = detect[s]->as<torch::nn::Conv2d>();
    auto b = conv->bias.view({na, no});
    const double cells = 640.0 / kDetectionStrides[s];
    b.select(1, 4).add_(std::log(8.0 / (cells * cells)));
    b.slice(1, 5).add_(std::log(0.6 / (config_.num_classes - 0.99 + 1e-9)));
  }
}

bool YoloPointImpl::is_detection_layer(const std::string& name) {
  return name.rfind("detect.", 0) == 0;
}

RawModelOutput YoloPointImpl::forward(const torch::Tensor& images) {
  auto x0 = b0(images);
  auto x2 = b2(b1(x0));               // 1/4
  auto p3 = b4(b3(x2));               // 1/8
  auto p4 = b6(b5(p3));               // 1/16
  auto p5 = b9(b8(b7(p4)));           // 1/32

  RawModelOutput out;
  out.detector_logits = det_out(det_conv(det_c3(p3)));

  auto up = F::interpolate(desc_reduce(p3), F::InterpolateFuncOptions()
                                                .scale_factor(std::vector<double>{2.0, 2.0})
                                                .mode(torch::kNearest));
  auto d = desc_out(desc_down(desc_c3(torch::cat({up, x2}, 1))));
  out.coarse_descriptors = F::normalize(d, F::NormalizeFuncOptions().p(2).dim(1).eps(1e-12));

  auto nearest2 = F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest);
  auto y10 = h10(p5);
  auto y13 = h13(torch::cat({F::interpolate(y10, nearest2), p4}, 1));
  auto y14 = h14(y13);
  auto y17 = h17(torch::cat({F::interpolate(y14, nearest2), p3}, 1));
  auto y20 = h20(torch::cat({h18(y17), y14}, 1));
  auto y23 = h23(torch::cat({h21(y20), y10}, 1));

  const std::array<torch::Tensor, kNumDetectionScales> feats = {y17, y20, y23};
  const int na = config_.anchors_per_scale();
  const int no = 5 + config_.num_classes;
  for (int s = 0; s < kNumDetectionScales; ++s) {
    auto r = detect[s]->as<torch::nn::Conv2d>()->forward(feats[s]);
    const auto b = r.size(0), h = r.size(2), w = r.size(3);
    out.object_raw.push_back(r.view({b, na, no, h, w}).permute({0, 1, 3, 4, 2}).contiguous());
  }
  return out;
}

YoloPoint build_model(const ModelConfig& config) { return YoloPoint(config); }

RawModelOutput forward(YoloPoint& model, const torch::Tensor& images) {
  torch::Tensor batch = images.dim() == 3 ? images.unsqueeze(0) : images;
  if (batch.dim() != 4) throw ShapeError("forward expects C x H x W or B x C x H x W input");
  if (batch.size(1) != model->config().input_channels) {
    throw ShapeError("forward expects " + std::to_string(model->config().input_channels) +
                     " input channels, got " + std::to_string(batch.size(1)));
  }
  if (batch.size(2) % 32 != 0) {
    throw DimensionError("image height " + std::to_string(batch.size(2)) + " is not divisible by 32");
  }
  if (batch.size(3) % 32 != 0) {
    throw DimensionError("image width " + std::to_string(batch.size(3)) + " is not divisible by 32");
  }
  if (!torch::isfinite(batch).all().item<bool>()) {
    throw ValidationError("input image contains non-finite values");
  }
  return model->forward(batch.to(torch::kFloat32));
}

torch::Tensor heatmap_from_logits(const torch::Tensor& detector_logits) {
  const bool batched = detector_logits.dim() == 4;
  torch::Tensor logits = batched ? detector_logits : detector_logits.unsqueeze(0);
  if (logits.dim() != 4 || logits.size(1) != kDetectorChannels) {
    throw ShapeError("detector logits must have " + std::to_string(kDetectorChannels) +
                     " channels");
  }
  auto prob = torch::softmax(logits, 1).slice(1, 0, kDustbinChannel);
  auto heat = F::pixel_shuffle(prob, kCellSize).squeeze(1);
  return batched ? heat : heat.squeeze(0);
}

std::int64_t parameter_count(YoloPoint& model) {
  std::int64_t n = 0;
  for (const auto& p : model->parameters()) n += p.numel();
  return n;
}

}  // namespace yolopoint

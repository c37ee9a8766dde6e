#pragma once

// YOLOPoint network family: a CSPDarknet backbone shared by a keypoint
// detector head, a descriptor head and a three-scale object detection head.
//
// Channel / depth table (base YOLOv5 channels scaled by width_multiple and
// rounded up to a multiple of 8; C3 repeats scaled by depth_multiple):
//
//   scale  width  depth  stem  P2   P3   P4   P5    C3 repeats   descriptor
//   N      0.25   0.33   16    32   64   128  256   1/2/3/1      64
//   S      0.50   0.33   32    64   128  256  512   1/2/3/1      128
//   M      0.75   0.67   48    96   192  384  768   2/4/6/2      196
//   L      1.00   1.00   64    128  256  512  1024  3/6/9/3      256
//
// Layout (strides relative to the input):
//   backbone  Conv6x6/2 -> Conv/2 -> C3 [1/4, descriptor skip] -> Conv/2 -> C3 [P3, 1/8]
//             -> Conv/2 -> C3 [P4] -> Conv/2 -> C3 -> SPPF [P5, 1/32]
//   detector  P3 -> C3 -> Conv3x3 -> Conv1x1 (65 logits, channel 64 = dustbin)
//   descriptor P3 -> Conv1x1 -> nearest x2 -> concat(1/4 skip) -> C3 -> Conv3x3/2
//              -> Conv1x1 (descriptor_dim) -> L2 normalize
//   objects   YOLOv5 PAN neck over P3/P4/P5 -> 1x1 detection convs, 3 anchors each

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include <json.hpp>

namespace yolopoint {

enum class ModelScale { N, S, M, L };

ModelScale parse_scale(const std::string& s);
std::string to_string(ModelScale s);

struct Anchor {
  double w = 0.0;
  double h = 0.0;
};

inline constexpr int kCellSize = 8;
inline constexpr int kDetectorChannels = kCellSize * kCellSize + 1;
inline constexpr int kDustbinChannel = kCellSize * kCellSize;
inline constexpr int kNumDetectionScales = 3;
inline constexpr std::array<int, kNumDetectionScales> kDetectionStrides = {8, 16, 32};

struct ModelConfig {
  ModelScale scale = ModelScale::N;
  double width_multiple = 0.25;
  double depth_multiple = 0.33;
  int descriptor_dim = 64;
  int num_classes = 80;
  int input_channels = 3;
  int cell_size = kCellSize;
  // per detection scale, three (w, h) priors in pixels
  std::array<std::vector<Anchor>, kNumDetectionScales> anchors;

  static ModelConfig for_scale(ModelScale scale, int num_classes = 80);
  void validate() const;

  int channels(int base) const;  // scaled channel count, >= 8
  int depth(int base) const;     // scaled repeat count, >= 1
  int anchors_per_scale() const { return static_cast<int>(anchors[0].size()); }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig& other) const;
};

// Network outputs, NCHW tensors:
//   detector_logits     B x 65 x H/8 x W/8
//   coarse_descriptors  B x D x H/8 x W/8, unit norm along D
//   object_raw[s]       B x A x H/s x W/s x (5 + num_classes) for strides 8/16/32
struct RawModelOutput {
  torch::Tensor detector_logits;
  torch::Tensor coarse_descriptors;
  std::vector<torch::Tensor> object_raw;
};

class ConvBnSiLUImpl : public torch::nn::Module {
 public:
  ConvBnSiLUImpl(int in, int out, int kernel = 1, int stride = 1, int padding = -1);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(ConvBnSiLU);

class BottleneckImpl : public torch::nn::Module {
 public:
  BottleneckImpl(int in, int out, bool shortcut);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvBnSiLU cv1{nullptr}, cv2{nullptr};
  bool add_;
};
TORCH_MODULE(Bottleneck);

// Cross-stage partial block: one path through n bottlenecks, a bypass path,
// merged by a 1x1 convolution.
class C3Impl : public torch::nn::Module {
 public:
  C3Impl(int in, int out, int n, bool shortcut = true);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvBnSiLU cv1{nullptr}, cv2{nullptr}, cv3{nullptr};
  torch::nn::Sequential m{nullptr};
};
TORCH_MODULE(C3);

// Fast spatial pyramid pooling: three chained 5x5 max pools, concatenated.
class SPPFImpl : public torch::nn::Module {
 public:
  SPPFImpl(int in, int out, int kernel = 5);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvBnSiLU cv1{nullptr}, cv2{nullptr};
  torch::nn::MaxPool2d pool{nullptr};
};
TORCH_MODULE(SPPF);

class YoloPointImpl : public torch::nn::Module {
 public:
  explicit YoloPointImpl(ModelConfig config);

  // Raw forward on a B x 3 x H x W batch. No input validation.
  RawModelOutput forward(const torch::Tensor& images);

  const ModelConfig& config() const { return config_; }

  // Swap the final 1x1 detection convolutions for a new class count.
  void replace_detection_layer(int num_classes);
  // True for parameter/buffer names that belong to the final detection convolutions.
  static bool is_detection_layer(const std::string& name);

 private:
  void init_detection_biases();

  ModelConfig config_;
  // backbone
  ConvBnSiLU b0{nullptr}, b1{nullptr}, b3{nullptr}, b5{nullptr}, b7{nullptr};
  C3 b2{nullptr}, b4{nullptr}, b6{nullptr}, b8{nullptr};
  SPPF b9{nullptr};
  // keypoint detector head
  C3 det_c3{nullptr};
  ConvBnSiLU det_conv{nullptr};
  torch::nn::Conv2d det_out{nullptr};
  // descriptor head
  ConvBnSiLU desc_reduce{nullptr};
  C3 desc_c3{nullptr};
  ConvBnSiLU desc_down{nullptr};
  torch::nn::Conv2d desc_out{nullptr};
  // object neck + detection layer
  ConvBnSiLU h10{nullptr}, h14{nullptr}, h18{nullptr}, h21{nullptr};
  C3 h13{nullptr}, h17{nullptr}, h20{nullptr}, h23{nullptr};
  torch::nn::ModuleList detect{nullptr};
};
TORCH_MODULE(YoloPoint);

YoloPoint build_model(const ModelConfig& config);

// Validated inference: checks shape (H, W divisible by 32) and finiteness.
// Accepts C x H x W or B x C x H x W. Runs in whatever train/eval mode the
// model is in; callers wanting inference semantics call model->eval().
RawModelOutput forward(YoloPoint& model, const torch::Tensor& images);

// Softmax over the 65 channels, dustbin dropped, remaining 64 channels
// rearranged into 8x8 pixel blocks. Input B x 65 x Hc x Wc (or 65 x Hc x Wc);
// output B x H x W (or H x W).
torch::Tensor heatmap_from_logits(const torch::Tensor& detector_logits);

std::int64_t parameter_count(YoloPoint& model);

// Checkpoint blob: magic, format version, config JSON, named tensors
// (parameters and buffers).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(YoloPoint& model, const std::filesystem::path& path);
ModelConfig read_checkpoint_config(const std::filesystem::path& path);

struct LoadOptions {
  // Accept a num_classes mismatch and skip the detection layer tensors.
  bool allow_detection_layer_mismatch = false;
};

// Loads into an existing model; throws CheckpointError on version or config
// mismatch.
void load_checkpoint(YoloPoint& model, const std::filesystem::path& path,
                     LoadOptions options = {});
YoloPoint load_model(const std::filesystem::path& path);

}  // namespace yolopoint

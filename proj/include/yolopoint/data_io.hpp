#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "yolopoint/trajectory.hpp"
#include "yolopoint/types.hpp"

namespace yolopoint {

// ---- images ---------------------------------------------------------------

// Image tensors are float32, 3 x H x W, RGB, values in [0,1].
torch::Tensor tensor_from_mat(const cv::Mat& bgr_or_gray);
cv::Mat mat_from_tensor(const torch::Tensor& image);  // 8-bit BGR (or gray for H x W)

torch::Tensor load_image(const std::filesystem::path& path);
torch::Tensor load_image(const std::filesystem::path& path, ImageShape resize_to);
ImageShape image_shape_of(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const torch::Tensor& image);

torch::Tensor resize_image(const torch::Tensor& image, ImageShape shape);

// Fit inside `shape` keeping aspect, pad with zeros. Returns the image and the
// (scale, offset_x, offset_y) used. Kept for padding-artifact ablations.
struct Letterbox {
  torch::Tensor image;
  double scale = 1.0;
  int offset_x = 0;
  int offset_y = 0;
};
Letterbox letterbox(const torch::Tensor& image, ImageShape shape);

// ---- label files ----------------------------------------------------------

// "class_id cx cy w h" per line, normalized coordinates.
std::vector<BoxLabel> read_box_labels(const std::filesystem::path& path, int num_classes);
void write_box_labels(const std::filesystem::path& path, const std::vector<BoxLabel>& boxes);

// "x y confidence" per line, pixel coordinates.
KeypointSet read_point_labels(const std::filesystem::path& path);
void write_point_labels(const std::filesystem::path& path, const KeypointSet& points);

struct SampleRecord {
  std::filesystem::path image;
  std::optional<std::filesystem::path> keypoint_labels;
  std::optional<std::filesystem::path> box_labels;
  std::string split = "train";
};

// Manifest: tab-separated "image  keypoint_labels  box_labels  split" with "-"
// for a missing label file. Relative paths resolve against the manifest's
// directory.
std::vector<SampleRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records);

struct LabeledImage {
  torch::Tensor image;  // 3 x H x W
  KeypointSet points;
  std::vector<BoxLabel> boxes;
};

// Loads image and labels; when `shape` is given the image is resized and the
// point labels rescaled (boxes are normalized and unaffected).
LabeledImage load_sample(const SampleRecord& record, int num_classes,
                         std::optional<ImageShape> shape = std::nullopt);

// Deterministic seeded split: marks `validation_count` records as "val".
std::vector<SampleRecord> split_records(std::vector<SampleRecord> records, std::size_t validation_count,
                                        std::uint64_t seed);

// ---- augmentation ---------------------------------------------------------

// Pixel-space affine of one mosaic tile: mosaic = scale * source + offset,
// for pixel-center coordinates.
struct TileAffine {
  double scale_x = 1.0, scale_y = 1.0;
  double offset_x = 0.0, offset_y = 0.0;
  // canvas rectangle covered by the tile, [x0, x1) x [y0, y1)
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

struct MosaicConfig {
  double center_min = 0.25;  // split point range, fraction of canvas size
  double center_max = 0.75;
  double max_extra_scale = 1.5;  // tiles are scaled by cover-scale * U[1, max_extra_scale]
  double min_box_fraction = 0.2;  // boxes keeping less of their area are dropped
};

struct MosaicResult {
  LabeledImage sample;
  std::array<TileAffine, 4> tiles;  // top-left, top-right, bottom-left, bottom-right
  std::array<std::vector<std::size_t>, 4> kept_point_indices;  // source indices, in output order
};

// Four images tiled around a random split point; each tile covers its
// quadrant completely, so the canvas has no padding.
MosaicResult mosaic_augment(const std::array<LabeledImage, 4>& samples, ImageShape out_shape,
                            std::mt19937_64& rng, const MosaicConfig& cfg = {});

struct PhotometricConfig {
  double max_brightness = 0.2;  // additive offset range
  double max_contrast = 0.3;    // scale in [1 - c, 1 + c] about the image mean
  double max_blur_sigma = 1.0;
};

struct PhotometricParams {
  double brightness = 0.0;
  double contrast = 1.0;
  double blur_sigma = 0.0;
};

PhotometricParams sample_photometric(const PhotometricConfig& cfg, std::mt19937_64& rng);
torch::Tensor apply_photometric(const torch::Tensor& image, const PhotometricParams& params);
torch::Tensor photometric_augment(const torch::Tensor& image, std::mt19937_64& rng,
                                  const PhotometricConfig& cfg);

// ---- KITTI odometry -------------------------------------------------------

struct KittiSequence {
  std::string id;
  std::vector<std::filesystem::path> frames;  // index order
  CameraIntrinsics intrinsics;
  Trajectory ground_truth;
};

// Layout: <root>/sequences/<id>/{image_0|image_2}/NNNNNN.png,
// <root>/sequences/<id>/calib.txt, <root>/poses/<id>.txt.
KittiSequence load_kitti_sequence(const std::filesystem::path& root, const std::string& sequence_id,
                                  const std::string& camera = "image_0");
CameraIntrinsics read_kitti_calibration(const std::filesystem::path& calib_file,
                                        const std::string& projection = "P0");

}  // namespace yolopoint

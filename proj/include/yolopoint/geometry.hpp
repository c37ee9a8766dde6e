#pragma once

#include <Eigen/Dense>
#include <array>
#include <random>
#include <utility>
#include <vector>

#include <torch/types.h>

#include "yolopoint/types.hpp"

namespace yolopoint {

// 3x3 projective map in pixel coordinates, normalized so that H(2,2) == 1.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography identity() { return Homography(); }
  static Homography translation(double tx, double ty);
  // Exact map of four source points onto four destination points.
  static Homography from_correspondences(const std::array<Eigen::Vector2d, 4>& src,
                                         const std::array<Eigen::Vector2d, 4>& dst);

  const Eigen::Matrix3d& matrix() const { return m_; }
  Homography inverse() const;
  // (*this) after `first`: x -> this(first(x)).
  Homography compose(const Homography& first) const;

  // Throws DegeneratePointError when the point maps to the plane at infinity.
  Eigen::Vector2d apply(const Eigen::Vector2d& p) const;

 private:
  Eigen::Matrix3d m_;
};

struct HomographySamplingConfig {
  double max_translation = 0.2;  // fraction of image size
  double max_rotation = 0.5;     // radians
  double scale_min = 0.7;
  double scale_max = 1.4;
  double max_perspective = 0.2;  // corner displacement, fraction of image size
  std::uint64_t seed = 0;

  void validate() const;
  static HomographySamplingConfig zero_range();
};

// Random perspective, scale, rotation (about the image center) and translation,
// expressed through where the four image corners land.
Homography sample_homography(const HomographySamplingConfig& cfg, ImageShape shape,
                             std::mt19937_64& rng);

KeypointSet warp_points(const KeypointSet& points, const Homography& h);

struct WarpResult {
  torch::Tensor image;  // C x H x W (or H x W), same dtype as input
  torch::Tensor valid;  // H x W bool
};

// Bilinear inverse-mapping warp. Pixels whose source falls outside
// [0, W-1] x [0, H-1] are zero and marked invalid.
WarpResult warp_image(const torch::Tensor& image, const Homography& h, ImageShape out_shape);

// Batched variant for N x C x H x W tensors, one homography per image.
WarpResult warp_batch(const torch::Tensor& images, const std::vector<Homography>& hs);

struct CellIndex {
  int row = 0;
  int col = 0;
  bool operator==(const CellIndex&) const = default;
};

struct CellCorrespondence {
  CellIndex source;
  CellIndex target;
};

// Cell centers (cell_size * j + (cell_size - 1) / 2) mapped through h and
// rounded to the nearest warped cell (ties toward the smaller index).
std::vector<CellCorrespondence> cell_correspondences(const Homography& h, int grid_rows,
                                                     int grid_cols, int cell_size);

bool inside_image(const Eigen::Vector2d& p, ImageShape shape);

}  // namespace yolopoint

#include "yolopoint/geometry.hpp"

#include <cmath>

#include <torch/torch.h>

#include "yolopoint/errors.hpp"

namespace yolopoint {

namespace {

constexpr double kMinDeterminant = 1e-8;
constexpr double kMinHomogeneousW = 1e-12;

Eigen::Matrix3d normalized(const Eigen::Matrix3d& m) {
  if (std::abs(m(2, 2)) < 1e-15) {
    throw DegenerateGeometryError("homography has zero bottom-right entry");
  }
  Eigen::Matrix3d out = m / m(2, 2);
  if (!out.allFinite()) throw DegenerateGeometryError("homography has non-finite entries");
  if (std::abs(out.determinant()) <= kMinDeterminant) {
    throw DegenerateGeometryError("homography is not invertible");
  }
  return out;
}

}  // namespace

Homography::Homography(const Eigen::Matrix3d& m) : m_(normalized(m)) {}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Homography Homography::from_correspondences(const std::array<Eigen::Vector2d, 4>& src,
                                            const std::array<Eigen::Vector2d, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x(), y = src[i].y();
    const double u = dst[i].x(), v = dst[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return Homography(m);
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Homography Homography::compose(const Homography& first) const {
  return Homography(m_ * first.m_);
}

Eigen::Vector2d Homography::apply(const Eigen::Vector2d& p) const {
  const Eigen::Vector3d q = m_ * p.homogeneous();
  if (std::abs(q.z()) < kMinHomogeneousW) {
    throw DegeneratePointError("point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                               ") maps to the plane at infinity");
  }
  return q.hnormalized();
}

void HomographySamplingConfig::validate() const {
  const bool finite = std::isfinite(max_translation) && std::isfinite(max_rotation) &&
                      std::isfinite(scale_min) && std::isfinite(scale_max) &&
                      std::isfinite(max_perspective);
  if (!finite) throw ValidationError("homography sampling ranges must be finite");
  if (max_translation < 0 || max_rotation < 0 || max_perspective < 0) {
    throw ValidationError("homography sampling ranges must be non-negative");
  }
  if (scale_min <= 0 || scale_max < scale_min) {
    throw ValidationError("scale range must satisfy 0 < min <= max");
  }
}

HomographySamplingConfig HomographySamplingConfig::zero_range() {
  HomographySamplingConfig cfg;
  cfg.max_translation = 0;
  cfg.max_rotation = 0;
  cfg.scale_min = 1;
  cfg.scale_max = 1;
  cfg.max_perspective = 0;
  return cfg;
}

Homography sample_homography(const HomographySamplingConfig& cfg, ImageShape shape,
                             std::mt19937_64& rng) {
  cfg.validate();
  const double w = shape.width - 1.0;
  const double h = shape.height - 1.0;
  const std::array<Eigen::Vector2d, 4> corners = {
      Eigen::Vector2d(0, 0), Eigen::Vector2d(w, 0), Eigen::Vector2d(w, h), Eigen::Vector2d(0, h)};
  const Eigen::Vector2d center(w / 2, h / 2);

  auto uniform = [&rng](double lo, double hi) {
    if (hi <= lo) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  for (;;) {
    std::array<Eigen::Vector2d, 4> dst;
    for (int i = 0; i < 4; ++i) {
      const double dx = uniform(-cfg.max_perspective, cfg.max_perspective) * shape.width;
      const double dy = uniform(-cfg.max_perspective, cfg.max_perspective) * shape.height;
      dst[i] = corners[i] + Eigen::Vector2d(dx, dy);
    }
    const double scale = uniform(cfg.scale_min, cfg.scale_max);
    const double angle = uniform(-cfg.max_rotation, cfg.max_rotation);
    const Eigen::Vector2d shift(uniform(-cfg.max_translation, cfg.max_translation) * shape.width,
                                uniform(-cfg.max_translation, cfg.max_translation) * shape.height);
    const Eigen::Matrix2d rot = Eigen::Rotation2Dd(angle).toRotationMatrix();
    for (auto& p : dst) p = rot * (scale * (p - center)) + center + shift;
    try {
      return Homography::from_correspondences(corners, dst);
    } catch (const DegenerateGeometryError&) {
      // folded quadrilateral; draw again
    }
  }
}

KeypointSet warp_points(const KeypointSet& points, const Homography& h) {
  KeypointSet out = points;
  for (auto& kp : out.points) {
    const Eigen::Vector2d q = h.apply({kp.x, kp.y});
    kp.x = q.x();
    kp.y = q.y();
  }
  return out;
}

bool inside_image(const Eigen::Vector2d& p, ImageShape shape) {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= shape.width - 1.0 &&
         p.y() <= shape.height - 1.0;
}

namespace {

template <typename T>
void warp_planes(const T* src, T* dst, bool* valid, int channels, int in_h, int in_w, int out_h,
                 int out_w, const Eigen::Matrix3d& inv) {
  const std::int64_t in_plane = static_cast<std::int64_t>(in_h) * in_w;
  const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const std::int64_t o = static_cast<std::int64_t>(y) * out_w + x;
      const Eigen::Vector3d q = inv * Eigen::Vector3d(x, y, 1.0);
      bool ok = std::abs(q.z()) >= kMinHomogeneousW;
      double sx = 0, sy = 0;
      if (ok) {
        sx = q.x() / q.z();
        sy = q.y() / q.z();
        ok = sx >= 0.0 && sy >= 0.0 && sx <= in_w - 1.0 && sy <= in_h - 1.0;
      }
      valid[o] = ok;
      if (!ok) {
        for (int c = 0; c < channels; ++c) dst[c * out_plane + o] = T(0);
        continue;
      }
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, in_w - 1);
      const int y1 = std::min(y0 + 1, in_h - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;
      for (int c = 0; c < channels; ++c) {
        const T* p = src + c * in_plane;
        const double top = p[y0 * in_w + x0] * (1 - fx) + p[y0 * in_w + x1] * fx;
        const double bottom = p[y1 * in_w + x0] * (1 - fx) + p[y1 * in_w + x1] * fx;
        dst[c * out_plane + o] = static_cast<T>(top * (1 - fy) + bottom * fy);
      }
    }
  }
}

}  // namespace

WarpResult warp_image(const torch::Tensor& image, const Homography& h, ImageShape out_shape) {
  if (image.dim() != 2 && image.dim() != 3) {
    throw ShapeError("warp_image expects H x W or C x H x W, got " +
                     std::to_string(image.dim()) + " dims");
  }
  const bool planar = image.dim() == 2;
  torch::Tensor src = (planar ? image.unsqueeze(0) : image).contiguous();
  const int channels = static_cast<int>(src.size(0));
  const int in_h = static_cast<int>(src.size(1));
  const int in_w = static_cast<int>(src.size(2));
  torch::Tensor dst = torch::empty({channels, out_shape.height, out_shape.width}, src.options());
  torch::Tensor valid =
      torch::empty({out_shape.height, out_shape.width}, torch::TensorOptions().dtype(torch::kBool));
  const Eigen::Matrix3d inv = h.inverse().matrix();
  AT_DISPATCH_FLOATING_TYPES(src.scalar_type(), "warp_image", [&] {
    warp_planes<scalar_t>(src.data_ptr<scalar_t>(), dst.data_ptr<scalar_t>(),
                          valid.data_ptr<bool>(), channels, in_h, in_w, out_shape.height,
                          out_shape.width, inv);
  });
  return {planar ? dst.squeeze(0) : dst, valid};
}

WarpResult warp_batch(const torch::Tensor& images, const std::vector<Homography>& hs) {
  if (images.dim() != 4 || static_cast<std::size_t>(images.size(0)) != hs.size()) {
    throw ShapeError("warp_batch expects N x C x H x W with one homography per image");
  }
  const ImageShape shape{static_cast<int>(images.size(2)), static_cast<int>(images.size(3))};
  std::vector<torch::Tensor> out, masks;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    auto r = warp_image(images[static_cast<std::int64_t>(i)], hs[i], shape);
    out.push_back(r.image);
    masks.push_back(r.valid);
  }
  return {torch::stack(out), torch::stack(masks)};
}

std::vector<CellCorrespondence> cell_correspondences(const Homography& h, int grid_rows,
                                                     int grid_cols, int cell_size) {
  std::vector<CellCorrespondence> out;
  const double half = (cell_size - 1) / 2.0;
  // nearest index with ties toward the smaller one
  auto nearest = [&](double coord) { return static_cast<int>(std::ceil((coord - half) / cell_size - 0.5)); };
  for (int r = 0; r < grid_rows; ++r) {
    for (int c = 0; c < grid_cols; ++c) {
      const Eigen::Vector2d center(c * cell_size + half, r * cell_size + half);
      const Eigen::Vector3d q = h.matrix() * center.homogeneous();
      if (std::abs(q.z()) < kMinHomogeneousW) continue;
      const Eigen::Vector2d p = q.hnormalized();
      if (!p.allFinite() || p.cwiseAbs().maxCoeff() > 1e9) continue;
      const int tc = nearest(p.x());
      const int tr = nearest(p.y());
      if (tr < 0 || tc < 0 || tr >= grid_rows || tc >= grid_cols) continue;
      out.push_back({{r, c}, {tr, tc}});
    }
  }
  return out;
}

}  // namespace yolopoint

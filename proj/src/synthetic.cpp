#include <algorithm>
#include <cmath>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "yolopoint/errors.hpp"
#include "yolopoint/labeling.hpp"

namespace yolopoint {

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Polygon: return "polygon";
    case ShapeKind::LineSegments: return "line_segments";
    case ShapeKind::Star: return "star";
    case ShapeKind::Checkerboard: return "checkerboard";
    case ShapeKind::Stripes: return "stripes";
    case ShapeKind::Cube: return "cube";
    case ShapeKind::Ellipse: return "ellipse";
    case ShapeKind::GaussianNoise: return "gaussian_noise";
  }
  return "?";
}

ShapeKind parse_shape_kind(const std::string& s) {
  for (auto k : kAllShapeKinds) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown synthetic shape kind '" + s + "'");
}

namespace {

using Vec2 = Eigen::Vector2d;
using Pt = Eigen::Vector2i;
constexpr double kPi = std::numbers::pi;
constexpr int kMargin = 3;
constexpr double kMinCornerGap = 6.0;

class Renderer {
 public:
  Renderer(std::mt19937_64& rng, const SyntheticConfig& cfg)
      : rng_(rng), cfg_(cfg), w_(cfg.shape.width), h_(cfg.shape.height) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int randint(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>()(rng_); }

  bool in_bounds(const Pt& p) const {
    return p.x() >= kMargin && p.y() >= kMargin && p.x() <= w_ - 1 - kMargin && p.y() <= h_ - 1 - kMargin;
  }
  bool all_in_bounds(const std::vector<Pt>& pts) const {
    return std::all_of(pts.begin(), pts.end(), [this](const Pt& p) { return in_bounds(p); });
  }
  static bool well_separated(const std::vector<Pt>& pts, double gap = kMinCornerGap) {
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j)
        if ((pts[i] - pts[j]).cast<double>().norm() < gap) return false;
    return true;
  }
  static Pt round(const Vec2& v) { return {static_cast<int>(std::lround(v.x())), static_cast<int>(std::lround(v.y()))}; }

  int background() { return randint(0, 255); }
  // Gray level at least 60 away from every level in `avoid`.
  int contrasting(std::initializer_list<int> avoid) {
    for (;;) {
      const int c = randint(0, 255);
      if (std::all_of(avoid.begin(), avoid.end(), [c](int a) { return std::abs(c - a) >= 60; })) return c;
    }
  }
  // Not always satisfiable; falls back to the most distant of 200 draws.
  int contrasting(const std::vector<int>& avoid) {
    int best = 0, best_gap = -1;
    for (int i = 0; i < 200; ++i) {
      const int c = randint(0, 255);
      int gap = 256;
      for (int a : avoid) gap = std::min(gap, std::abs(c - a));
      if (gap >= 50) return c;
      if (gap > best_gap) {
        best = c;
        best_gap = gap;
      }
    }
    return best;
  }

  static std::vector<cv::Point> cv_points(const std::vector<Pt>& pts) {
    std::vector<cv::Point> out;
    for (const auto& p : pts) out.emplace_back(p.x(), p.y());
    return out;
  }

  double size() const { return std::min(w_, h_); }
  int width() const { return w_; }
  int height() const { return h_; }
  const SyntheticConfig& cfg() const { return cfg_; }

 private:
  std::mt19937_64& rng_;
  const SyntheticConfig& cfg_;
  int w_, h_;
};

double vertex_angle(const Pt& prev, const Pt& at, const Pt& next) {
  const Vec2 a = (prev - at).cast<double>(), b = (next - at).cast<double>();
  return std::acos(std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0));
}

bool segments_too_close(const Pt& p0, const Pt& p1, const Pt& q0, const Pt& q1, double gap) {
  auto point_segment = [](const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
  };
  const Vec2 a = p0.cast<double>(), b = p1.cast<double>(), c = q0.cast<double>(), d = q1.cast<double>();
  auto cross = [](const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); };
  const double d1 = cross(b - a, c - a), d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c), d4 = cross(d - c, b - c);
  if (((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0))) return true;
  return std::min({point_segment(a, c, d), point_segment(b, c, d), point_segment(c, a, b),
                   point_segment(d, a, b)}) < gap;
}

struct Drawn {
  cv::Mat canvas;
  std::vector<Pt> points;
  std::vector<std::vector<Pt>> primitives;
};

Drawn draw_polygon(Renderer& r) {
  for (;;) {
    const int bg = r.background();
    const int n = r.randint(3, 5);
    const double rmax = r.size() / 2 - kMargin;
    const double radius = r.uniform(0.5, 1.0) * rmax;
    const Vec2 center(r.uniform(radius * 0.6 + kMargin, r.width() - 1 - kMargin - radius * 0.6),
                      r.uniform(radius * 0.6 + kMargin, r.height() - 1 - kMargin - radius * 0.6));
    std::vector<double> angles;
    for (int i = 0; i < n; ++i) angles.push_back(r.uniform(0, 2 * kPi));
    std::sort(angles.begin(), angles.end());
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      const double gap = i + 1 < n ? angles[i + 1] - angles[i] : angles[0] + 2 * kPi - angles[i];
      ok = ok && gap > 0.5;
    }
    if (!ok) continue;
    std::vector<Pt> v;
    for (double a : angles) v.push_back(Renderer::round(center + r.uniform(0.5, 1.0) * radius * Vec2(std::cos(a), std::sin(a))));
    if (!r.all_in_bounds(v) || !Renderer::well_separated(v)) continue;
    for (int i = 0; i < n && ok; ++i) {
      const double ang = vertex_angle(v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
      ok = ang > 15.0 * kPi / 180 && ang < 160.0 * kPi / 180;
    }
    if (!ok) continue;
    Drawn d;
    d.canvas = cv::Mat(r.height(), r.width(), CV_8UC1, cv::Scalar(bg));
    cv::fillPoly(d.canvas, std::vector<std::vector<cv::Point>>{Renderer::cv_points(v)},
                 cv::Scalar(r.contrasting({bg})), cv::LINE_AA);
    d.points = v;
    d.primitives.push_back(v);
    return d;
  }
}

Drawn draw_segments(Renderer& r) {
  for (;;) {
    const int bg = r.background();
    const int n = r.randint(1, 3);
    std::vector<std::pair<Pt, Pt>> segs;
    for (int i = 0; i < n; ++i) {
      Pt a(r.randint(kMargin, r.width() - 1 - kMargin), r.randint(kMargin, r.height() - 1 - kMargin));
      Pt b(r.randint(kMargin, r.width() - 1 - kMargin), r.randint(kMargin, r.height() - 1 - kMargin));
      segs.emplace_back(a, b);
    }
    bool ok = true;
    std::vector<Pt> ends;
    for (std::size_t i = 0; i < segs.size() && ok; ++i) {
      ok = (segs[i].first - segs[i].second).cast<double>().norm() >= 12;
      for (std::size_t j = 0; j < i && ok; ++j) {
        ok = !segments_too_close(segs[i].first, segs[i].second, segs[j].first, segs[j].second, 4.0);
      }
      ends.push_back(segs[i].first);
      ends.push_back(segs[i].second);
    }
    if (!ok || !Renderer::well_separated(ends)) continue;
    Drawn d;
    d.canvas = cv::Mat(r.height(), r.width(), CV_8UC1, cv::Scalar(bg));
    for (const auto& [a, b] : segs) {
      cv::line(d.canvas, {a.x(), a.y()}, {b.x(), b.y()}, cv::Scalar(r.contrasting({bg})), r.randint(1, 2), cv::LINE_AA);
      d.primitives.push_back({a, b});
    }
    d.points = ends;
    return d;
  }
}

Drawn draw_star(Renderer& r) {
  for (;;) {
    const int bg = r.background();
    const int n = r.randint(3, 5);
    const Pt c(r.randint(kMargin + 8, r.width() - 1 - kMargin - 8), r.randint(kMargin + 8, r.height() - 1 - kMargin - 8));
    std::vector<double> angles;
    for (int i = 0; i < n; ++i) angles.push_back(r.uniform(0, 2 * kPi));
    std::sort(angles.begin(), angles.end());
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      const double gap = i + 1 < n ? angles[i + 1] - angles[i] : angles[0] + 2 * kPi - angles[i];
      ok = ok && gap > 0.6;
    }
    if (!ok) continue;
    std::vector<Pt> pts{c};
    for (double a : angles) {
      const double len = r.uniform(0.3, 0.5) * r.size();
      pts.push_back(Renderer::round(c.cast<double>() + len * Vec2(std::cos(a), std::sin(a))));
    }
    if (!r.all_in_bounds(pts) || !Renderer::well_separated(pts, 8.0)) continue;
    Drawn d;
    d.canvas = cv::Mat(r.height(), r.width(), CV_8UC1, cv::Scalar(bg));
    const int color = r.contrasting({bg});
    const int thickness = r.randint(1, 2);
    for (std::size_t i = 1; i < pts.size(); ++i) {
      cv::line(d.canvas, {c.x(), c.y()}, {pts[i].x(), pts[i].y()}, cv::Scalar(color), thickness, cv::LINE_AA);
      d.primitives.push_back({c, pts[i]});
    }
    d.points = pts;
    return d;
  }
}

Drawn draw_checkerboard(Renderer& r) {
  for (;;) {
    const int bg = r.background();
    const int rows = r.cfg().checkerboard_rows > 0 ? r.cfg().checkerboard_rows : r.randint(2, 4);
    const int cols = r.cfg().checkerboard_cols > 0 ? r.cfg().checkerboard_cols : r.randint(2, 4);
    const double cell = r.uniform(0.55, 0.85) * (r.size() - 2 * kMargin) / std::max(rows, cols);
    if (cell < 8) continue;
    const double angle = r.uniform(-0.4, 0.4);
    const double shear = r.uniform(-0.15, 0.15);
    Eigen::Matrix2d a;
    a << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    Eigen::Matrix2d s;
    s << 1, shear, 0, 1;
    a = a * s;
    const Vec2 board_center(cols * cell / 2, rows * cell / 2);
    const Vec2 center(r.uniform(0.4, 0.6) * (r.width() - 1), r.uniform(0.4, 0.6) * (r.height() - 1));
    std::vector<Pt> grid;
    for (int i = 0; i <= rows; ++i)
      for (int j = 0; j <= cols; ++j) grid.push_back(Renderer::round(center + a * (Vec2(j * cell, i * cell) - board_center)));
    if (!r.all_in_bounds(grid) || !Renderer::well_separated(grid)) continue;
    Drawn d;
    d.canvas = cv::Mat(r.height(), r.width(), CV_8UC1, cv::Scalar(bg));
    const int c1 = r.contrasting({bg});
    const int c2 = r.contrasting({bg, c1});
    auto at = [&](int i, int j) { return grid[i * (cols + 1) + j]; };
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        std::vector<Pt> quad{at(i, j), at(i, j + 1), at(i + 1, j + 1), at(i + 1, j)};
        cv::fillConvexPoly(d.canvas, Renderer::cv_points(quad), cv::Scalar((i + j) % 2 ? c2 : c1), cv::LINE_8);
        d.primitives.push_back(quad);
      }
    }
    d.points = grid;
    return d;
  }
}

Drawn draw_stripes(Renderer& r) {
  for (;;) {
    const int bg = r.background();
    const int n = r.randint(2, 4);
    std::vector<double> widths, gaps;
    double total = 0;
    for (int i = 0; i < n; ++i) {
      widths.push_back(r.uniform(5, 10));
      total += widths.back();
      if (i + 1 < n) {
        gaps.push_back(r.uniform(5, 10));
        total += gaps.back();
      }
    }
    const double angle = r.uniform(-kPi / 2, kPi / 2);
    const Eigen::Matrix2d rot = Eigen::Rotation2Dd(angle).toRotationMatrix();
    const Vec2 center(r.uniform(0.4, 0.6) * (r.width() - 1), r.uniform(0.4, 0.6) * (r.height() - 1));
    std::vector<std::vector<Pt>> bars;
    std::vector<Pt> corners;
    double x = -total / 2;
    for (int i = 0; i < n; ++i) {
      const double len = r.uniform(0.4, 0.8) * r.size();
      const double top = r.uniform(-0.1, 0.1) * r.size() - len / 2;
      std::vector<Vec2> local{{x, top}, {x + widths[i], top}, {x + widths[i], top + len}, {x, top + len}};
      std::vector<Pt> bar;
      for (const auto& p : local) bar.push_back(Renderer::round(center + rot * p));
      bars.push_back(bar);
      corners.insert(corners.end(), bar.begin(), bar.end());
      x += widths[i] + (i + 1 < n ? gaps[i] : 0);
    }
    if (!r.all_in_bounds(corners) || !Renderer::well_separated(corners, 5.0)) continue;
    Drawn d;
    d.canvas = cv::Mat(r.height(), r.width(), CV_8UC1, cv::Scalar(bg));
    const int color = r.contrasting({bg});
    for (const auto& bar : bars) {
      cv::fillConvexPoly(d.canvas, Renderer::cv_points(bar), cv::Scalar(color), cv::LINE_8);
      d.primitives.push_back(bar);
    }
    d.points = corners;
    return d;
  }
}

Drawn draw_cube(Renderer& r) {
  for (;;) {
    const int bg = r.background();
    const double phi = r.uniform(0, 2 * kPi);
    std::array<Pt, 3> e;
    for (int k = 0; k < 3; ++k) {
      const double a = phi + k * 2 * kPi / 3 + r.uniform(-0.3, 0.3);
      const double len = r.uniform(0.22, 0.4) * r.size();
      e[k] = Renderer::round(len * Vec2(std::cos(a), std::sin(a)));
    }
    const Pt c(r.randint(kMargin, r.width() - 1 - kMargin), r.randint(kMargin, r.height() - 1 - kMargin));
    std::vector<Pt> verts{c, c + e[0], c + e[1], c + e[2], c + e[0] + e[1], c + e[1] + e[2], c + e[2] + e[0]};
    if (!r.all_in_bounds(verts) || !Renderer::well_separated(verts)) continue;
    Drawn d;
    d.canvas = cv::Mat(r.height(), r.width(), CV_8UC1, cv::Scalar(bg));
    std::vector<int> used{bg};
    for (int k = 0; k < 3; ++k) {
      const Pt& a = e[k];
      const Pt& b = e[(k + 1) % 3];
      std::vector<Pt> face{c, c + a, c + a + b, c + b};
      const int color = r.contrasting(used);
      used.push_back(color);
      cv::fillConvexPoly(d.canvas, Renderer::cv_points(face), cv::Scalar(color), cv::LINE_8);
      d.primitives.push_back(face);
    }
    d.points = verts;
    return d;
  }
}

Drawn draw_ellipses(Renderer& r) {
  const int bg = r.background();
  Drawn d;
  d.canvas = cv::Mat(r.height(), r.width(), CV_8UC1, cv::Scalar(bg));
  const int n = r.randint(1, 3);
  for (int i = 0; i < n; ++i) {
    const cv::Point center(r.randint(0, r.width() - 1), r.randint(0, r.height() - 1));
    const cv::Size axes(r.randint(4, static_cast<int>(r.size() / 3)), r.randint(4, static_cast<int>(r.size() / 3)));
    cv::ellipse(d.canvas, center, axes, r.uniform(0, 180), 0, 360, cv::Scalar(r.contrasting({bg})), cv::FILLED, cv::LINE_AA);
  }
  return d;
}

Drawn draw_noise(Renderer& r) {
  const double mean = r.uniform(0.3, 0.7), spread = r.uniform(0.05, 0.2);
  cv::Mat f(r.height(), r.width(), CV_32F);
  for (int y = 0; y < f.rows; ++y)
    for (int x = 0; x < f.cols; ++x) f.at<float>(y, x) = static_cast<float>(mean + spread * r.normal());
  cv::GaussianBlur(f, f, cv::Size(0, 0), r.uniform(0.5, 1.5));
  Drawn d;
  f.convertTo(d.canvas, CV_8UC1, 255.0);
  return d;
}

}  // namespace

SyntheticSample generate_synthetic(ShapeKind kind, std::mt19937_64& rng, const SyntheticConfig& cfg) {
  if (cfg.shape.width < 32 || cfg.shape.height < 32) {
    throw ValidationError("synthetic images must be at least 32 x 32");
  }
  const std::uint64_t noise_seed = rng();
  Renderer r(rng, cfg);
  Drawn d;
  switch (kind) {
    case ShapeKind::Polygon: d = draw_polygon(r); break;
    case ShapeKind::LineSegments: d = draw_segments(r); break;
    case ShapeKind::Star: d = draw_star(r); break;
    case ShapeKind::Checkerboard: d = draw_checkerboard(r); break;
    case ShapeKind::Stripes: d = draw_stripes(r); break;
    case ShapeKind::Cube: d = draw_cube(r); break;
    case ShapeKind::Ellipse: d = draw_ellipses(r); break;
    case ShapeKind::GaussianNoise: d = draw_noise(r); break;
  }

  cv::Mat f;
  d.canvas.convertTo(f, CV_32F, 1.0 / 255.0);
  if (cfg.photometric_noise) {
    std::mt19937_64 noise(noise_seed);
    auto uniform = [&noise](double lo, double hi) {
      return hi <= lo ? lo : std::uniform_real_distribution<double>(lo, hi)(noise);
    };
    const double sigma = uniform(0.0, cfg.max_blur_sigma);
    if (sigma > 0.05) cv::GaussianBlur(f, f, cv::Size(0, 0), sigma);
    f += uniform(-cfg.max_brightness, cfg.max_brightness);
    const double speckle = uniform(0.0, cfg.max_noise_std);
    std::normal_distribution<double> gauss;
    for (int y = 0; y < f.rows; ++y)
      for (int x = 0; x < f.cols; ++x) f.at<float>(y, x) += static_cast<float>(speckle * gauss(noise));
    cv::min(cv::max(f, 0.0), 1.0, f);
  }

  SyntheticSample out;
  out.kind = kind;
  auto gray = torch::from_blob(f.data, {f.rows, f.cols}, torch::kFloat32).clone();
  out.image = gray.unsqueeze(0).repeat({3, 1, 1}).contiguous();
  for (const auto& p : d.points) out.points.points.push_back({static_cast<double>(p.x()), static_cast<double>(p.y()), 1.0});
  out.primitives = std::move(d.primitives);
  return out;
}

SyntheticSample generate_synthetic(std::mt19937_64& rng, const SyntheticConfig& cfg) {
  static constexpr std::array<double, 8> weights = {0.2, 0.1, 0.1, 0.15, 0.1, 0.15, 0.1, 0.1};
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  return generate_synthetic(kAllShapeKinds[pick(rng)], rng, cfg);
}

}  // namespace yolopoint

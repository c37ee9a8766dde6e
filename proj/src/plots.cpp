#include "yolopoint/plots.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "yolopoint/data_io.hpp"
#include "yolopoint/errors.hpp"
#include "yolopoint/postprocess.hpp"

namespace yolopoint {

namespace {

const std::vector<cv::Scalar> kPalette = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},
                                          {40, 39, 214},  {189, 103, 148}, {75, 86, 140}};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(3) << v;
  return s.str();
}

struct Axes {
  cv::Rect area;
  double x0, x1, y0, y1;

  cv::Point map(double x, double y) const {
    const double u = (x - x0) / (x1 - x0), v = (y - y0) / (y1 - y0);
    return {area.x + static_cast<int>(std::lround(u * area.width)),
            area.y + area.height - static_cast<int>(std::lround(v * area.height))};
  }
};

void expand(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0;
    hi = 1;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
}

void draw_frame(cv::Mat& img, const Axes& ax, const std::string& title, const std::string& xl,
                const std::string& yl) {
  const cv::Scalar black(0, 0, 0), grid(225, 225, 225);
  for (int i = 0; i <= 5; ++i) {
    const double fx = ax.x0 + (ax.x1 - ax.x0) * i / 5.0, fy = ax.y0 + (ax.y1 - ax.y0) * i / 5.0;
    const cv::Point px = ax.map(fx, ax.y0), py = ax.map(ax.x0, fy);
    cv::line(img, px, {px.x, ax.area.y}, grid, 1);
    cv::line(img, py, {ax.area.x + ax.area.width, py.y}, grid, 1);
    cv::putText(img, fmt(fx), {px.x - 15, px.y + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
    cv::putText(img, fmt(fy), {4, py.y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_AA);
  }
  cv::rectangle(img, ax.area, black, 1);
  cv::putText(img, title, {ax.area.x, 22}, cv::FONT_HERSHEY_SIMPLEX, 0.6, black, 1, cv::LINE_AA);
  cv::putText(img, xl, {ax.area.x + ax.area.width / 2 - 20, img.rows - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
              black, 1, cv::LINE_AA);
  cv::putText(img, yl, {4, ax.area.y - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1, cv::LINE_AA);
}

cv::Mat to_bgr(const torch::Tensor& image) {
  cv::Mat m = mat_from_tensor(image);
  if (m.channels() == 1) cv::cvtColor(m, m, cv::COLOR_GRAY2BGR);
  return m;
}

}  // namespace

cv::Mat line_plot(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                  const std::string& y_label, cv::Size size, bool equal_aspect) {
  cv::Mat img(size, CV_8UC3, cv::Scalar(255, 255, 255));
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ContractError("line_plot: x and y lengths differ in '" + s.name + "'");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  expand(x0, x1);
  expand(y0, y1);
  Axes ax{cv::Rect(60, 40, size.width - 80, size.height - 80), x0, x1, y0, y1};
  if (equal_aspect) {
    const double sx = (x1 - x0) / ax.area.width, sy = (y1 - y0) / ax.area.height;
    if (sx > sy) {
      const double c = 0.5 * (y0 + y1), half = 0.5 * sx * ax.area.height;
      ax.y0 = c - half;
      ax.y1 = c + half;
    } else {
      const double c = 0.5 * (x0 + x1), half = 0.5 * sy * ax.area.width;
      ax.x0 = c - half;
      ax.x1 = c + half;
    }
  }
  draw_frame(img, ax, title, x_label, y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const cv::Scalar color = kPalette[k % kPalette.size()];
    const auto& s = series[k];
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) pts.push_back(ax.map(s.x[i], s.y[i]));
    }
    if (pts.size() == 1) cv::circle(img, pts[0], 3, color, cv::FILLED, cv::LINE_AA);
    if (pts.size() > 1) cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    const cv::Point legend(ax.area.x + ax.area.width - 170, ax.area.y + 18 + 18 * static_cast<int>(k));
    cv::line(img, legend, legend + cv::Point(20, 0), color, 2, cv::LINE_AA);
    cv::putText(img, s.name, legend + cv::Point(26, 4), cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1,
                cv::LINE_AA);
  }
  return img;
}

cv::Mat histogram_plot(const std::vector<double>& values, int bins, const std::string& title, cv::Size size) {
  if (bins < 1) throw ValidationError("histogram needs at least one bin");
  cv::Mat img(size, CV_8UC3, cv::Scalar(255, 255, 255));
  double lo = INFINITY, hi = -INFINITY;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!std::isfinite(lo)) {
    lo = 0;
    hi = 1;
  }
  if (hi - lo < 1e-12) hi = lo + 1;
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    const int b = std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins));
    ++counts[b];
  }
  const int top = std::max(1, *std::max_element(counts.begin(), counts.end()));
  Axes ax{cv::Rect(60, 40, size.width - 80, size.height - 80), lo, hi, 0.0, top * 1.05};
  draw_frame(img, ax, title, "value", "count");
  for (int b = 0; b < bins; ++b) {
    const double l = lo + (hi - lo) * b / bins, r = lo + (hi - lo) * (b + 1) / bins;
    cv::rectangle(img, ax.map(l, counts[b]), ax.map(r, 0.0), kPalette[0], cv::FILLED);
    cv::rectangle(img, ax.map(l, counts[b]), ax.map(r, 0.0), {255, 255, 255}, 1);
  }
  return img;
}

cv::Mat trajectory_plot(const std::vector<std::pair<std::string, Trajectory>>& trajectories,
                        const std::string& title) {
  std::vector<Series> series;
  for (const auto& [name, t] : trajectories) {
    Series s{name, {}, {}};
    for (const auto& p : t.poses) {
      s.x.push_back(p.translation.x());
      s.y.push_back(p.translation.z());
    }
    series.push_back(std::move(s));
  }
  return line_plot(series, title, "x [m]", "z [m]", {800, 700}, true);
}

cv::Mat error_over_time_plot(const std::vector<std::pair<std::string, Trajectory>>& estimates,
                             const Trajectory& ground_truth) {
  std::vector<Series> series;
  for (const auto& [name, t] : estimates) {
    if (t.size() != ground_truth.size()) throw ContractError("error plot: trajectory length mismatch");
    Series s{name, {}, {}};
    for (std::size_t i = 0; i < t.size(); ++i) {
      s.x.push_back(static_cast<double>(i));
      s.y.push_back((t.poses[i].translation - ground_truth.poses[i].translation).norm());
    }
    series.push_back(std::move(s));
  }
  return line_plot(series, "position error over time", "frame", "error [m]");
}

cv::Mat match_plot(const torch::Tensor& image_a, const torch::Tensor& image_b, const KeypointSet& a,
                   const KeypointSet& b, const MatchSet& matches, const Homography* h, double eps) {
  const cv::Mat ma = to_bgr(image_a), mb = to_bgr(image_b);
  cv::Mat canvas(std::max(ma.rows, mb.rows), ma.cols + mb.cols, CV_8UC3, cv::Scalar(0, 0, 0));
  ma.copyTo(canvas(cv::Rect(0, 0, ma.cols, ma.rows)));
  mb.copyTo(canvas(cv::Rect(ma.cols, 0, mb.cols, mb.rows)));
  auto pa = [&](const Keypoint& k) { return cv::Point2d(k.x, k.y); };
  auto pb = [&](const Keypoint& k) { return cv::Point2d(k.x + ma.cols, k.y); };
  for (const auto& k : a.points) cv::circle(canvas, pa(k), 2, {255, 200, 0}, 1, cv::LINE_AA);
  for (const auto& k : b.points) cv::circle(canvas, pb(k), 2, {255, 200, 0}, 1, cv::LINE_AA);
  for (const auto& m : matches.pairs) {
    const Keypoint& ka = a.points.at(m.index_a);
    const Keypoint& kb = b.points.at(m.index_b);
    bool ok = true;
    if (h) {
      try {
        ok = (h->apply({ka.x, ka.y}) - Eigen::Vector2d(kb.x, kb.y)).norm() <= eps;
      } catch (const DegeneratePointError&) {
        ok = false;
      }
    }
    cv::line(canvas, pa(ka), pb(kb), ok ? cv::Scalar(0, 200, 0) : cv::Scalar(0, 0, 230), 1, cv::LINE_AA);
  }
  return canvas;
}

cv::Mat detection_plot(const torch::Tensor& image, const KeypointSet& keypoints, const DetectionSet& detections) {
  cv::Mat img = to_bgr(image);
  for (const auto& d : detections.boxes) {
    const cv::Scalar color = detections.is_dynamic(d.class_id) ? cv::Scalar(0, 0, 230) : cv::Scalar(230, 120, 0);
    cv::rectangle(img, cv::Point2d(d.x1, d.y1), cv::Point2d(d.x2, d.y2), color, 2);
    std::string label = d.class_id >= 0 && static_cast<std::size_t>(d.class_id) < detections.class_names.size()
                            ? detections.class_names[d.class_id]
                            : std::to_string(d.class_id);
    cv::putText(img, label + " " + fmt(d.confidence), cv::Point2d(d.x1, std::max(10.0, d.y1 - 3)),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, color, 1, cv::LINE_AA);
  }
  const KeypointSet kept = filter_dynamic_keypoints(keypoints, detections);
  for (const auto& k : keypoints.points) cv::circle(img, cv::Point2d(k.x, k.y), 2, {0, 0, 230}, cv::FILLED);
  for (const auto& k : kept.points) cv::circle(img, cv::Point2d(k.x, k.y), 2, {0, 200, 0}, cv::FILLED);
  return img;
}

void save_plot(const std::filesystem::path& path, const cv::Mat& plot) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), plot)) throw IngestionError("cannot write plot " + path.string());
}

}  // namespace yolopoint

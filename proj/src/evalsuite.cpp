#include "yolopoint/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <opencv2/calib3d.hpp>

#include "yolopoint/data_io.hpp"
#include "yolopoint/errors.hpp"

namespace yolopoint {

namespace {

double squared_distance(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - b[k];
    s += d * d;
  }
  return s;
}

void require_descriptors(const KeypointSet& a, const KeypointSet& b, const char* who) {
  const bool ok_a = a.empty() || a.has_descriptors();
  const bool ok_b = b.empty() || b.has_descriptors();
  if (!ok_a || !ok_b) throw ContractError(std::string(who) + ": keypoints carry no descriptors");
  if (!a.empty() && !b.empty() && a.descriptor_dim() != b.descriptor_dim()) {
    throw ContractError(std::string(who) + ": descriptor lengths differ");
  }
}

struct Nearest {
  int index = -1;
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
};

Nearest nearest_descriptor(const std::vector<float>& query,
                           const std::vector<std::vector<float>>& pool) {
  Nearest n;
  for (std::size_t j = 0; j < pool.size(); ++j) {
    const double d = squared_distance(query, pool[j]);
    if (d < n.best) {
      n.second = n.best;
      n.best = d;
      n.index = static_cast<int>(j);
    } else if (d < n.second) {
      n.second = d;
    }
  }
  return n;
}

Eigen::Vector2d as_vec(const Keypoint& kp) { return {kp.x, kp.y}; }

// Warped position, or nullopt for points sent to infinity.
std::optional<Eigen::Vector2d> try_warp(const Homography& h, const Keypoint& kp) {
  try {
    return h.apply(as_vec(kp));
  } catch (const DegeneratePointError&) {
    return std::nullopt;
  }
}

}  // namespace

MatchSet match_descriptors(const KeypointSet& a, const KeypointSet& b, double ratio) {
  require_descriptors(a, b, "match_descriptors");
  MatchSet out;
  if (a.empty() || b.empty()) return out;
  std::vector<int> b_to_a(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) {
    b_to_a[j] = nearest_descriptor(b.descriptors[j], a.descriptors).index;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Nearest n = nearest_descriptor(a.descriptors[i], b.descriptors);
    if (n.index < 0 || b_to_a[n.index] != static_cast<int>(i)) continue;
    if (ratio > 0 && !(std::sqrt(n.best) < ratio * std::sqrt(n.second))) continue;
    out.pairs.push_back({static_cast<int>(i), n.index, std::sqrt(n.best)});
  }
  return out;
}

double repeatability(const KeypointSet& a, const KeypointSet& b, const Homography& h, double eps,
                     ImageShape shape_a, ImageShape shape_b) {
  const Homography h_inv = h.inverse();
  // points of A seen in B's frame and vice versa, restricted to the other image
  std::vector<Eigen::Vector2d> a_in_b, b_kept;
  std::vector<Eigen::Vector2d> b_in_a, a_kept;
  for (const auto& kp : a.points) {
    auto p = try_warp(h, kp);
    if (p && inside_image(*p, shape_b)) {
      a_in_b.push_back(*p);
      a_kept.push_back(as_vec(kp));
    }
  }
  for (const auto& kp : b.points) {
    auto p = try_warp(h_inv, kp);
    if (p && inside_image(*p, shape_a)) {
      b_in_a.push_back(*p);
      b_kept.push_back(as_vec(kp));
    }
  }
  const std::size_t total = a_in_b.size() + b_in_a.size();
  if (total == 0) throw UndefinedMetricError("repeatability: no keypoints in the shared region");

  const double eps2 = eps * eps;
  auto count_repeated = [eps2](const std::vector<Eigen::Vector2d>& warped,
                               const std::vector<Eigen::Vector2d>& other) {
    std::size_t n = 0;
    for (const auto& p : warped) {
      for (const auto& q : other) {
        if ((p - q).squaredNorm() <= eps2) {
          ++n;
          break;
        }
      }
    }
    return n;
  };
  const std::size_t repeated = count_repeated(a_in_b, b_kept) + count_repeated(b_in_a, a_kept);
  return static_cast<double>(repeated) / static_cast<double>(total);
}

HomographyEstimate homography_estimation(const KeypointSet& a, const KeypointSet& b,
                                         const Homography& true_h, ImageShape image_shape,
                                         const std::vector<double>& eps_list) {
  HomographyEstimate out;
  out.correct.assign(eps_list.size(), false);
  const MatchSet matches = match_descriptors(a, b);
  out.matches = static_cast<int>(matches.pairs.size());
  if (matches.pairs.size() < 4) return out;

  std::vector<cv::Point2d> src, dst;
  for (const auto& m : matches.pairs) {
    src.emplace_back(a.points[m.index_a].x, a.points[m.index_a].y);
    dst.emplace_back(b.points[m.index_b].x, b.points[m.index_b].y);
  }
  cv::Mat mask;
  cv::Mat est = cv::findHomography(src, dst, cv::RANSAC, 3.0, mask, 2000, 0.995);
  if (est.empty()) return out;
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = est.at<double>(r, c);
  try {
    const Homography fitted(m);
    out.h = fitted.matrix();
    out.inliers = cv::countNonZero(mask);
    const double w = image_shape.width - 1.0, hgt = image_shape.height - 1.0;
    const std::array<Eigen::Vector2d, 4> corners = {
        Eigen::Vector2d(0, 0), Eigen::Vector2d(w, 0), Eigen::Vector2d(0, hgt), Eigen::Vector2d(w, hgt)};
    double err = 0;
    for (const auto& c : corners) err += (fitted.apply(c) - true_h.apply(c)).norm();
    out.mean_corner_error = err / 4.0;
  } catch (const Error&) {
    return out;
  }
  out.estimated = true;
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    out.correct[i] = out.mean_corner_error <= eps_list[i];
  }
  return out;
}

double nn_map(const KeypointSet& a, const KeypointSet& b, const Homography& h, double eps) {
  require_descriptors(a, b, "nn_map");
  if (a.empty() || b.empty()) throw UndefinedMetricError("nn_map: no candidate matches");

  struct Ranked {
    double distance;
    int index;
    bool correct;
  };
  std::vector<Ranked> ranked;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Nearest n = nearest_descriptor(a.descriptors[i], b.descriptors);
    const auto p = try_warp(h, a.points[i]);
    const bool correct = p && (*p - as_vec(b.points[n.index])).norm() <= eps;
    ranked.push_back({std::sqrt(n.best), static_cast<int>(i), correct});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& x, const Ranked& y) { return x.distance < y.distance; });
  const auto positives = std::count_if(ranked.begin(), ranked.end(), [](const Ranked& r) { return r.correct; });
  if (positives == 0) return 0.0;

  double area = 0, prev_recall = 0, prev_precision = 1;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k].correct) ++tp;
    const double recall = static_cast<double>(tp) / positives;
    const double precision = static_cast<double>(tp) / (k + 1);
    area += (recall - prev_recall) * (precision + prev_precision) / 2;
    prev_recall = recall;
    prev_precision = precision;
  }
  return area;
}

double matching_score(const KeypointSet& a, const KeypointSet& b, const Homography& h, double eps,
                      ImageShape shape_a, ImageShape shape_b) {
  require_descriptors(a, b, "matching_score");
  const Homography h_inv = h.inverse();
  std::size_t shared_a = 0, shared_b = 0;
  for (const auto& kp : a.points) {
    auto p = try_warp(h, kp);
    if (p && inside_image(*p, shape_b)) ++shared_a;
  }
  for (const auto& kp : b.points) {
    auto p = try_warp(h_inv, kp);
    if (p && inside_image(*p, shape_a)) ++shared_b;
  }
  if (shared_a == 0 && shared_b == 0) {
    throw UndefinedMetricError("matching_score: empty shared region");
  }
  std::size_t correct = 0;
  for (const auto& m : match_descriptors(a, b).pairs) {
    const auto p = try_warp(h, a.points[m.index_a]);
    if (p && inside_image(*p, shape_b) && (*p - as_vec(b.points[m.index_b])).norm() <= eps) ++correct;
  }
  double sum = 0;
  int directions = 0;
  for (std::size_t shared : {shared_a, shared_b}) {
    if (shared == 0) continue;
    sum += std::min(1.0, static_cast<double>(correct) / shared);
    ++directions;
  }
  return sum / directions;
}

void EvalConfig::validate() const {
  bool ok = resolution.height > 0 && resolution.width > 0 && max_points > 0 && nms_radius > 0 &&
            correct_dist_eps > 0 && !homography_eps_list.empty();
  for (double e : homography_eps_list) ok = ok && e > 0;
  if (!ok) throw ValidationError("evaluation settings must all be positive");
}

namespace {

Eigen::Matrix3d read_matrix3(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IngestionError("missing homography file " + path.string());
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (!(is >> m(r, c))) throw IngestionError("malformed homography file " + path.string());
  return m;
}

std::filesystem::path find_image(const std::filesystem::path& dir, int index) {
  for (const char* ext : {".ppm", ".png", ".jpg", ".pgm"}) {
    auto p = dir / (std::to_string(index) + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw IngestionError("missing image " + std::to_string(index) + " in scene " + dir.string());
}

Homography rescaled(const Homography& h, ImageShape from_a, ImageShape from_b, ImageShape to) {
  Eigen::Matrix3d sa = Eigen::Matrix3d::Identity(), sb = Eigen::Matrix3d::Identity();
  sa(0, 0) = static_cast<double>(to.width) / from_a.width;
  sa(1, 1) = static_cast<double>(to.height) / from_a.height;
  sb(0, 0) = static_cast<double>(to.width) / from_b.width;
  sb(1, 1) = static_cast<double>(to.height) / from_b.height;
  return Homography(sb * h.matrix() * sa.inverse());
}

std::string format_value(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(6) << v;
  return ss.str();
}

}  // namespace

HPatchesScene load_hpatches_scene(const std::filesystem::path& scene_dir) {
  if (!std::filesystem::is_directory(scene_dir)) {
    throw IngestionError("scene directory not found: " + scene_dir.string());
  }
  HPatchesScene scene;
  scene.name = scene_dir.filename().string();
  const auto first = find_image(scene_dir, 1);
  for (int k = 2; k <= 6; ++k) {
    scene.pairs.push_back({first, find_image(scene_dir, k),
                           Homography(read_matrix3(scene_dir / ("H_1_" + std::to_string(k))))});
  }
  return scene;
}

std::vector<HPatchesScene> load_hpatches(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw IngestionError("HPatches root not found: " + root.string());
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    const auto name = e.path().filename().string();
    if (e.is_directory() && (name.rfind("i_", 0) == 0 || name.rfind("v_", 0) == 0)) {
      dirs.push_back(e.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<HPatchesScene> scenes;
  for (const auto& d : dirs) scenes.push_back(load_hpatches_scene(d));
  if (scenes.empty()) throw IngestionError("no i_*/v_* scenes under " + root.string());
  return scenes;
}

std::vector<MetricRow> evaluate_hpatches(const std::vector<HPatchesScene>& scenes,
                                         const KeypointDetector& detect, const EvalConfig& cfg) {
  cfg.validate();
  std::vector<MetricRow> rows;
  auto truncate = [&cfg](KeypointSet s) {
    if (s.size() > static_cast<std::size_t>(cfg.max_points)) {
      s.points.resize(cfg.max_points);
      if (s.descriptors.size() > static_cast<std::size_t>(cfg.max_points)) s.descriptors.resize(cfg.max_points);
    }
    return s;
  };
  for (const auto& scene : scenes) {
    std::map<std::string, std::pair<double, int>> acc;
    auto add = [&acc](const std::string& k, double v) {
      auto& [sum, n] = acc[k];
      sum += v;
      ++n;
    };
    ImageShape native_a{};
    torch::Tensor image_a;
    KeypointSet kps_a;
    for (const auto& pair : scene.pairs) {
      if (!image_a.defined()) {
        native_a = image_shape_of(pair.image_a);
        image_a = load_image(pair.image_a, cfg.resolution);
        kps_a = truncate(detect(image_a));
      }
      const ImageShape native_b = image_shape_of(pair.image_b);
      const auto image_b = load_image(pair.image_b, cfg.resolution);
      const KeypointSet kps_b = truncate(detect(image_b));
      const Homography h = rescaled(pair.h, native_a, native_b, cfg.resolution);

      try {
        add("repeatability", repeatability(kps_a, kps_b, h, cfg.correct_dist_eps, cfg.resolution));
      } catch (const UndefinedMetricError&) {
        add("repeatability_undefined", 1.0);
      }
      const auto est = homography_estimation(kps_a, kps_b, h, cfg.resolution, cfg.homography_eps_list);
      for (std::size_t i = 0; i < cfg.homography_eps_list.size(); ++i) {
        std::ostringstream key;
        key << "homography_eps" << cfg.homography_eps_list[i];
        add(key.str(), est.correct[i] ? 1.0 : 0.0);
      }
      if (!est.estimated) add("homography_degenerate", 1.0);
      try {
        add("nn_map", nn_map(kps_a, kps_b, h, cfg.correct_dist_eps));
      } catch (const UndefinedMetricError&) {
        add("nn_map_undefined", 1.0);
      }
      try {
        add("matching_score", matching_score(kps_a, kps_b, h, cfg.correct_dist_eps, cfg.resolution));
      } catch (const UndefinedMetricError&) {
        add("matching_score_undefined", 1.0);
      }
    }
    for (const auto& [metric, v] : acc) {
      const bool is_count = metric.find("_undefined") != std::string::npos ||
                            metric.find("_degenerate") != std::string::npos;
      rows.push_back({scene.name, metric, is_count ? v.first : v.first / v.second});
    }
  }
  return rows;
}

void write_metric_rows(const std::filesystem::path& path, const std::vector<MetricRow>& rows,
                       const std::vector<std::string>& header_comments) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IngestionError("cannot write results file " + path.string());
  for (const auto& c : header_comments) os << "# " << c << '\n';
  os << "scene,metric,value\n";
  for (const auto& r : rows) os << r.scene << ',' << r.metric << ',' << format_value(r.value) << '\n';
}

std::vector<MetricRow> read_metric_rows(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IngestionError("cannot open results file " + path.string());
  std::vector<MetricRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line == "scene,metric,value") continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw IngestionError("malformed results line in " + path.string() + ": " + line);
    }
    rows.push_back({line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1), std::stod(line.substr(c2 + 1))});
  }
  return rows;
}

std::string summary_table(const std::vector<MetricRow>& rows) {
  std::map<std::string, std::array<std::pair<double, int>, 3>> acc;  // illum, view, all
  for (const auto& r : rows) {
    auto& slot = acc[r.metric];
    const int group = r.scene.rfind("i_", 0) == 0 ? 0 : (r.scene.rfind("v_", 0) == 0 ? 1 : -1);
    if (group >= 0) {
      slot[group].first += r.value;
      ++slot[group].second;
    }
    slot[2].first += r.value;
    ++slot[2].second;
  }
  std::ostringstream ss;
  ss << std::left << std::setw(28) << "metric" << std::setw(14) << "illumination" << std::setw(12)
     << "viewpoint" << "all" << '\n';
  auto cell = [](const std::pair<double, int>& p) {
    return p.second == 0 ? std::string("-") : format_value(p.first / p.second);
  };
  for (const auto& [metric, s] : acc) {
    ss << std::left << std::setw(28) << metric << std::setw(14) << cell(s[0]) << std::setw(12)
       << cell(s[1]) << cell(s[2]) << '\n';
  }
  return ss.str();
}

}  // namespace yolopoint

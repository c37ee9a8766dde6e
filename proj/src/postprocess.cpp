#include "yolopoint/postprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "yolopoint/errors.hpp"

namespace yolopoint {

KeypointSet extract_keypoints(const torch::Tensor& heatmap, double conf_threshold, int nms_radius,
                              int max_points) {
  if (heatmap.dim() != 2) throw ShapeError("extract_keypoints expects an H x W heatmap");
  const auto heat = heatmap.detach().to(torch::kDouble).contiguous();
  const int h = static_cast<int>(heat.size(0));
  const int w = static_cast<int>(heat.size(1));
  const double* v = heat.data_ptr<double>();

  std::vector<int> candidates;
  for (int i = 0; i < h * w; ++i) {
    if (v[i] > conf_threshold) candidates.push_back(i);
  }
  // flat index order equals (y, x) lexicographic order
  std::stable_sort(candidates.begin(), candidates.end(),
                   [v](int a, int b) { return v[a] > v[b]; });

  KeypointSet out;
  if (max_points <= 0) return out;
  std::vector<std::uint8_t> suppressed(static_cast<std::size_t>(h) * w, 0);
  const int r = std::max(nms_radius, 0);
  for (int idx : candidates) {
    if (suppressed[idx]) continue;
    const int y = idx / w, x = idx % w;
    out.points.push_back({static_cast<double>(x), static_cast<double>(y), v[idx]});
    if (static_cast<int>(out.points.size()) >= max_points) break;
    for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
      std::fill(suppressed.begin() + yy * w + std::max(0, x - r),
                suppressed.begin() + yy * w + std::min(w - 1, x + r) + 1, 1);
    }
  }
  return out;
}

KeypointSet sample_descriptors(const torch::Tensor& coarse_descriptors, const KeypointSet& keypoints) {
  torch::Tensor grid = coarse_descriptors.dim() == 4 ? coarse_descriptors.squeeze(0) : coarse_descriptors;
  if (grid.dim() != 3) throw ShapeError("sample_descriptors expects a D x Hc x Wc grid");
  grid = grid.detach().to(torch::kDouble).contiguous();
  const auto dim = grid.size(0), rows = grid.size(1), cols = grid.size(2);
  const double* g = grid.data_ptr<double>();
  const auto plane = rows * cols;

  KeypointSet out;
  out.points = keypoints.points;
  out.descriptors.reserve(keypoints.size());
  for (const auto& kp : keypoints.points) {
    const double u = std::clamp((kp.x + 0.5) / kCellSize - 0.5, 0.0, static_cast<double>(cols - 1));
    const double v = std::clamp((kp.y + 0.5) / kCellSize - 0.5, 0.0, static_cast<double>(rows - 1));
    const auto c0 = static_cast<std::int64_t>(std::floor(u));
    const auto r0 = static_cast<std::int64_t>(std::floor(v));
    const auto c1 = std::min(c0 + 1, cols - 1);
    const auto r1 = std::min(r0 + 1, rows - 1);
    const double fu = u - c0, fv = v - r0;
    std::vector<double> d(dim);
    double norm2 = 0;
    for (std::int64_t k = 0; k < dim; ++k) {
      const double* p = g + k * plane;
      const double top = p[r0 * cols + c0] * (1 - fu) + p[r0 * cols + c1] * fu;
      const double bottom = p[r1 * cols + c0] * (1 - fu) + p[r1 * cols + c1] * fu;
      d[k] = top * (1 - fv) + bottom * fv;
      norm2 += d[k] * d[k];
    }
    const double norm = std::max(std::sqrt(norm2), 1e-12);
    std::vector<float> desc(dim);
    for (std::int64_t k = 0; k < dim; ++k) desc[k] = static_cast<float>(d[k] / norm);
    out.descriptors.push_back(std::move(desc));
  }
  return out;
}

double box_iou(const Detection& a, const Detection& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

DetectionSet decode_boxes(const std::vector<torch::Tensor>& object_raw,
                          const std::array<std::vector<Anchor>, kNumDetectionScales>& anchors,
                          double conf_threshold, double iou_threshold, ImageShape image_shape) {
  if (object_raw.size() != static_cast<std::size_t>(kNumDetectionScales)) {
    throw ShapeError("decode_boxes expects one raw tensor per detection scale");
  }
  std::vector<Detection> candidates;
  for (int s = 0; s < kNumDetectionScales; ++s) {
    torch::Tensor raw = object_raw[s].dim() == 5 ? object_raw[s].squeeze(0) : object_raw[s];
    if (raw.dim() != 4) throw ShapeError("decode_boxes expects A x h x w x (5+C) per scale");
    raw = raw.detach().to(torch::kDouble).contiguous();
    const auto na = raw.size(0), gh = raw.size(1), gw = raw.size(2), no = raw.size(3);
    if (na != static_cast<std::int64_t>(anchors[s].size())) {
      throw ShapeError("anchor count does not match raw output");
    }
    const double stride = kDetectionStrides[s];
    const double* p = raw.data_ptr<double>();
    for (std::int64_t a = 0; a < na; ++a) {
      for (std::int64_t y = 0; y < gh; ++y) {
        for (std::int64_t x = 0; x < gw; ++x) {
          const double* t = p + ((a * gh + y) * gw + x) * no;
          const double obj = sigmoid(t[4]);
          if (obj <= conf_threshold) continue;
          int best = 0;
          for (int c = 1; c < no - 5; ++c) {
            if (t[5 + c] > t[5 + best]) best = c;
          }
          const double conf = obj * sigmoid(t[5 + best]);
          if (conf <= conf_threshold) continue;
          const double cx = (sigmoid(t[0]) * 2 - 0.5 + x) * stride;
          const double cy = (sigmoid(t[1]) * 2 - 0.5 + y) * stride;
          const double bw = std::pow(sigmoid(t[2]) * 2, 2) * anchors[s][a].w;
          const double bh = std::pow(sigmoid(t[3]) * 2, 2) * anchors[s][a].h;
          Detection d{cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2, best, conf};
          if (image_shape.width > 0 && image_shape.height > 0) {
            d.x1 = std::clamp(d.x1, 0.0, image_shape.width - 1.0);
            d.x2 = std::clamp(d.x2, 0.0, image_shape.width - 1.0);
            d.y1 = std::clamp(d.y1, 0.0, image_shape.height - 1.0);
            d.y2 = std::clamp(d.y2, 0.0, image_shape.height - 1.0);
          }
          if (d.x2 > d.x1 && d.y2 > d.y1) candidates.push_back(d);
        }
      }
    }
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  DetectionSet out;
  for (const auto& c : candidates) {
    bool keep = true;
    for (const auto& k : out.boxes) {
      if (k.class_id == c.class_id && box_iou(k, c) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) out.boxes.push_back(c);
  }
  return out;
}

KeypointSet filter_dynamic_keypoints(const KeypointSet& keypoints, const DetectionSet& detections) {
  std::vector<const Detection*> dynamic;
  for (const auto& d : detections.boxes) {
    if (detections.is_dynamic(d.class_id)) dynamic.push_back(&d);
  }
  KeypointSet out;
  const bool with_desc = keypoints.has_descriptors();
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const auto& kp = keypoints.points[i];
    const bool inside = std::any_of(dynamic.begin(), dynamic.end(), [&](const Detection* d) {
      return kp.x >= d->x1 && kp.x <= d->x2 && kp.y >= d->y1 && kp.y <= d->y2;
    });
    if (inside) continue;
    out.points.push_back(kp);
    if (with_desc) out.descriptors.push_back(keypoints.descriptors[i]);
  }
  return out;
}

std::vector<std::string> kitti_class_names() {
  return {"Car", "Van", "Truck", "Pedestrian", "Person_sitting", "Cyclist", "Tram", "Misc"};
}

std::vector<bool> default_dynamic_flags(const std::vector<std::string>& class_names) {
  static const std::set<std::string> movable = {
      "person", "pedestrian", "person_sitting", "car", "van", "truck", "cyclist",
      "tram",   "bicycle",    "motorcycle",     "bus", "train"};
  std::vector<bool> flags;
  for (auto name : class_names) {
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    flags.push_back(movable.count(name) > 0);
  }
  return flags;
}

void write_keypoint_file(const std::filesystem::path& path, const KeypointSet& keypoints) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IngestionError("cannot write keypoint file " + path.string());
  os << std::setprecision(9);
  const bool with_desc = keypoints.has_descriptors();
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const auto& kp = keypoints.points[i];
    os << kp.x << ' ' << kp.y << ' ' << kp.confidence;
    if (with_desc) {
      for (float d : keypoints.descriptors[i]) os << ' ' << d;
    }
    os << '\n';
  }
}

KeypointSet read_keypoint_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IngestionError("cannot open keypoint file " + path.string());
  KeypointSet out;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Keypoint kp;
    if (!(ss >> kp.x >> kp.y >> kp.confidence)) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": expected 'x y confidence'");
    }
    std::vector<float> desc;
    float d;
    while (ss >> d) desc.push_back(d);
    if (!ss.eof()) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": trailing garbage");
    }
    if (!dim) dim = desc.size();
    if (desc.size() != *dim) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": descriptor length changes");
    }
    out.points.push_back(kp);
    if (!desc.empty()) out.descriptors.push_back(std::move(desc));
  }
  return out;
}

}  // namespace yolopoint

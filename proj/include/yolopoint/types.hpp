#pragma once

#include <optional>
#include <string>
#include <vector>

namespace yolopoint {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;
};

// Points in pixel coordinates (x right, y down, pixel centers on integers).
// When descriptors are present they are index-aligned with points and unit norm.
struct KeypointSet {
  std::vector<Keypoint> points;
  std::vector<std::vector<float>> descriptors;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_descriptors() const { return !points.empty() && descriptors.size() == points.size(); }
  std::size_t descriptor_dim() const { return descriptors.empty() ? 0 : descriptors.front().size(); }
};

struct Detection {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;
  int class_id = 0;
  double confidence = 0.0;
};

struct DetectionSet {
  std::vector<Detection> boxes;
  std::vector<std::string> class_names;
  std::vector<bool> dynamic_flags;  // per class id

  bool is_dynamic(int class_id) const {
    return class_id >= 0 && static_cast<std::size_t>(class_id) < dynamic_flags.size() &&
           dynamic_flags[class_id];
  }
};

// Ground-truth box in normalized image coordinates.
struct BoxLabel {
  int class_id = 0;
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
};

struct ImageShape {
  int height = 0;
  int width = 0;
};

}  // namespace yolopoint

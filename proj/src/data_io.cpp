#include "yolopoint/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "yolopoint/errors.hpp"
#include "yolopoint/postprocess.hpp"

namespace yolopoint {

namespace fs = std::filesystem;

namespace {

// 3 x H x W float tensor <-> H x W x 3 float mat (RGB order kept).
cv::Mat float_mat(const torch::Tensor& image) {
  auto t = image.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  cv::Mat m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_32FC3, t.data_ptr<float>());
  return m.clone();
}

torch::Tensor from_float_mat(const cv::Mat& m) {
  cv::Mat c = m.isContinuous() ? m : m.clone();
  auto t = torch::from_blob(c.data, {c.rows, c.cols, 3}, torch::kFloat32).clone();
  return t.permute({2, 0, 1}).contiguous();
}

void require_image(const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("expected a 3 x H x W image tensor");
}

}  // namespace

torch::Tensor tensor_from_mat(const cv::Mat& input) {
  cv::Mat rgb;
  if (input.channels() == 1) {
    cv::cvtColor(input, rgb, cv::COLOR_GRAY2RGB);
  } else if (input.channels() == 3) {
    cv::cvtColor(input, rgb, cv::COLOR_BGR2RGB);
  } else if (input.channels() == 4) {
    cv::cvtColor(input, rgb, cv::COLOR_BGRA2RGB);
  } else {
    throw ShapeError("unsupported channel count " + std::to_string(input.channels()));
  }
  cv::Mat f;
  const double scale = rgb.depth() == CV_8U ? 1.0 / 255.0 : (rgb.depth() == CV_16U ? 1.0 / 65535.0 : 1.0);
  rgb.convertTo(f, CV_32FC3, scale);
  return from_float_mat(f);
}

cv::Mat mat_from_tensor(const torch::Tensor& image) {
  if (image.dim() == 2) {
    auto t = (image.detach().to(torch::kFloat32).clamp(0, 1) * 255.0).round().to(torch::kUInt8).contiguous();
    return cv::Mat(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC1, t.data_ptr<std::uint8_t>())
        .clone();
  }
  require_image(image);
  cv::Mat f = float_mat(image.clamp(0, 1)), u8, bgr;
  f.convertTo(u8, CV_8UC3, 255.0);
  cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

torch::Tensor load_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IngestionError("cannot read image " + path.string());
  return tensor_from_mat(m);
}

torch::Tensor load_image(const fs::path& path, ImageShape resize_to) {
  return resize_image(load_image(path), resize_to);
}

ImageShape image_shape_of(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IngestionError("cannot read image " + path.string());
  return {m.rows, m.cols};
}

void save_image(const fs::path& path, const torch::Tensor& image) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat_from_tensor(image))) {
    throw IngestionError("cannot write image " + path.string());
  }
}

torch::Tensor resize_image(const torch::Tensor& image, ImageShape shape) {
  require_image(image);
  if (image.size(1) == shape.height && image.size(2) == shape.width) return image.to(torch::kFloat32);
  cv::Mat out;
  const bool shrinking = shape.width < image.size(2) && shape.height < image.size(1);
  cv::resize(float_mat(image), out, cv::Size(shape.width, shape.height), 0, 0,
             shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  return from_float_mat(out);
}

Letterbox letterbox(const torch::Tensor& image, ImageShape shape) {
  require_image(image);
  const double scale = std::min(static_cast<double>(shape.width) / image.size(2),
                                static_cast<double>(shape.height) / image.size(1));
  const int w = std::max(1, static_cast<int>(std::lround(image.size(2) * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(image.size(1) * scale)));
  Letterbox out;
  out.scale = scale;
  out.offset_x = (shape.width - w) / 2;
  out.offset_y = (shape.height - h) / 2;
  out.image = torch::zeros({3, shape.height, shape.width});
  out.image.slice(1, out.offset_y, out.offset_y + h).slice(2, out.offset_x, out.offset_x + w)
      .copy_(resize_image(image, {h, w}));
  return out;
}

std::vector<BoxLabel> read_box_labels(const fs::path& path, int num_classes) {
  std::ifstream is(path);
  if (!is) throw IngestionError("cannot open box label file " + path.string());
  std::vector<BoxLabel> out;
  std::string line;
  std::size_t line_no = 0;
  constexpr double tol = 1e-6;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    BoxLabel b;
    std::string rest;
    if (!(ss >> b.class_id >> b.cx >> b.cy >> b.w >> b.h) || (ss >> rest)) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) +
                           ": expected 'class_id cx cy w h'");
    }
    const bool inside = b.w > 0 && b.h > 0 && b.cx - b.w / 2 >= -tol && b.cx + b.w / 2 <= 1 + tol &&
                        b.cy - b.h / 2 >= -tol && b.cy + b.h / 2 <= 1 + tol;
    if (!inside) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": box outside [0,1]");
    }
    if (b.class_id < 0 || b.class_id >= num_classes) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": class id " +
                           std::to_string(b.class_id) + " >= " + std::to_string(num_classes));
    }
    out.push_back(b);
  }
  return out;
}

void write_box_labels(const fs::path& path, const std::vector<BoxLabel>& boxes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IngestionError("cannot write box label file " + path.string());
  os << std::setprecision(9);
  for (const auto& b : boxes) os << b.class_id << ' ' << b.cx << ' ' << b.cy << ' ' << b.w << ' ' << b.h << '\n';
}

KeypointSet read_point_labels(const fs::path& path) {
  KeypointSet s = read_keypoint_file(path);
  if (!s.descriptors.empty()) {
    throw IngestionError(path.string() + ": point label lines must be 'x y confidence'");
  }
  return s;
}

void write_point_labels(const fs::path& path, const KeypointSet& points) {
  KeypointSet bare;
  bare.points = points.points;
  write_keypoint_file(path, bare);
}

std::vector<SampleRecord> read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IngestionError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&base](const std::string& s) -> fs::path {
    fs::path p(s);
    return p.is_absolute() ? p : base / p;
  };
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated columns");
    }
    SampleRecord r;
    r.image = resolve(cols[0]);
    if (cols[1] != "-") r.keypoint_labels = resolve(cols[1]);
    if (cols[2] != "-") r.box_labels = resolve(cols[2]);
    r.split = cols[3];
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<SampleRecord>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IngestionError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  auto rel = [&base](const fs::path& p) {
    const auto r = p.lexically_proximate(base.empty() ? fs::path(".") : base);
    return r.generic_string();
  };
  for (const auto& r : records) {
    os << rel(r.image) << '\t' << (r.keypoint_labels ? rel(*r.keypoint_labels) : "-") << '\t'
       << (r.box_labels ? rel(*r.box_labels) : "-") << '\t' << r.split << '\n';
  }
}

LabeledImage load_sample(const SampleRecord& record, int num_classes, std::optional<ImageShape> shape) {
  LabeledImage s;
  s.image = load_image(record.image);
  if (record.keypoint_labels) s.points = read_point_labels(*record.keypoint_labels);
  if (record.box_labels) s.boxes = read_box_labels(*record.box_labels, num_classes);
  if (shape) {
    const double sx = static_cast<double>(shape->width) / s.image.size(2);
    const double sy = static_cast<double>(shape->height) / s.image.size(1);
    s.image = resize_image(s.image, *shape);
    for (auto& p : s.points.points) {
      p.x = std::clamp((p.x + 0.5) * sx - 0.5, 0.0, shape->width - 1.0);
      p.y = std::clamp((p.y + 0.5) * sy - 0.5, 0.0, shape->height - 1.0);
    }
  }
  return s;
}

std::vector<SampleRecord> split_records(std::vector<SampleRecord> records, std::size_t validation_count,
                                        std::uint64_t seed) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    records[order[i]].split = i < validation_count ? "val" : "train";
  }
  return records;
}

MosaicResult mosaic_augment(const std::array<LabeledImage, 4>& samples, ImageShape out_shape,
                            std::mt19937_64& rng, const MosaicConfig& cfg) {
  auto uniform = [&rng](double lo, double hi) {
    return hi <= lo ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const int xc = static_cast<int>(std::lround(uniform(cfg.center_min, cfg.center_max) * out_shape.width));
  const int yc = static_cast<int>(std::lround(uniform(cfg.center_min, cfg.center_max) * out_shape.height));
  const std::array<cv::Rect, 4> quads = {
      cv::Rect(0, 0, xc, yc), cv::Rect(xc, 0, out_shape.width - xc, yc),
      cv::Rect(0, yc, xc, out_shape.height - yc),
      cv::Rect(xc, yc, out_shape.width - xc, out_shape.height - yc)};

  MosaicResult result;
  cv::Mat canvas(out_shape.height, out_shape.width, CV_32FC3, cv::Scalar::all(0));
  for (int q = 0; q < 4; ++q) {
    const auto& src = samples[q];
    require_image(src.image);
    const cv::Rect& quad = quads[q];
    TileAffine& tile = result.tiles[q];
    tile.x0 = quad.x;
    tile.y0 = quad.y;
    tile.x1 = quad.x + quad.width;
    tile.y1 = quad.y + quad.height;
    if (quad.width <= 0 || quad.height <= 0) continue;

    const int iw = static_cast<int>(src.image.size(2)), ih = static_cast<int>(src.image.size(1));
    const double cover = std::max(static_cast<double>(quad.width) / iw, static_cast<double>(quad.height) / ih);
    const double s = cover * uniform(1.0, cfg.max_extra_scale);
    const int sw = std::max(quad.width, static_cast<int>(std::ceil(iw * s)));
    const int sh = std::max(quad.height, static_cast<int>(std::ceil(ih * s)));
    const int ox = std::uniform_int_distribution<int>(0, sw - quad.width)(rng);
    const int oy = std::uniform_int_distribution<int>(0, sh - quad.height)(rng);

    cv::Mat scaled;
    cv::resize(float_mat(src.image), scaled, cv::Size(sw, sh), 0, 0, cv::INTER_LINEAR);
    scaled(cv::Rect(ox, oy, quad.width, quad.height)).copyTo(canvas(quad));

    tile.scale_x = static_cast<double>(sw) / iw;
    tile.scale_y = static_cast<double>(sh) / ih;
    tile.offset_x = 0.5 * (tile.scale_x - 1) - ox + quad.x;
    tile.offset_y = 0.5 * (tile.scale_y - 1) - oy + quad.y;

    for (std::size_t i = 0; i < src.points.size(); ++i) {
      const auto& p = src.points.points[i];
      const double x = tile.scale_x * p.x + tile.offset_x;
      const double y = tile.scale_y * p.y + tile.offset_y;
      if (x < tile.x0 || x > tile.x1 - 1 || y < tile.y0 || y > tile.y1 - 1) continue;
      result.sample.points.points.push_back({x, y, p.confidence});
      result.kept_point_indices[q].push_back(i);
    }
    for (const auto& b : src.boxes) {
      // continuous pixel edges: edge' = scale * edge - crop + quadrant origin
      const double ex1 = tile.scale_x * (b.cx - b.w / 2) * iw - ox + quad.x;
      const double ex2 = tile.scale_x * (b.cx + b.w / 2) * iw - ox + quad.x;
      const double ey1 = tile.scale_y * (b.cy - b.h / 2) * ih - oy + quad.y;
      const double ey2 = tile.scale_y * (b.cy + b.h / 2) * ih - oy + quad.y;
      const double cx1 = std::max<double>(ex1, tile.x0), cx2 = std::min<double>(ex2, tile.x1);
      const double cy1 = std::max<double>(ey1, tile.y0), cy2 = std::min<double>(ey2, tile.y1);
      if (cx2 <= cx1 || cy2 <= cy1) continue;
      const double full = (ex2 - ex1) * (ey2 - ey1);
      if ((cx2 - cx1) * (cy2 - cy1) < cfg.min_box_fraction * full) continue;
      result.sample.boxes.push_back({b.class_id, (cx1 + cx2) / 2 / out_shape.width,
                                     (cy1 + cy2) / 2 / out_shape.height, (cx2 - cx1) / out_shape.width,
                                     (cy2 - cy1) / out_shape.height});
    }
  }
  result.sample.image = from_float_mat(canvas);
  return result;
}

PhotometricParams sample_photometric(const PhotometricConfig& cfg, std::mt19937_64& rng) {
  auto uniform = [&rng](double lo, double hi) {
    return hi <= lo ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  PhotometricParams p;
  p.brightness = uniform(-cfg.max_brightness, cfg.max_brightness);
  p.contrast = uniform(1.0 - cfg.max_contrast, 1.0 + cfg.max_contrast);
  p.blur_sigma = uniform(0.0, cfg.max_blur_sigma);
  return p;
}

torch::Tensor apply_photometric(const torch::Tensor& image, const PhotometricParams& params) {
  torch::Tensor out = image.to(torch::kFloat32);
  if (params.contrast != 1.0) {
    const auto mean = out.mean();
    out = (out - mean) * params.contrast + mean;
  }
  if (params.brightness != 0.0) out = out + params.brightness;
  if (params.blur_sigma > 0.0) {
    require_image(out);
    cv::Mat blurred;
    cv::GaussianBlur(float_mat(out), blurred, cv::Size(0, 0), params.blur_sigma, params.blur_sigma,
                     cv::BORDER_REFLECT101);
    out = from_float_mat(blurred);
  }
  return out.clamp(0.0, 1.0);
}

torch::Tensor photometric_augment(const torch::Tensor& image, std::mt19937_64& rng,
                                  const PhotometricConfig& cfg) {
  return apply_photometric(image, sample_photometric(cfg, rng));
}

CameraIntrinsics read_kitti_calibration(const fs::path& calib_file, const std::string& projection) {
  std::ifstream is(calib_file);
  if (!is) throw IngestionError("missing calibration file " + calib_file.string());
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key != projection + ":") continue;
    double p[12];
    for (double& v : p) {
      if (!(ss >> v)) throw IngestionError("malformed " + projection + " line in " + calib_file.string());
    }
    CameraIntrinsics k{p[0], p[5], p[2], p[6]};
    k.validate();
    return k;
  }
  throw IngestionError("no " + projection + " entry in calibration file " + calib_file.string());
}

KittiSequence load_kitti_sequence(const fs::path& root, const std::string& sequence_id,
                                  const std::string& camera) {
  KittiSequence seq;
  seq.id = sequence_id;
  const fs::path seq_dir = root / "sequences" / sequence_id;
  const fs::path image_dir = seq_dir / camera;
  if (!fs::is_directory(image_dir)) throw IngestionError("missing image directory " + image_dir.string());
  for (const auto& e : fs::directory_iterator(image_dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".ppm")) {
      seq.frames.push_back(e.path());
    }
  }
  std::sort(seq.frames.begin(), seq.frames.end());
  const std::string projection = camera == "image_2" ? "P2" : (camera == "image_1" ? "P1" : (camera == "image_3" ? "P3" : "P0"));
  seq.intrinsics = read_kitti_calibration(seq_dir / "calib.txt", projection);
  seq.ground_truth = read_trajectory(root / "poses" / (sequence_id + ".txt"));
  if (seq.ground_truth.size() != seq.frames.size()) {
    throw IngestionError("sequence " + sequence_id + " has " + std::to_string(seq.frames.size()) +
                         " frames but " + std::to_string(seq.ground_truth.size()) + " poses");
  }
  return seq;
}

}  // namespace yolopoint

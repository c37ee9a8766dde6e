#include "yolopoint/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "yolopoint/errors.hpp"

namespace yolopoint {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ValidationError("camera focal lengths must be positive");
}

CameraIntrinsics CameraIntrinsics::scaled(double sx, double sy) const {
  // pixel centers on integers: x' = sx * (x + 0.5) - 0.5
  return {fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5};
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Pose Pose::operator*(const Pose& rhs) const {
  return {rotation * rhs.rotation, rotation * rhs.translation + translation};
}

Pose Pose::inverse() const {
  const Eigen::Matrix3d rt = rotation.transpose();
  return {rt, -rt * translation};
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& r) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1;
    out = u * svd.matrixV().transpose();
  }
  return out;
}

double rotation_angle(const Eigen::Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

Pose parse_pose_line(const std::string& line) {
  std::istringstream ss(line);
  double v[12];
  for (double& x : v) {
    if (!(ss >> x)) throw IngestionError("pose line needs 12 numbers: '" + line + "'");
  }
  double extra;
  if (ss >> extra) throw IngestionError("pose line has more than 12 numbers: '" + line + "'");
  Pose p;
  p.rotation << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
  p.translation << v[3], v[7], v[11];
  return p;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IngestionError("missing pose file " + path.string());
  Trajectory t;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    t.poses.push_back(parse_pose_line(line));
  }
  return t;
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IngestionError("cannot write trajectory " + path.string());
  os << std::scientific << std::setprecision(9);
  for (const auto& p : trajectory.poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) os << p.rotation(r, c) << ' ';
      os << p.translation(r) << (r == 2 ? '\n' : ' ');
    }
  }
}

}  // namespace yolopoint

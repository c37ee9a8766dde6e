#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace yolopoint {

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;
  CameraIntrinsics scaled(double sx, double sy) const;
  Eigen::Matrix3d matrix() const;
};

// Camera-to-world pose (KITTI convention): x_world = rotation * x_cam + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
  Pose operator*(const Pose& rhs) const;
  Pose inverse() const;
};

struct Trajectory {
  std::vector<Pose> poses;

  std::size_t size() const { return poses.size(); }
};

// Nearest rotation matrix (SVD projection), det = +1.
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& r);
// Geodesic angle of a rotation, radians.
double rotation_angle(const Eigen::Matrix3d& r);

// One pose per line: 12 floats, row-major 3x4 [R | t].
Trajectory read_trajectory(const std::filesystem::path& path);
void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);
Pose parse_pose_line(const std::string& line);

}  // namespace yolopoint

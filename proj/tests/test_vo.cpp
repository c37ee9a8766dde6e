#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "yolopoint/errors.hpp"
#include "yolopoint/postprocess.hpp"
#include "yolopoint/vo.hpp"

using namespace yolopoint;
namespace fs = std::filesystem;

namespace {

const CameraIntrinsics kK{718.856, 718.856, 607.1928, 185.2157};
constexpr double kDeg = 180.0 / M_PI;

struct TwoViews {
  KeypointSet a, b;
  MatchSet matches;
};

// Points in front of camera A seen again by camera B with x_b = R x_a + t.
TwoViews project_scene(const Eigen::Matrix3d& r, const Eigen::Vector3d& t, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-12, 12), uy(-3, 3), uz(8, 40);
  TwoViews v;
  const Eigen::Matrix3d k = kK.matrix();
  while (static_cast<int>(v.a.size()) < n) {
    const Eigen::Vector3d xa(ux(rng), uy(rng), uz(rng));
    const Eigen::Vector3d xb = r * xa + t;
    if (xb.z() < 1) continue;
    const Eigen::Vector2d pa = (k * xa).hnormalized(), pb = (k * xb).hnormalized();
    if (pa.x() < 0 || pa.x() > 1240 || pa.y() < 0 || pa.y() > 375) continue;
    if (pb.x() < 0 || pb.x() > 1240 || pb.y() < 0 || pb.y() > 375) continue;
    const int i = static_cast<int>(v.a.size());
    v.a.points.push_back({pa.x(), pa.y(), 1});
    v.b.points.push_back({pb.x(), pb.y(), 1});
    v.matches.pairs.push_back({i, i, 0.0});
  }
  return v;
}

double angle_between(const Eigen::Vector3d& u, const Eigen::Vector3d& w) {
  return std::acos(std::clamp(u.normalized().dot(w.normalized()), -1.0, 1.0)) * kDeg;
}

Trajectory straight_line(int n, double step) {
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    Pose p;
    p.translation = Eigen::Vector3d(0, 0, step * i);
    t.poses.push_back(p);
  }
  return t;
}

}  // namespace

TEST(RelativePose, RecoversKnownMotion) {
  std::mt19937_64 rng(1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::Matrix3d r =
        Eigen::AngleAxisd(0.05, Eigen::Vector3d(0.2, 1, 0.1).normalized()).toRotationMatrix();
    const Eigen::Vector3d t(0.3, -0.05, -1.0);
    const auto v = project_scene(r, t, 300, seed);
    const auto rel = relative_pose(v.matches, v.a, v.b, kK, rng);
    EXPECT_LT(rotation_angle(rel.rotation.transpose() * r) * kDeg, 0.1);
    EXPECT_LT(angle_between(rel.translation, t), 0.1);
    EXPECT_NEAR(rel.translation.norm(), 1.0, 1e-9);
    EXPECT_TRUE(rel.translation_reliable);
    EXPECT_EQ(rel.inliers, 300);
  }
}

TEST(RelativePose, ForwardTranslationHasNoRotation) {
  std::mt19937_64 rng(2);
  const auto v = project_scene(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, -1), 300, 3);
  const auto rel = relative_pose(v.matches, v.a, v.b, kK, rng);
  EXPECT_LT(rotation_angle(rel.rotation) * kDeg, 0.1);
  EXPECT_LT(angle_between(rel.translation, Eigen::Vector3d(0, 0, -1)), 0.1);
}

TEST(RelativePose, PureRotationFlagsTranslation) {
  std::mt19937_64 rng(3);
  const Eigen::Matrix3d r = Eigen::AngleAxisd(0.03, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const auto v = project_scene(r, Eigen::Vector3d::Zero(), 300, 4);
  const auto rel = relative_pose(v.matches, v.a, v.b, kK, rng);
  EXPECT_FALSE(rel.translation_reliable);
  EXPECT_LT(rotation_angle(rel.rotation.transpose() * r) * kDeg, 0.2);
}

TEST(RelativePose, TooFewMatches) {
  std::mt19937_64 rng(4);
  auto v = project_scene(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, -1), 4, 5);
  EXPECT_THROW(relative_pose(v.matches, v.a, v.b, kK, rng), DegenerateFrameError);
}

TEST(ScoreTrajectory, ExactAndOffset) {
  const Trajectory gt = straight_line(10, 1.0);
  const auto same = score_trajectory(gt, gt);
  EXPECT_EQ(same.translation_rmse, 0.0);
  EXPECT_EQ(same.rotation_rmse, 0.0);
  Trajectory off = gt;
  for (auto& p : off.poses) p.translation += Eigen::Vector3d(1, 0, 0);
  EXPECT_NEAR(score_trajectory(off, gt).translation_rmse, 1.0, 1e-12);
  off.poses.pop_back();
  EXPECT_THROW(score_trajectory(off, gt), ContractError);
}

TEST(ScoreTrajectory, MatchesDirectFormula) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 0.05);
  Trajectory gt, est;
  for (int i = 0; i < 30; ++i) {
    Pose g;
    g.rotation = Eigen::AngleAxisd(0.01 * i, Eigen::Vector3d::UnitY()).toRotationMatrix();
    g.translation = Eigen::Vector3d(0.1 * i, 0, i);
    Pose e = g;
    e.rotation = g.rotation * Eigen::AngleAxisd(n(rng), Eigen::Vector3d(n(rng), 1, n(rng)).normalized());
    e.translation += Eigen::Vector3d(n(rng), n(rng), n(rng));
    gt.poses.push_back(g);
    est.poses.push_back(e);
  }
  double t2 = 0, r2 = 0;
  for (int i = 0; i < 30; ++i) t2 += (est.poses[i].translation - gt.poses[i].translation).squaredNorm();
  for (int i = 1; i < 30; ++i) {
    const Eigen::Matrix3d re = est.poses[i - 1].rotation.transpose() * est.poses[i].rotation;
    const Eigen::Matrix3d rg = gt.poses[i - 1].rotation.transpose() * gt.poses[i].rotation;
    const double a = Eigen::AngleAxisd(rg.transpose() * re).angle() * kDeg;
    r2 += a * a;
  }
  const auto rep = score_trajectory(est, gt);
  EXPECT_NEAR(rep.translation_rmse, std::sqrt(t2 / 30), 1e-9);
  EXPECT_NEAR(rep.rotation_rmse, std::sqrt(r2 / 29), 1e-9);
}

TEST(Trajectory, ChainingGroundTruthMotions) {
  Trajectory gt;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 0.1);
  Pose p;
  for (int i = 0; i < 500; ++i) {
    gt.poses.push_back(p);
    Pose m;
    m.rotation = Eigen::AngleAxisd(n(rng), Eigen::Vector3d(n(rng), 1, n(rng)).normalized()).toRotationMatrix();
    m.translation = Eigen::Vector3d(n(rng), n(rng), 1);
    p = p * m;
  }
  Pose c = gt.poses[0];
  for (std::size_t i = 1; i < gt.size(); ++i) {
    c = c * (gt.poses[i - 1].inverse() * gt.poses[i]);
    c.rotation = orthonormalize(c.rotation);
    ASSERT_LT((c.translation - gt.poses[i].translation).norm(), 1e-6);
    ASSERT_LT((c.rotation.transpose() * c.rotation - Eigen::Matrix3d::Identity()).norm(), 1e-6);
    ASSERT_NEAR(c.rotation.determinant(), 1.0, 1e-6);
  }
}

class SyntheticVo : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticSequenceConfig cfg;
    cfg.frames = 20;
    seq_ = new SyntheticSequence(make_synthetic_sequence(cfg));
  }
  static void TearDownTestSuite() {
    delete seq_;
    seq_ = nullptr;
  }
  static FrameSource source() {
    return [](std::size_t i) { return seq_->frames.at(i); };
  }
  static SyntheticSequence* seq_;
};

SyntheticSequence* SyntheticVo::seq_ = nullptr;

TEST_F(SyntheticVo, PerfectKeypointsTrackGroundTruth) {
  const auto [traj, rep] = run_sequence(source(), 20, seq_->intrinsics, seq_->ground_truth, {});
  EXPECT_LE(rep.translation_rmse, 0.01);
  EXPECT_LE(rep.rotation_rmse, 0.05);
  ASSERT_EQ(traj.size(), 20u);
  for (const auto& p : traj.poses) {
    EXPECT_LT((p.rotation.transpose() * p.rotation - Eigen::Matrix3d::Identity()).norm(), 1e-6);
  }
}

TEST_F(SyntheticVo, FilterIsNoOpWithoutDetections) {
  VoConfig on, off;
  off.filter_dynamic = false;
  const auto a = run_sequence(source(), 20, seq_->intrinsics, seq_->ground_truth, on).first;
  const auto b = run_sequence(source(), 20, seq_->intrinsics, seq_->ground_truth, off).first;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.poses[i].translation, b.poses[i].translation);
    EXPECT_EQ(a.poses[i].rotation, b.poses[i].rotation);
  }
}

TEST_F(SyntheticVo, DegenerateAndCorruptFrames) {
  FrameSource src = [](std::size_t i) {
    if (i == 7) throw IngestionError("frame 7 unreadable");
    FrameFeatures f = seq_->frames.at(i);
    if (i == 12) f.keypoints = {};
    return f;
  };
  const auto [traj, rep] = run_sequence(src, 20, seq_->intrinsics, seq_->ground_truth, {});
  ASSERT_EQ(traj.size(), 20u);
  EXPECT_TRUE(rep.frames[7].skipped);
  EXPECT_TRUE(rep.frames[12].degenerate);
  EXPECT_GE(rep.events.size(), 2u);
  // constant velocity keeps the estimate close on a smooth drive
  EXPECT_LT(rep.translation_rmse, 0.5);
}

TEST(SyntheticVoObjects, FilteringRemovesMovingOutliers) {
  SyntheticSequenceConfig cfg;
  cfg.frames = 15;
  cfg.object_points = 1200;
  const auto seq = make_synthetic_sequence(cfg);
  FrameSource src = [&](std::size_t i) { return seq.frames.at(i); };
  VoConfig on, off;
  off.filter_dynamic = false;
  const double filtered = run_sequence(src, 15, seq.intrinsics, seq.ground_truth, on).second.translation_rmse;
  const double raw = run_sequence(src, 15, seq.intrinsics, seq.ground_truth, off).second.translation_rmse;
  EXPECT_LE(filtered, raw);
  EXPECT_LE(filtered, 0.05);
}

TEST(VoFiles, BoxFileRoundTripAndFileSource) {
  const fs::path dir = fs::temp_directory_path() / "yp_vo_files";
  fs::remove_all(dir);
  fs::create_directories(dir);
  DetectionSet d;
  d.boxes = {{10.5, 20.25, 100, 80, 0, 0.9}, {1, 2, 3, 4, 3, 0.5}};
  write_box_file(dir / "000001.boxes.txt", d);
  const auto back = read_box_file(dir / "000001.boxes.txt");
  ASSERT_EQ(back.boxes.size(), 2u);
  EXPECT_EQ(back.boxes[0].x1, 10.5);
  EXPECT_EQ(back.boxes[1].class_id, 3);

  KeypointSet k;
  k.points = {{50, 50, 1}, {200, 50, 1}};
  k.descriptors = {{1, 0}, {0, 1}};
  write_keypoint_file(dir / "000001.txt", k);
  const auto names = kitti_class_names();
  auto src = file_frame_source(dir, {dir / "images" / "000000.png", dir / "images" / "000001.png"}, names,
                               default_dynamic_flags(names));
  const FrameFeatures f = src(1);
  EXPECT_EQ(f.keypoints.size(), 2u);
  EXPECT_EQ(f.detections.boxes.size(), 2u);
  EXPECT_TRUE(f.detections.is_dynamic(0));
  EXPECT_EQ(filter_dynamic_keypoints(f.keypoints, f.detections).size(), 1u);
  EXPECT_THROW(src(0), IngestionError);
  fs::remove_all(dir);
}

#pragma once

// On-disk datasets shared by the CLI test and the acceptance binary.

#include <filesystem>
#include <string>

namespace fixture {

// One HPatches-style scene of six identical random images with identity H files.
void write_hpatches_identity(const std::filesystem::path& root, int size = 64);

// KITTI layout (sequence 00, image_0, calib P0, poses) for a synthetic
// sequence, plus per-frame keypoint and box files under keypoints_dir.
void write_vo_sequence(const std::filesystem::path& root, const std::filesystem::path& keypoints_dir,
                       int frames, int object_points);

// Runs "cli args" through the shell with stdout and stderr sent to log;
// returns the exit status.
int run_cli(const std::string& cli, const std::string& args, const std::filesystem::path& log);

bool same_bytes(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace fixture

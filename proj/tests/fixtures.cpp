#include "fixtures.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include <sys/wait.h>

#include <torch/torch.h>

#include "yolopoint/data_io.hpp"
#include "yolopoint/postprocess.hpp"
#include "yolopoint/trajectory.hpp"
#include "yolopoint/vo.hpp"

namespace fs = std::filesystem;

namespace fixture {

void write_hpatches_identity(const fs::path& root, int size) {
  const fs::path scene = root / "i_fixture";
  fs::create_directories(scene);
  torch::manual_seed(1);
  const auto img = torch::rand({3, size, size});
  for (int i = 1; i <= 6; ++i) yolopoint::save_image(scene / (std::to_string(i) + ".png"), img);
  for (int i = 2; i <= 6; ++i) std::ofstream(scene / ("H_1_" + std::to_string(i))) << "1 0 0\n0 1 0\n0 0 1\n";
}

void write_vo_sequence(const fs::path& root, const fs::path& keypoints_dir, int frames, int object_points) {
  yolopoint::SyntheticSequenceConfig cfg;
  cfg.frames = static_cast<std::size_t>(frames);
  cfg.object_points = object_points;
  const auto seq = yolopoint::make_synthetic_sequence(cfg);
  const fs::path dir = root / "sequences" / "00";
  fs::create_directories(dir / "image_0");
  fs::create_directories(root / "poses");
  fs::create_directories(keypoints_dir);
  const auto blank = torch::full({3, 32, 32}, 0.5);
  for (int i = 0; i < frames; ++i) {
    char stem[16];
    std::snprintf(stem, sizeof stem, "%06d", i);
    yolopoint::save_image(dir / "image_0" / (std::string(stem) + ".png"), blank);
    yolopoint::write_keypoint_file(keypoints_dir / (std::string(stem) + ".txt"), seq.frames[i].keypoints);
    if (!seq.frames[i].detections.boxes.empty()) {
      yolopoint::write_box_file(keypoints_dir / (std::string(stem) + ".boxes.txt"), seq.frames[i].detections);
    }
  }
  const auto& k = seq.intrinsics;
  std::ofstream(dir / "calib.txt") << "P0: " << k.fx << " 0 " << k.cx << " 0 0 " << k.fy << ' ' << k.cy
                                   << " 0 0 0 1 0\n";
  yolopoint::write_trajectory(root / "poses" / "00.txt", seq.ground_truth);
}

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = "'" + cli + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  return std::string(std::istreambuf_iterator<char>(fa), {}) == std::string(std::istreambuf_iterator<char>(fb), {});
}

}  // namespace fixture

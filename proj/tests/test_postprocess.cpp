#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "yolopoint/postprocess.hpp"

using namespace yolopoint;
namespace fs = std::filesystem;

namespace {

std::vector<double> to_vector(const torch::Tensor& t) {
  const auto c = t.to(torch::kDouble).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

DetectionSet random_scene(std::mt19937_64& rng, int boxes, double w, double h) {
  std::uniform_real_distribution<double> ux(0, w), uy(0, h);
  DetectionSet d;
  d.class_names = {"car", "sign", "person"};
  d.dynamic_flags = {true, false, true};
  for (int i = 0; i < boxes; ++i) {
    double x1 = ux(rng), x2 = ux(rng), y1 = uy(rng), y2 = uy(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (y1 > y2) std::swap(y1, y2);
    d.boxes.push_back({x1, y1, x2 + 1e-3, y2 + 1e-3, static_cast<int>(rng() % 3), 0.9});
  }
  return d;
}

}  // namespace

TEST(ExtractKeypoints, SinglePixel) {
  auto h = torch::zeros({16, 16});
  h.index_put_({5, 9}, 0.7);
  const auto k = extract_keypoints(h, 0.1, 4, 100);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k.points[0].x, 9);
  EXPECT_EQ(k.points[0].y, 5);
  EXPECT_FLOAT_EQ(k.points[0].confidence, 0.7);
}

TEST(ExtractKeypoints, TieKeepsLexicographicallySmaller) {
  auto h = torch::zeros({32, 32});
  h.index_put_({10, 12}, 0.5);
  h.index_put_({10, 9}, 0.5);  // 3 px apart, smaller x
  const auto k = extract_keypoints(h, 0.1, 8, 100);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k.points[0].x, 9);
  EXPECT_EQ(k.points[0].y, 10);
}

TEST(ExtractKeypoints, MatchesGreedyOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    torch::manual_seed(trial);
    auto heat = torch::rand({32, 32}, torch::kDouble);
    if (trial % 2) heat = torch::round(heat * 8) / 8;  // many ties
    const int radius = static_cast<int>(rng() % 6);
    const int max_points = 1 + static_cast<int>(rng() % 60);
    const auto got = extract_keypoints(heat, 0.3, radius, max_points);
    const auto want = oracle::greedy_nms(to_vector(heat), 32, 32, 0.3, radius, max_points);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      ASSERT_EQ(got.points[i].x, want[i].x);
      ASSERT_EQ(got.points[i].y, want[i].y);
    }
  }
}

TEST(ExtractKeypoints, SuppressionConsistent) {
  torch::manual_seed(2);
  const auto k = extract_keypoints(torch::rand({40, 40}), 0.0, 3, 1000);
  for (std::size_t i = 0; i < k.size(); ++i) {
    for (std::size_t j = i + 1; j < k.size(); ++j) {
      const double d = std::max(std::abs(k.points[i].x - k.points[j].x), std::abs(k.points[i].y - k.points[j].y));
      ASSERT_GT(d, 3);
    }
  }
}

TEST(SampleDescriptors, CellCenterIsExact) {
  torch::manual_seed(3);
  const auto grid = torch::nn::functional::normalize(torch::randn({5, 3, 4}),
                                                     torch::nn::functional::NormalizeFuncOptions().dim(0));
  KeypointSet k;
  k.points.push_back({2 * 8 + 3.5, 1 * 8 + 3.5, 1.0});
  const auto out = sample_descriptors(grid, k);
  for (int d = 0; d < 5; ++d) EXPECT_NEAR(out.descriptors[0][d], grid.index({d, 1, 2}).item<float>(), 1e-6);
}

TEST(SampleDescriptors, MidpointOfOrthogonalCells) {
  auto grid = torch::zeros({2, 1, 2});
  grid.index_put_({0, 0, 0}, 1.0);
  grid.index_put_({1, 0, 1}, 1.0);
  KeypointSet k;
  k.points.push_back({7.5, 3.5, 1.0});
  const auto out = sample_descriptors(grid, k);
  EXPECT_NEAR(out.descriptors[0][0], std::sqrt(0.5), 1e-6);
  EXPECT_NEAR(out.descriptors[0][1], std::sqrt(0.5), 1e-6);
}

TEST(SampleDescriptors, MatchesDenseUpsampleOracle) {
  torch::manual_seed(4);
  const auto grid = torch::nn::functional::normalize(torch::randn({1, 6, 4, 5}, torch::kDouble),
                                                     torch::nn::functional::NormalizeFuncOptions().dim(1));
  // align_corners=false bilinear upsampling by 8 places cell centers at 8j + 3.5
  const auto dense = torch::nn::functional::interpolate(
      grid, torch::nn::functional::InterpolateFuncOptions()
                .size(std::vector<std::int64_t>{32, 40})
                .mode(torch::kBilinear)
                .align_corners(false))[0];
  std::mt19937_64 rng(5);
  KeypointSet k;
  for (int i = 0; i < 50; ++i) k.points.push_back({double(rng() % 40), double(rng() % 32), 1.0});
  const auto out = sample_descriptors(grid[0], k);
  ASSERT_EQ(out.size(), k.size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    const auto v = dense.index({torch::indexing::Slice(), int(k.points[i].y), int(k.points[i].x)});
    const auto n = v / v.norm();
    for (int d = 0; d < 6; ++d) ASSERT_NEAR(out.descriptors[i][d], n[d].item<double>(), 1e-5);
  }
}

TEST(SampleDescriptors, EmptySet) { EXPECT_TRUE(sample_descriptors(torch::ones({4, 2, 2}), {}).empty()); }

TEST(DecodeBoxes, LowObjectnessGivesNothing) {
  std::array<std::vector<Anchor>, 3> anchors = ModelConfig::for_scale(ModelScale::N).anchors;
  std::vector<torch::Tensor> raw;
  for (int s : {8, 4, 2}) raw.push_back(torch::full({3, s, s, 7}, -10.0));
  EXPECT_TRUE(decode_boxes(raw, anchors, 0.25, 0.45).boxes.empty());
}

TEST(DecodeBoxes, SingleBoxArithmetic) {
  std::array<std::vector<Anchor>, 3> anchors = ModelConfig::for_scale(ModelScale::N).anchors;
  std::vector<torch::Tensor> raw;
  for (int s : {8, 4, 2}) raw.push_back(torch::full({3, s, s, 7}, -10.0));
  const double tx = 0.3, ty = -0.2, tw = 0.1, th = 0.4;
  raw[1].index_put_({2, 1, 3}, torch::tensor({tx, ty, tw, th, 5.0, -3.0, 4.0}));
  const auto d = decode_boxes(raw, anchors, 0.25, 0.45);
  ASSERT_EQ(d.boxes.size(), 1u);
  auto sig = [](double x) { return 1 / (1 + std::exp(-x)); };
  const double cx = (sig(tx) * 2 - 0.5 + 3) * 16, cy = (sig(ty) * 2 - 0.5 + 1) * 16;
  const double w = std::pow(sig(tw) * 2, 2) * anchors[1][2].w, h = std::pow(sig(th) * 2, 2) * anchors[1][2].h;
  EXPECT_NEAR(d.boxes[0].x1, cx - w / 2, 1e-4);
  EXPECT_NEAR(d.boxes[0].x2, cx + w / 2, 1e-4);
  EXPECT_NEAR(d.boxes[0].y1, cy - h / 2, 1e-4);
  EXPECT_NEAR(d.boxes[0].y2, cy + h / 2, 1e-4);
  EXPECT_EQ(d.boxes[0].class_id, 1);
  EXPECT_NEAR(d.boxes[0].confidence, sig(5.0) * sig(4.0), 1e-6);
}

TEST(DecodeBoxes, MatchesGreedyNmsOracle) {
  std::array<std::vector<Anchor>, 3> anchors = ModelConfig::for_scale(ModelScale::N).anchors;
  auto sig = [](double x) { return 1 / (1 + std::exp(-x)); };
  for (int trial = 0; trial < 20; ++trial) {
    torch::manual_seed(100 + trial);
    std::vector<torch::Tensor> raw;
    for (int s : {8, 4, 2}) raw.push_back(torch::randn({3, s, s, 7}, torch::kDouble) * 2);
    // candidates in raw order (scale, anchor, y, x)
    std::vector<Detection> cand;
    for (int s = 0; s < 3; ++s) {
      auto r = raw[s].accessor<double, 4>();
      const double stride = kDetectionStrides[s];
      for (int a = 0; a < 3; ++a)
        for (int y = 0; y < raw[s].size(1); ++y)
          for (int x = 0; x < raw[s].size(2); ++x) {
            const int c = r[a][y][x][6] > r[a][y][x][5] ? 1 : 0;
            const double conf = sig(r[a][y][x][4]) * sig(r[a][y][x][5 + c]);
            if (sig(r[a][y][x][4]) <= 0.3 || conf <= 0.3) continue;
            const double cx = (sig(r[a][y][x][0]) * 2 - 0.5 + x) * stride;
            const double cy = (sig(r[a][y][x][1]) * 2 - 0.5 + y) * stride;
            const double w = std::pow(sig(r[a][y][x][2]) * 2, 2) * anchors[s][a].w;
            const double h = std::pow(sig(r[a][y][x][3]) * 2, 2) * anchors[s][a].h;
            cand.push_back({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, c, conf});
          }
    }
    // repeatedly take the most confident remaining candidate (earliest on ties)
    std::vector<Detection> want;
    std::vector<bool> used(cand.size(), false);
    for (;;) {
      int best = -1;
      for (std::size_t i = 0; i < cand.size(); ++i) {
        if (!used[i] && (best < 0 || cand[i].confidence > cand[best].confidence)) best = static_cast<int>(i);
      }
      if (best < 0) break;
      used[best] = true;
      bool keep = true;
      for (const auto& k : want) {
        if (k.class_id != cand[best].class_id) continue;
        const auto& c = cand[best];
        const double iw = std::max(0.0, std::min(k.x2, c.x2) - std::max(k.x1, c.x1));
        const double ih = std::max(0.0, std::min(k.y2, c.y2) - std::max(k.y1, c.y1));
        const double inter = iw * ih;
        if (inter / ((k.x2 - k.x1) * (k.y2 - k.y1) + (c.x2 - c.x1) * (c.y2 - c.y1) - inter) > 0.45) keep = false;
      }
      if (keep) want.push_back(cand[best]);
    }
    const auto got = decode_boxes(raw, anchors, 0.3, 0.45);
    ASSERT_EQ(got.boxes.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      ASSERT_NEAR(got.boxes[i].x1, want[i].x1, 1e-9);
      ASSERT_NEAR(got.boxes[i].y2, want[i].y2, 1e-9);
      ASSERT_EQ(got.boxes[i].class_id, want[i].class_id);
    }
  }
}

TEST(FilterDynamic, NoDynamicBoxesIsIdentity) {
  std::mt19937_64 rng(1);
  DetectionSet d = random_scene(rng, 4, 100, 80);
  d.dynamic_flags = {false, false, false};
  KeypointSet k;
  for (int i = 0; i < 30; ++i) k.points.push_back({double(rng() % 100), double(rng() % 80), 0.5});
  const auto out = filter_dynamic_keypoints(k, d);
  ASSERT_EQ(out.size(), k.size());
}

TEST(FilterDynamic, WholeImageBoxRemovesAll) {
  DetectionSet d;
  d.dynamic_flags = {true};
  d.boxes.push_back({0, 0, 99, 79, 0, 1.0});
  KeypointSet k;
  k.points = {{0, 0, 1}, {99, 79, 1}, {50, 40, 1}};
  EXPECT_TRUE(filter_dynamic_keypoints(k, d).empty());
}

TEST(FilterDynamic, MatchesPointInBoxOracleAndIsIdempotent) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> ux(0, 100), uy(0, 80);
  for (int trial = 0; trial < 200; ++trial) {
    const DetectionSet d = random_scene(rng, 3, 100, 80);
    KeypointSet k;
    for (int i = 0; i < 50; ++i) {
      k.points.push_back({ux(rng), uy(rng), double(i)});
      k.descriptors.push_back({float(i)});
    }
    // include exact box corners to exercise inclusive edges
    k.points.push_back({d.boxes[0].x1, d.boxes[0].y1, 50});
    k.descriptors.push_back({50.f});
    const auto out = filter_dynamic_keypoints(k, d);
    const auto keep = oracle::outside_dynamic_boxes(k.points, d.boxes, d.dynamic_flags);
    ASSERT_EQ(out.size(), keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      ASSERT_EQ(out.points[i].confidence, k.points[keep[i]].confidence);
      ASSERT_EQ(out.descriptors[i][0], k.descriptors[keep[i]][0]);
    }
    EXPECT_EQ(filter_dynamic_keypoints(out, d).size(), out.size());
    DetectionSet more = d;
    more.boxes.push_back({10, 10, 60, 60, 0, 0.5});
    EXPECT_LE(filter_dynamic_keypoints(k, more).size(), out.size());
  }
}

TEST(DynamicFlags, KittiDefaults) {
  const auto names = kitti_class_names();
  const auto flags = default_dynamic_flags(names);
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(flags[i], names[i] != "Misc") << names[i];
}

TEST(KeypointFile, RoundTrip) {
  const fs::path p = fs::temp_directory_path() / "yp_kp_roundtrip.txt";
  KeypointSet k;
  k.points = {{1.25, 3.5, 0.75}, {100.125, 0.0, 0.015625}};
  k.descriptors = {{0.6f, 0.8f}, {1.0f, 0.0f}};
  write_keypoint_file(p, k);
  const auto r = read_keypoint_file(p);
  ASSERT_EQ(r.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(r.points[i].x, k.points[i].x, 1e-6);
    EXPECT_NEAR(r.points[i].confidence, k.points[i].confidence, 1e-6);
    EXPECT_NEAR(r.descriptors[i][0], k.descriptors[i][0], 1e-6);
  }
  fs::remove(p);
}

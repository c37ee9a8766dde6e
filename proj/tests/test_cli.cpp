#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "fixtures.hpp"
#include "yolopoint/evalsuite.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = YOLOPOINT_CLI;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("yp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) { return fixture::run_cli(kCli, args, dir_ / "log.txt"); }
  std::string log() const {
    std::ifstream f(dir_ / "log.txt");
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  }
  std::string p(const std::string& rel) const { return (dir_ / rel).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("gen-synthetic"), 2) << log();  // --out missing
  EXPECT_EQ(run("gen-synthetic --out " + p("g") + " --override nosuch=1"), 2) << log();
  EXPECT_NE(log().find("error [usage error]"), std::string::npos) << log();
  EXPECT_EQ(run("gen-synthetic --out " + p("g") + " --override count=abc"), 2) << log();
  EXPECT_EQ(run("label --out " + p("l") + " --manifest " + p("missing.tsv")), 2) << log();
  EXPECT_EQ(run("train --out " + p("t") + " --device cuda"), 2) << log();
  EXPECT_EQ(run("finetune --out " + p("f")), 2) << log();
}

TEST_F(Cli, HelpListsConfigKeys) {
  EXPECT_EQ(run("label --help"), 0);
  EXPECT_NE(log().find("adaptation.num_homographies"), std::string::npos) << log();
  EXPECT_EQ(run("train --help"), 0);
  EXPECT_NE(log().find("loss_weights.w_obj"), std::string::npos) << log();
}

TEST_F(Cli, GenSyntheticIsReproducible) {
  ASSERT_EQ(run("gen-synthetic --count 5 --seed 3 --out " + p("a")), 0) << log();
  ASSERT_EQ(run("gen-synthetic --count 5 --seed 3 --out " + p("b")), 0) << log();
  for (const auto& e : fs::directory_iterator(dir_ / "a" / "labels")) {
    EXPECT_TRUE(fixture::same_bytes(e.path(), dir_ / "b" / "labels" / e.path().filename())) << e.path();
  }
  EXPECT_TRUE(fixture::same_bytes(dir_ / "a" / "images" / "000004.png", dir_ / "b" / "images" / "000004.png"));
  EXPECT_TRUE(fs::exists(dir_ / "a" / "resolved_config.json"));
  const auto cfg = nlohmann::json::parse(std::ifstream(dir_ / "a" / "resolved_config.json"));
  EXPECT_EQ(cfg["seed"], 3);
  EXPECT_EQ(cfg["count"], 5);
}

TEST_F(Cli, ConfigFileAndOverridePrecedence) {
  std::ofstream(dir_ / "c.json") << R"({"count": 4, "seed": 9})";
  ASSERT_EQ(run("gen-synthetic --config " + p("c.json") + " --override count=2 --out " + p("o")), 0) << log();
  const auto cfg = nlohmann::json::parse(std::ifstream(dir_ / "o" / "resolved_config.json"));
  EXPECT_EQ(cfg["count"], 2);
  EXPECT_EQ(cfg["seed"], 9);
}

TEST_F(Cli, EvalHpatchesIdentityFixture) {
  fixture::write_hpatches_identity(dir_ / "hp");
  ASSERT_EQ(run("eval-hpatches --root " + p("hp") + " --out " + p("e1")), 0) << log();
  const auto rows = yolopoint::read_metric_rows(dir_ / "e1" / "hpatches_metrics.csv");
  int seen = 0;
  for (const auto& r : rows) {
    if (r.metric == "repeatability") {
      EXPECT_EQ(r.value, 1.0);
      ++seen;
    }
  }
  EXPECT_GT(seen, 0);
  EXPECT_TRUE(fs::exists(dir_ / "e1" / "summary.txt"));
  ASSERT_EQ(run("eval-hpatches --root " + p("hp") + " --out " + p("e2")), 0) << log();
  EXPECT_TRUE(fixture::same_bytes(dir_ / "e1" / "hpatches_metrics.csv", dir_ / "e2" / "hpatches_metrics.csv"));
}

TEST_F(Cli, DataRootFallback) {
  fixture::write_hpatches_identity(dir_ / "hp");
  const std::string env = "YOLOPOINT_DATA_ROOT='" + dir_.string() + "' ";
  const int status = std::system((env + "'" + kCli + "' eval-hpatches --root hp --out " + p("e") + " > " +
                                  p("log.txt") + " 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(status), 0) << log();
}

TEST_F(Cli, VoFromKeypointFiles) {
  fixture::write_vo_sequence(dir_ / "kitti", dir_ / "kp", 3, 0);
  ASSERT_EQ(run("vo --root " + p("kitti") + " --keypoints-dir " + p("kp") + " --out " + p("v1")), 0) << log();
  const auto report = nlohmann::json::parse(std::ifstream(dir_ / "v1" / "report.json"));
  EXPECT_LE(report["translation_rmse_m"].get<double>(), 0.01);
  EXPECT_TRUE(fs::exists(dir_ / "v1" / "trajectory.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "v1" / "trajectory.png"));
  ASSERT_EQ(run("vo --root " + p("kitti") + " --keypoints-dir " + p("kp") + " --out " + p("v2")), 0) << log();
  EXPECT_TRUE(fixture::same_bytes(dir_ / "v1" / "vo_metrics.csv", dir_ / "v2" / "vo_metrics.csv"));
  EXPECT_TRUE(fixture::same_bytes(dir_ / "v1" / "trajectory.txt", dir_ / "v2" / "trajectory.txt"));

  ASSERT_EQ(run("export-plots " + p("v1") + " " + p("v2") + " --out " + p("plots")), 0) << log();
  EXPECT_TRUE(fs::exists(dir_ / "plots" / "trajectories.png"));
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "yolopoint/config.hpp"
#include "yolopoint/errors.hpp"

using namespace yolopoint;
namespace fs = std::filesystem;

namespace {

Json defaults() {
  return {{"seed", 0}, {"name", "run"}, {"train", {{"lr", 0.001}, {"epochs", 10}, {"freeze", true}}}};
}

fs::path write_tmp(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST(Config, OverridesBeatFileBeatDefaults) {
  const auto file = write_tmp("yp_cfg_a.json", R"({"seed": 3, "train": {"epochs": 20}})");
  const Json j = resolve_config(defaults(), file, {"train.epochs=30", "name=other"});
  EXPECT_EQ(j["seed"], 3);
  EXPECT_EQ(j["train"]["epochs"], 30);
  EXPECT_EQ(j["train"]["lr"], 0.001);
  EXPECT_EQ(j["name"], "other");
  // later overrides win
  EXPECT_EQ(resolve_config(defaults(), std::nullopt, {"seed=1", "seed=2"})["seed"], 2);
}

TEST(Config, IntegersWidenToFloats) {
  EXPECT_EQ(resolve_config(defaults(), std::nullopt, {"train.lr=1"})["train"]["lr"], 1);
  EXPECT_THROW(resolve_config(defaults(), std::nullopt, {"train.epochs=1.5"}), UsageError);
}

TEST(Config, RejectsUnknownKeysAndTypeChanges) {
  EXPECT_THROW(resolve_config(defaults(), std::nullopt, {"train.momentum=0.9"}), UsageError);
  EXPECT_THROW(resolve_config(defaults(), std::nullopt, {"nosuch.key=1"}), UsageError);
  EXPECT_THROW(resolve_config(defaults(), std::nullopt, {"train.freeze=yes"}), UsageError);
  EXPECT_THROW(resolve_config(defaults(), std::nullopt, {"train=3"}), UsageError);
  EXPECT_THROW(resolve_config(defaults(), std::nullopt, {"noequals"}), UsageError);
  const auto bad = write_tmp("yp_cfg_b.json", R"({"train": {"lr": "fast"}})");
  EXPECT_THROW(resolve_config(defaults(), bad, {}), UsageError);
  const auto junk = write_tmp("yp_cfg_c.json", "{not json");
  EXPECT_THROW(resolve_config(defaults(), junk, {}), UsageError);
}

TEST(Config, KeyListingInDeclarationOrder) {
  const auto keys = config_keys(defaults());
  ASSERT_EQ(keys.size(), 5u);
  EXPECT_EQ(keys[0].first, "seed");
  EXPECT_EQ(keys[2].first, "train.lr");
  EXPECT_EQ(keys[3].second, "10");
}

TEST(Config, TrainConfigRoundTrip) {
  TrainConfig c;
  c.batch_size = 7;
  c.loss_weights.w_obj = 0.25;
  c.descriptor.positive_margin = 0.9;
  const auto back = train_config_from_json(to_json(c));
  EXPECT_EQ(back.batch_size, 7);
  EXPECT_EQ(back.loss_weights.w_obj, 0.25);
  EXPECT_EQ(back.descriptor.positive_margin, 0.9);
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, OtherSectionsRoundTrip) {
  EXPECT_EQ(to_json(homography_config_from_json(to_json(HomographySamplingConfig{}))),
            to_json(HomographySamplingConfig{}));
  EXPECT_EQ(to_json(synthetic_config_from_json(to_json(SyntheticConfig{}))), to_json(SyntheticConfig{}));
  EXPECT_EQ(to_json(adaptation_config_from_json(to_json(AdaptationConfig{}))), to_json(AdaptationConfig{}));
  EXPECT_EQ(to_json(eval_config_from_json(to_json(EvalConfig{}))), to_json(EvalConfig{}));
  EXPECT_EQ(to_json(vo_config_from_json(to_json(VoConfig{}))), to_json(VoConfig{}));
}

TEST(Config, SectionValidation) {
  Json v = to_json(VoConfig{});
  v["ratio_test"] = 1.5;
  EXPECT_THROW(vo_config_from_json(v), UsageError);
}

#include <gtest/gtest.h>

#include <set>

#include "ctcbench/experiments.hpp"
#include "support.hpp"

using namespace ctcbench;
using ctcbench::testing::group_manifest;
using ctcbench::testing::MemorySource;
using ctcbench::testing::slurp;
using ctcbench::testing::TempDir;

namespace {

constexpr int kSize = 16;

ExperimentConfig small_config(const TempDir& dir, const Manifest& m, const std::string& name = "exp") {
  write_manifest(dir / (name + "_manifest.csv"), m.records);
  ExperimentConfig c;
  c.experiment = name;
  c.output_dir = dir / "results";
  c.manifest = dir / (name + "_manifest.csv");
  c.split.mode = SplitMode::FRACTIONS;
  c.split.val_fraction_ctc = c.split.val_fraction_leuko = 0.2;
  c.split.seed = 3;
  c.augment.seed = 3;
  c.backbone.stage_depths = {1};
  c.backbone.base_width = 4;
  c.backbone.input_size = kSize;
  c.train.epochs = 1;
  c.train.seeds = {0, 1};
  return c;
}

Manifest without_dapi(Manifest m) {
  for (auto& r : m.records) r.dapi_path.reset();
  return m;
}

}  // namespace

TEST(Experiments, EvaluationReadsPrimaryChannelOnly) {
  TempDir dir("hygiene");
  auto config = small_config(dir, group_manifest(30, 5, 30));
  for (ArmName arm : {ArmName::BF_W_DAPI, ArmName::DAPI_W_BF}) {
    MemorySource mem(kSize);
    LoggingImageSource logged(mem);
    config.arm = arm;
    const auto r = run_arm(config, dir / std::string(to_string(arm)), {false, &logged});
    const Channel primary = arm_definition(arm).primary_channel;

    std::set<std::string> eval_ids(r.split.val.begin(), r.split.val.end());
    eval_ids.insert(r.split.test.begin(), r.split.test.end());
    std::size_t eval_loads = 0, other_channel_train = 0;
    for (const auto& a : logged.log()) {
      if (a.stage == Stage::TRAIN) {
        EXPECT_EQ(eval_ids.count(a.cell_id), 0u) << a.cell_id;
        other_channel_train += a.channel != primary;
      } else {
        EXPECT_EQ(a.channel, primary) << a.cell_id << " " << to_string(a.stage);
        ++eval_loads;
      }
    }
    EXPECT_EQ(eval_loads, r.split.val.size() + r.split.test.size());
    EXPECT_EQ(other_channel_train, r.train_records);
  }
}

TEST(Experiments, SampleCountsFollowArmMultiplier) {
  TempDir dir("counts");
  const auto base = small_config(dir, group_manifest(30, 5, 30));
  MemorySource mem(kSize);
  LoadOptions lo;
  lo.verify_images = false;
  const auto manifest = load_manifest(base.manifest, lo);
  std::size_t wo = 0, w = 0;
  for (ArmName arm : kAllArms) {
    auto cfg = base;
    cfg.arm = arm;
    const auto p = prepare_arm(cfg, manifest, mem, arm);
    EXPECT_EQ(p.train.size(), p.train_records * arm_definition(arm).multiplier()) << to_string(arm);
    EXPECT_EQ(p.val.size(), p.split.val.size());
    EXPECT_EQ(p.test.size(), p.split.test.size());
    for (const auto& s : p.val) EXPECT_EQ(s.image.width, kSize);
    if (arm == ArmName::BF_W_DAPI) w = p.train.size();
    if (arm == ArmName::DAPI_W_BF) wo = p.train.size();
  }
  EXPECT_EQ(w, wo);
}

TEST(Experiments, BrightfieldOnlyArmNeedsNoDapi) {
  TempDir dir("nodapi");
  auto config = small_config(dir, without_dapi(group_manifest(20, 4, 20)));
  MemorySource mem(kSize);
  config.arm = ArmName::BF_WO_DAPI;
  const auto r = run_arm(config, dir / "wo", {false, &mem});
  EXPECT_TRUE(r.aggregate.complete);
  EXPECT_EQ(r.runs.size(), 2u);

  config.arm = ArmName::BF_W_DAPI;
  try {
    run_arm(config, dir / "w", {false, &mem});
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "config");
    EXPECT_NE(std::string(e.what()).find("DAPI"), std::string::npos);
  }
}

TEST(Experiments, ArmDirectoryContents) {
  TempDir dir("arm");
  const auto config = small_config(dir, group_manifest(20, 4, 20));
  MemorySource mem(kSize);
  const auto r = run_arm(config, {false, &mem});
  const auto arm_dir = config.experiment_dir() / "BF_W_DAPI";
  EXPECT_EQ(r.dir, arm_dir);
  for (const char* f : {"resolved_config.json", "split.json", "run_manifest.json", "aggregate.json", "f1.csv",
                        "0/checkpoint.ctcw", "0/record.json", "0/metrics.csv", "1/record.json"})
    EXPECT_TRUE(std::filesystem::exists(arm_dir / f)) << f;
  const auto manifest = nlohmann::json::parse(slurp(arm_dir / "run_manifest.json"));
  EXPECT_EQ(manifest["arm_resolution"]["eval_channel"], "BF");
  EXPECT_EQ(manifest["arm_resolution"]["multiplier"], 5);
  EXPECT_EQ(split_from_json(nlohmann::json::parse(slurp(arm_dir / "split.json"))), r.split);
}

TEST(Experiments, RefusesToClobber) {
  TempDir dir("clobber");
  const auto config = small_config(dir, group_manifest(20, 4, 20));
  MemorySource mem(kSize);
  run_arm(config, {false, &mem});
  try {
    run_arm(config, {false, &mem});
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "output");
  }
  EXPECT_NO_THROW(run_arm(config, {true, &mem}));
}

TEST(Experiments, MissingManifestIsTagged) {
  TempDir dir("missing");
  auto config = small_config(dir, group_manifest(20, 4, 20));
  config.manifest = dir / "nope.csv";
  try {
    run_arm(config);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "manifest");
  }
}

TEST(Experiments, ReportsRegenerateByteIdentical) {
  TempDir dir("reports");
  auto config = small_config(dir, group_manifest(20, 4, 20));
  MemorySource mem(kSize);
  const auto rep = run_ablation(config, {ArmName::BF_WO_DAPI, ArmName::BF_W_DAPI}, {false, &mem});
  ASSERT_EQ(rep.entries.size(), 2u);
  const auto exp = config.experiment_dir();
  std::map<std::string, std::string> before;
  for (const char* f : {"ablation.csv", "ablation.md", "f1_vectors.csv"}) {
    before[f] = slurp(exp / f);
    std::filesystem::remove(exp / f);
  }
  const auto summary = regenerate_reports(exp);
  EXPECT_EQ(summary.ablation_rows, 2u);
  for (const auto& [f, text] : before) EXPECT_EQ(slurp(exp / f), text) << f;
  EXPECT_NE(before["ablation.md"].find("BF w/o DAPI"), std::string::npos);
  EXPECT_EQ(before["f1_vectors.csv"].substr(0, 12), "arm,seed,f1\n");

  EXPECT_THROW(run_ablation(config, {ArmName::BF_WO_DAPI}, {false, &mem}), ValidationError);
}

TEST(Experiments, SingleArmTableHasNoBoldCells) {
  TempDir dir("single");
  auto config = small_config(dir, group_manifest(20, 4, 20));
  MemorySource mem(kSize);
  run_ablation(config, {ArmName::AUG1}, {false, &mem});
  const auto md = slurp(config.experiment_dir() / "ablation.md");
  EXPECT_NE(md.find("| **AUG1** |"), std::string::npos) << md;
  EXPECT_EQ(md.find("| **0."), std::string::npos) << md;
}

TEST(Experiments, FailedArmDoesNotStopAblation) {
  TempDir dir("partial");
  auto config = small_config(dir, without_dapi(group_manifest(20, 4, 20)));
  MemorySource mem(kSize);
  const auto rep = run_ablation(config, {ArmName::BF_W_DAPI, ArmName::AUG2}, {false, &mem});
  ASSERT_EQ(rep.arms.size(), 2u);
  EXPECT_FALSE(rep.arms[0].result);
  EXPECT_TRUE(rep.arms[1].result);
  const auto agg = nlohmann::json::parse(slurp(config.experiment_dir() / "BF_W_DAPI" / "aggregate.json"));
  EXPECT_EQ(agg["complete"], false);
  EXPECT_NE(slurp(config.experiment_dir() / "ablation.md").find("(incomplete)"), std::string::npos);
}

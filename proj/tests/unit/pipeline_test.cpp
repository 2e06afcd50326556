#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "tads/checksum.hpp"
#include "tads/error.hpp"
#include "tads/pipeline.hpp"

namespace tads {
namespace {

using nlohmann::json;
using testing::TempDir;

json read_json_file(const std::filesystem::path& p) { return json::parse(read_file(p)); }

TEST(Config, UnknownKeysNameTheirPath) {
  const auto base = std::filesystem::path("/data");
  try {
    config_from_json(json::parse(R"({"dedup": {"tau_semm": 0.9}})"), base);
    FAIL() << "expected InvalidConfig";
  } catch (const InvalidConfig& e) {
    EXPECT_NE(std::string(e.what()).find("dedup.tau_semm"), std::string::npos) << e.what();
  }
  EXPECT_THROW(config_from_json(json::parse(R"({"colour": 1})"), base), InvalidConfig);
  EXPECT_THROW(config_from_json(json::parse(R"({"dedup": {"gamma": "high"}})"), base), InvalidConfig);
  EXPECT_THROW(config_from_json(json::parse(R"({"schema_version": 99})"), base), InvalidConfig);
}

TEST(Config, RelativeInputsResolveAgainstBase) {
  const auto c = config_from_json(
      json::parse(R"({"inputs": {"records": "r.jsonl", "embeddings": "/abs/e.tdsemb", "tasks": "t.json"}})"),
      "/data/run");
  EXPECT_EQ(c.inputs.records, std::filesystem::path("/data/run/r.jsonl"));
  EXPECT_EQ(c.inputs.embeddings, std::filesystem::path("/abs/e.tdsemb"));
  const auto round = config_from_json(config_to_json(c), "/elsewhere");
  EXPECT_EQ(config_to_json(round), config_to_json(c));
}

TEST(Stages, NamesAndDag) {
  for (Stage s : {Stage::kIngest, Stage::kDedup, Stage::kQuality, Stage::kRelevance, Stage::kDiversity,
                  Stage::kTrainDvn, Stage::kSelect, Stage::kReport, Stage::kCalibrate, Stage::kSynth}) {
    EXPECT_EQ(stage_from_name(stage_name(s)), s);
  }
  EXPECT_EQ(stage_name(Stage::kTrainDvn), "train-dvn");
  EXPECT_FALSE(stage_from_name("train"));
  EXPECT_EQ(full_pipeline().size(), 8u);
}

TEST(PipelineRun, SelectBeforeTrainingIsADependencyError) {
  TempDir dir;
  const auto cfg = load_config(testing::write_small_run(dir.path(), 1));
  Pipeline p(cfg, {dir / "out", false});
  try {
    p.run_stage(Stage::kSelect);
    FAIL() << "expected DependencyError";
  } catch (const DependencyError& e) {
    EXPECT_EQ(e.stage(), "train-dvn");
    EXPECT_EQ(e.kind(), ErrorKind::kDependency);
  }
}

TEST(PipelineRun, FullRunShortCircuitsAndForces) {
  TempDir dir;
  const auto cfg = load_config(testing::write_small_run(dir.path(), 2));
  {
    Pipeline p(cfg, {dir / "out", false});
    for (const auto& o : p.run_all()) EXPECT_FALSE(o.skipped) << stage_name(o.stage);
  }
  const auto selected = read_file(dir / "out/selected_ids.txt");
  {
    Pipeline p(cfg, {dir / "out", false});
    for (const auto& o : p.run_all()) EXPECT_TRUE(o.skipped) << stage_name(o.stage);
  }
  {
    Pipeline p(cfg, {dir / "out", true});
    EXPECT_FALSE(p.run_stage(Stage::kIngest).skipped);
  }
  EXPECT_EQ(read_file(dir / "out/selected_ids.txt"), selected);

  // A config change invalidates the stage and everything downstream of it.
  auto changed = cfg;
  changed.tau = 0.4;
  Pipeline p(changed, {dir / "out", false});
  EXPECT_TRUE(p.run_stage(Stage::kTrainDvn).skipped);
  EXPECT_FALSE(p.run_stage(Stage::kSelect).skipped);
  EXPECT_THROW(
      {
        auto again = changed;
        again.dedup.tau_edit = 2;
        Pipeline q(again, {dir / "other", false});
        q.run_stage(Stage::kDedup);
      },
      DependencyError);
}

TEST(PipelineRun, ManifestChecksumsMatchFiles) {
  TempDir dir;
  const auto cfg = load_config(testing::write_small_run(dir.path(), 3));
  Pipeline p(cfg, {dir / "out", false});
  p.run_all();
  const auto m = read_json_file(dir / "out/manifest.json");
  EXPECT_EQ(m, p.manifest());
  std::size_t files = 0;
  for (const auto& [stage, entry] : m.at("stages").items()) {
    for (const auto& out : entry.at("outputs")) {
      const auto path = dir / ("out/" + out.at("path").get<std::string>());
      ASSERT_TRUE(std::filesystem::exists(path)) << path;
      EXPECT_EQ(sha256_file(path), out.at("sha256").get<std::string>());
      ++files;
    }
  }
  EXPECT_GE(files, 15u);
  EXPECT_EQ(m.at("master_seed"), 3);
  EXPECT_TRUE(m.at("seeds").is_object());
}

TEST(PipelineRun, SameSeedSameSelection) {
  TempDir dir;
  const auto cfg = load_config(testing::write_small_run(dir.path(), 4));
  for (const char* out : {"a", "b"}) {
    Pipeline p(cfg, {dir / out, false});
    p.run_all();
  }
  EXPECT_EQ(read_file(dir / "a/selected_ids.txt"), read_file(dir / "b/selected_ids.txt"));
  EXPECT_EQ(read_file(dir / "a/scores.json"), read_file(dir / "b/scores.json"));
  EXPECT_EQ(read_file(dir / "a/manifest.json"), read_file(dir / "b/manifest.json"));
}

TEST(PipelineRun, ReportAccountsForEveryStage) {
  TempDir dir;
  const auto cfg = load_config(testing::write_small_run(dir.path(), 5));
  Pipeline p(cfg, {dir / "out", false});
  p.run_all();
  const auto report = read_json_file(dir / "out/report.json");
  const auto dedup = read_json_file(dir / "out/dedup_report.json");
  const auto& c = report.at("counts");
  EXPECT_EQ(c.at("input"), 400);
  EXPECT_EQ(c.at("removed_metadata"), dedup.at("removed").at("metadata"));
  EXPECT_EQ(c.at("removed_semantic"), dedup.at("removed").at("semantic"));
  EXPECT_EQ(c.at("removed_quality_guided"), dedup.at("removed").at("quality_guided"));
  EXPECT_EQ(c.at("input").get<std::size_t>() - dedup.at("removed").at("total").get<std::size_t>(),
            c.at("refined_pool").get<std::size_t>());
  std::ifstream sel(dir / "out/selected_ids.txt");
  std::size_t lines = 0;
  for (std::string l; std::getline(sel, l);) ++lines;
  EXPECT_EQ(c.at("selected").get<std::size_t>(), lines);
  char ratio[32];
  std::snprintf(ratio, sizeof ratio, "%.3f", static_cast<double>(lines) / 400.0);
  EXPECT_EQ(report.at("selection_ratio").get<std::string>(), ratio);
  EXPECT_EQ(report.at("reward_curve").size(), 3u);
  EXPECT_EQ(report.at("artifacts").at("selected_ids.txt"),
            sha256_file(dir / "out/selected_ids.txt"));
  const auto text = read_file(dir / "out/report.txt");
  EXPECT_NE(text.find(ratio), std::string::npos);
}

TEST(PipelineRun, LockFileExcludesASecondRun) {
  TempDir dir;
  const auto cfg = load_config(testing::write_small_run(dir.path(), 6));
  {
    Pipeline p(cfg, {dir / "out", false});
    EXPECT_TRUE(std::filesystem::exists(dir / "out/.tads.lock"));
    EXPECT_THROW(Pipeline(cfg, {dir / "out", false}), IoError);
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "out/.tads.lock"));
  EXPECT_NO_THROW(Pipeline(cfg, {dir / "out", false}));
}

TEST(PipelineRun, CalibrateAndSynthStages) {
  TempDir dir;
  const auto cfg_path = testing::write_small_run(dir.path(), 7, R"({"synth": {"n": 50, "d": 8, "clusters": 2, "seed": 3}})");
  const auto cfg = load_config(cfg_path);
  Pipeline p(cfg, {dir / "out", false});
  p.run_stage(Stage::kIngest);
  p.run_stage(Stage::kCalibrate);
  const auto cal = read_json_file(dir / "out/calibration.json");
  EXPECT_EQ(cal.at("points").size(), cfg.calibrate.tau_edit.size() * cfg.calibrate.tau_sem.size());
  p.run_stage(Stage::kSynth);
  EXPECT_TRUE(std::filesystem::exists(dir / "out/records.jsonl"));
  EXPECT_EQ(read_records(dir / "out/records.jsonl").size(), 50u);
}

}  // namespace
}  // namespace tads

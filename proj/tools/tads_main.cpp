#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tads/error.hpp"
#include "tads/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDependency = 3;
constexpr int kExitData = 4;

int exit_code(const tads::Error& e) {
  switch (e.kind()) {
    case tads::ErrorKind::kInvalidConfig: return kExitConfig;
    case tads::ErrorKind::kDependency: return kExitDependency;
    default: return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tads: task-aware data selection over precomputed embeddings"};
  std::string config_path;
  std::string out_dir;
  std::string stage_arg;
  bool force = false;
  std::optional<std::uint64_t> seed;

  app.add_option("--config", config_path, "pipeline config (JSON)")->required();
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--stage", stage_arg,
                 "run one stage: ingest, dedup, quality, relevance, diversity, train-dvn, "
                 "select, report, calibrate, synth (default: ingest through report)");
  app.add_flag("--force", force, "re-run stages even when inputs are unchanged");
  app.add_option("--seed", seed, "override the master seed");
  app.set_version_flag("--version", std::string(tads::engine_version()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    tads::PipelineConfig config = tads::load_config(config_path);
    if (seed) config.seed = *seed;
    tads::Pipeline pipeline(std::move(config), tads::RunOptions{out_dir, force});

    std::vector<tads::StageOutcome> outcomes;
    if (stage_arg.empty()) {
      outcomes = pipeline.run_all();
    } else {
      const auto stage = tads::stage_from_name(stage_arg);
      if (!stage) throw tads::InvalidConfig("--stage: unknown stage '" + stage_arg + "'");
      outcomes.push_back(pipeline.run_stage(*stage));
    }
    for (const auto& o : outcomes) {
      std::cout << tads::stage_name(o.stage) << (o.skipped ? ": up to date" : ": done");
      for (const auto& path : o.outputs) std::cout << ' ' << path;
      std::cout << '\n';
    }
    return 0;
  } catch (const tads::Error& e) {
    std::cerr << "tads: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "tads: " << e.what() << '\n';
    return kExitData;
  }
}

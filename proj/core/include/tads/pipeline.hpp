#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tads/dedup.hpp"
#include "tads/diversity.hpp"
#include "tads/dvn.hpp"
#include "tads/fdo.hpp"
#include "tads/proxy.hpp"
#include "tads/quality.hpp"
#include "tads/relevance.hpp"
#include "tads/synth.hpp"

namespace tads {

inline constexpr int kConfigSchemaVersion = 1;

std::string_view engine_version() noexcept;

struct QualityStageConfig {
  QualityTrainConfig train;
  std::size_t em_iterations = 100;
  std::size_t true_set_size = 200;
  std::vector<LabelingFunction> labeling_functions = default_labeling_functions();
};

struct RelevanceStageConfig {
  double epsilon = kRelevanceEpsilon;
  RelevanceEmbedding embedding = RelevanceEmbedding::kImage;
};

struct CalibrateConfig {
  std::vector<std::size_t> tau_edit = {1, 3, 5, 8};
  std::vector<double> tau_sem = {0.88, 0.90, 0.92, 0.95};
};

struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  struct Inputs {
    std::filesystem::path records;
    std::filesystem::path embeddings;
    std::filesystem::path tasks;
  } inputs;
  DedupConfig dedup;
  QualityStageConfig quality;
  RelevanceStageConfig relevance;
  DiversityConfig diversity;
  DvnConfig dvn;  // task_count is taken from the task manifest
  FdoConfig fdo;  // meta.weights is taken from the task manifest
  ProxyConfig proxy;
  double tau = 0.5;
  CalibrateConfig calibrate;
  std::optional<SynthSpec> synth;

  void validate() const;
};

// Parses a config document. Unknown keys and type errors raise InvalidConfig
// naming the offending key path ("dedup.tau_sem"). Relative input paths are
// resolved against base_dir.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage {
  kIngest,
  kDedup,
  kQuality,
  kRelevance,
  kDiversity,
  kTrainDvn,
  kSelect,
  kReport,
  kCalibrate,
  kSynth,
};

std::string_view stage_name(Stage stage) noexcept;
std::optional<Stage> stage_from_name(std::string_view name) noexcept;
std::vector<Stage> stage_dependencies(Stage stage);
// ingest, dedup, quality, relevance, diversity, train-dvn, select, report
std::vector<Stage> full_pipeline();

struct RunOptions {
  std::filesystem::path out_dir;
  bool force = false;
};

struct StageOutcome {
  Stage stage = Stage::kIngest;
  bool skipped = false;  // inputs and config unchanged since the last run
  std::vector<std::string> outputs;
};

// Runs stages against one output directory. Holds a lock file in that
// directory for its lifetime.
//
// Every stage writes its outputs atomically and records them, with SHA-256
// checksums and a key derived from its config section and upstream
// checksums, in manifest.json. Wall-clock timings go to timings.json so the
// manifest itself is reproducible byte for byte.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, RunOptions options);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  // Throws DependencyError naming the first upstream stage whose outputs are
  // missing or stale.
  StageOutcome run_stage(Stage stage);
  std::vector<StageOutcome> run_all();

  const nlohmann::json& manifest() const noexcept { return manifest_; }
  const std::filesystem::path& out_dir() const noexcept { return options_.out_dir; }

 private:
  std::vector<std::string> stage_ingest();
  std::vector<std::string> stage_dedup();
  std::vector<std::string> stage_quality();
  std::vector<std::string> stage_relevance();
  std::vector<std::string> stage_diversity();
  std::vector<std::string> stage_train_dvn();
  std::vector<std::string> stage_select();
  std::vector<std::string> stage_report();
  std::vector<std::string> stage_calibrate();
  std::vector<std::string> stage_synth();

  std::string stage_key(Stage stage) const;
  bool stage_current(Stage stage) const;
  void check_dependencies(Stage stage) const;
  const Corpus& corpus();
  const TaskSuite& tasks();
  std::vector<std::size_t> pool_indices();
  std::vector<ValueProfile> load_profiles(std::vector<std::size_t>* cluster_labels,
                                          std::size_t* n_clusters);
  RngStream stream(std::string_view purpose) const;
  std::string write_output(const std::string& name, std::string_view bytes);
  void save_manifest();

  PipelineConfig config_;
  RunOptions options_;
  nlohmann::json manifest_;
  nlohmann::json timings_;
  std::optional<Corpus> corpus_;
  std::optional<TaskSuite> tasks_;
  std::filesystem::path lock_path_;
};

// Summary of a completed run, built from the manifest and stage outputs.
nlohmann::json emit_report(const std::filesystem::path& out_dir, const nlohmann::json& manifest);
std::string render_report(const nlohmann::json& report);

}  // namespace tads

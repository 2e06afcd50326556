#include "tads/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>
#include <sstream>

#include "tads/checksum.hpp"
#include "tads/error.hpp"
#include "tads/weights_io.hpp"

#ifndef TADS_VERSION
#define TADS_VERSION "0.0.0"
#endif

namespace tads {
namespace {

using nlohmann::json;

// Reads one config object, tracking which keys were consumed so that the
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw InvalidConfig(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    used_.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw InvalidConfig(child_path(key) + ": wrong type (" + it->dump() + ")");
    }
  }

  const json* child(const char* key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!used_.count(key)) throw InvalidConfig(child_path(key) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

LabelingFunction parse_lf(const json& j, const std::string& path) {
  Section s(j, path);
  LabelingFunction lf;
  std::string op = ">";
  s.get("name", lf.name);
  s.get("feature", lf.feature);
  s.get("op", op);
  s.get("threshold", lf.threshold);
  s.get("vote", lf.vote_if_true);
  s.finish();
  if (op == ">") {
    lf.comparator = Comparator::kGreater;
  } else if (op == "<") {
    lf.comparator = Comparator::kLess;
  } else {
    throw InvalidConfig(path + ".op: expected \">\" or \"<\"");
  }
  if (!feature_from_name(lf.feature)) throw InvalidConfig(path + ".feature: unknown feature '" + lf.feature + "'");
  if (lf.vote_if_true != 1 && lf.vote_if_true != -1) throw InvalidConfig(path + ".vote: expected 1 or -1");
  if (lf.name.empty()) lf.name = lf.feature + op + std::to_string(lf.threshold);
  return lf;
}

json lf_to_json(const LabelingFunction& lf) {
  return {{"name", lf.name},
          {"feature", lf.feature},
          {"op", lf.comparator == Comparator::kGreater ? ">" : "<"},
          {"threshold", lf.threshold},
          {"vote", lf.vote_if_true}};
}

json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string format_ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", r);
  return buf;
}

constexpr const char* kSeedPurposes[] = {
    "dedup/kmeans",      "quality/true-set",     "quality/train", "diversity/kmeans",
    "train-dvn/init",    "train-dvn/proxy-init", "train-dvn/fdo", "calibrate/kmeans",
};

}  // namespace

std::string_view engine_version() noexcept { return TADS_VERSION; }

void PipelineConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw InvalidConfig("schema_version: expected " + std::to_string(kConfigSchemaVersion) + ", got " +
                        std::to_string(schema_version));
  }
  dedup.validate();
  quality.train.validate();
  if (quality.em_iterations == 0) throw InvalidConfig("quality.em_iterations must be positive");
  if (quality.labeling_functions.empty()) throw InvalidConfig("quality.labeling_functions must not be empty");
  if (!(relevance.epsilon >= 0.0)) throw InvalidConfig("relevance.epsilon must be >= 0");
  diversity.validate();
  DvnConfig dvn_check = dvn;
  dvn_check.task_count = 1;
  dvn_check.validate();
  FdoConfig fdo_check = fdo;
  fdo_check.meta.weights = {1.0};
  fdo_check.validate();
  proxy.validate();
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidConfig("select.tau must be in [0, 1]");
  if (calibrate.tau_edit.empty() || calibrate.tau_sem.empty()) {
    throw InvalidConfig("calibrate grids must not be empty");
  }
  if (synth) synth->validate();
}

PipelineConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  Section root(j, "");
  root.get("schema_version", c.schema_version);
  root.get("seed", c.seed);
  if (const json* in = root.child("inputs")) {
    Section s(*in, "inputs");
    std::string records, embeddings, tasks;
    s.get("records", records);
    s.get("embeddings", embeddings);
    s.get("tasks", tasks);
    s.finish();
    c.inputs = {resolve(base_dir, records), resolve(base_dir, embeddings), resolve(base_dir, tasks)};
  }
  if (const json* d = root.child("dedup")) {
    Section s(*d, "dedup");
    s.get("alpha_r", c.dedup.alpha_r);
    s.get("alpha_l", c.dedup.alpha_l);
    s.get("gamma", c.dedup.gamma);
    s.get("m_clusters", c.dedup.m_clusters);
    s.get("tau_edit", c.dedup.tau_edit);
    s.get("tau_sem", c.dedup.tau_sem);
    s.get("kmeans_batch_size", c.dedup.kmeans_batch_size);
    s.get("kmeans_iterations", c.dedup.kmeans_iterations);
    s.finish();
  }
  if (const json* q = root.child("quality")) {
    Section s(*q, "quality");
    s.get("lambda1", c.quality.train.lambda1);
    s.get("lambda2", c.quality.train.lambda2);
    s.get("epochs", c.quality.train.epochs);
    s.get("learning_rate", c.quality.train.learning_rate);
    s.get("batch_size", c.quality.train.batch_size);
    s.get("hidden", c.quality.train.hidden);
    s.get("em_iterations", c.quality.em_iterations);
    s.get("true_set_size", c.quality.true_set_size);
    if (const json* lfs = s.child("labeling_functions")) {
      if (!lfs->is_array()) throw InvalidConfig("quality.labeling_functions: expected an array");
      c.quality.labeling_functions.clear();
      for (std::size_t i = 0; i < lfs->size(); ++i) {
        c.quality.labeling_functions.push_back(
            parse_lf((*lfs)[i], "quality.labeling_functions[" + std::to_string(i) + "]"));
      }
    }
    s.finish();
  }
  if (const json* r = root.child("relevance")) {
    Section s(*r, "relevance");
    std::string embedding = "image";
    s.get("epsilon", c.relevance.epsilon);
    s.get("embedding", embedding);
    s.finish();
    if (embedding == "image") {
      c.relevance.embedding = RelevanceEmbedding::kImage;
    } else if (embedding == "text") {
      c.relevance.embedding = RelevanceEmbedding::kText;
    } else {
      throw InvalidConfig("relevance.embedding: expected \"image\" or \"text\"");
    }
  }
  if (const json* d = root.child("diversity")) {
    Section s(*d, "diversity");
    s.get("n_clusters", c.diversity.n_clusters);
    s.get("delta", c.diversity.delta);
    s.get("epsilon", c.diversity.epsilon);
    s.get("kmeans_batch_size", c.diversity.kmeans_batch_size);
    s.get("kmeans_iterations", c.diversity.kmeans_iterations);
    s.finish();
  }
  if (const json* d = root.child("dvn")) {
    Section s(*d, "dvn");
    s.get("head_width", c.dvn.head_width);
    s.get("fusion_hidden", c.dvn.fusion_hidden);
    s.get("beta", c.dvn.beta);
    s.finish();
  }
  if (const json* f = root.child("fdo")) {
    Section s(*f, "fdo");
    s.get("iterations", c.fdo.iterations);
    s.get("learning_rate", c.fdo.learning_rate);
    s.get("sigma_pert", c.fdo.meta.sigma_pert);
    s.get("clamp_lo", c.fdo.meta.clamp_lo);
    s.get("clamp_hi", c.fdo.meta.clamp_hi);
    s.get("common_random_numbers", c.fdo.meta.common_random_numbers);
    s.get("replicates", c.fdo.meta.replicates);
    s.get("threads", c.fdo.meta.threads);
    s.finish();
  }
  if (const json* p = root.child("proxy")) {
    Section s(*p, "proxy");
    s.get("projection_dim", c.proxy.projection_dim);
    s.get("temperature", c.proxy.temperature);
    s.get("epochs", c.proxy.epochs);
    s.get("learning_rate", c.proxy.learning_rate);
    s.get("batch_size", c.proxy.batch_size);
    s.get("samples_budget", c.proxy.samples_budget);
    s.finish();
  }
  if (const json* sel = root.child("select")) {
    Section s(*sel, "select");
    s.get("tau", c.tau);
    s.finish();
  }
  if (const json* cal = root.child("calibrate")) {
    Section s(*cal, "calibrate");
    s.get("tau_edit", c.calibrate.tau_edit);
    s.get("tau_sem", c.calibrate.tau_sem);
    s.finish();
  }
  if (const json* syn = root.child("synth")) {
    c.synth = synth_spec_from_json(*syn);
  }
  root.finish();
  c.validate();
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json lfs = json::array();
  for (const auto& lf : c.quality.labeling_functions) lfs.push_back(lf_to_json(lf));
  json j = {
      {"schema_version", c.schema_version},
      {"seed", c.seed},
      {"inputs",
       {{"records", c.inputs.records.string()},
        {"embeddings", c.inputs.embeddings.string()},
        {"tasks", c.inputs.tasks.string()}}},
      {"dedup",
       {{"alpha_r", c.dedup.alpha_r},
        {"alpha_l", c.dedup.alpha_l},
        {"gamma", c.dedup.gamma},
        {"m_clusters", c.dedup.m_clusters},
        {"tau_edit", c.dedup.tau_edit},
        {"tau_sem", c.dedup.tau_sem},
        {"kmeans_batch_size", c.dedup.kmeans_batch_size},
        {"kmeans_iterations", c.dedup.kmeans_iterations}}},
      {"quality",
       {{"lambda1", c.quality.train.lambda1},
        {"lambda2", c.quality.train.lambda2},
        {"epochs", c.quality.train.epochs},
        {"learning_rate", c.quality.train.learning_rate},
        {"batch_size", c.quality.train.batch_size},
        {"hidden", c.quality.train.hidden},
        {"em_iterations", c.quality.em_iterations},
        {"true_set_size", c.quality.true_set_size},
        {"labeling_functions", lfs}}},
      {"relevance",
       {{"epsilon", c.relevance.epsilon},
        {"embedding", c.relevance.embedding == RelevanceEmbedding::kImage ? "image" : "text"}}},
      {"diversity",
       {{"n_clusters", c.diversity.n_clusters},
        {"delta", c.diversity.delta},
        {"epsilon", c.diversity.epsilon},
        {"kmeans_batch_size", c.diversity.kmeans_batch_size},
        {"kmeans_iterations", c.diversity.kmeans_iterations}}},
      {"dvn",
       {{"head_width", c.dvn.head_width}, {"fusion_hidden", c.dvn.fusion_hidden}, {"beta", c.dvn.beta}}},
      {"fdo",
       {{"iterations", c.fdo.iterations},
        {"learning_rate", c.fdo.learning_rate},
        {"sigma_pert", c.fdo.meta.sigma_pert},
        {"clamp_lo", c.fdo.meta.clamp_lo},
        {"clamp_hi", c.fdo.meta.clamp_hi},
        {"common_random_numbers", c.fdo.meta.common_random_numbers},
        {"replicates", c.fdo.meta.replicates},
        {"threads", c.fdo.meta.threads}}},
      {"proxy",
       {{"projection_dim", c.proxy.projection_dim},
        {"temperature", c.proxy.temperature},
        {"epochs", c.proxy.epochs},
        {"learning_rate", c.proxy.learning_rate},
        {"batch_size", c.proxy.batch_size},
        {"samples_budget", c.proxy.samples_budget}}},
      {"select", {{"tau", c.tau}}},
      {"calibrate", {{"tau_edit", c.calibrate.tau_edit}, {"tau_sem", c.calibrate.tau_sem}}},
  };
  if (c.synth) j["synth"] = synth_spec_to_json(*c.synth);
  return j;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw InvalidConfig(path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw InvalidConfig(std::string("cannot read config: ") + e.what());
  }
  return config_from_json(j, path.parent_path());
}

std::string_view stage_name(Stage stage) noexcept {
  switch (stage) {
    case Stage::kIngest: return "ingest";
    case Stage::kDedup: return "dedup";
    case Stage::kQuality: return "quality";
    case Stage::kRelevance: return "relevance";
    case Stage::kDiversity: return "diversity";
    case Stage::kTrainDvn: return "train-dvn";
    case Stage::kSelect: return "select";
    case Stage::kReport: return "report";
    case Stage::kCalibrate: return "calibrate";
    case Stage::kSynth: return "synth";
  }
  return "unknown";
}

std::optional<Stage> stage_from_name(std::string_view name) noexcept {
  for (Stage s : {Stage::kIngest, Stage::kDedup, Stage::kQuality, Stage::kRelevance,
                  Stage::kDiversity, Stage::kTrainDvn, Stage::kSelect, Stage::kReport,
                  Stage::kCalibrate, Stage::kSynth}) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

std::vector<Stage> stage_dependencies(Stage stage) {
  switch (stage) {
    case Stage::kDedup:
    case Stage::kCalibrate: return {Stage::kIngest};
    case Stage::kQuality:
    case Stage::kRelevance:
    case Stage::kDiversity: return {Stage::kDedup};
    case Stage::kTrainDvn: return {Stage::kQuality, Stage::kRelevance, Stage::kDiversity};
    case Stage::kSelect: return {Stage::kTrainDvn};
    case Stage::kReport: return {Stage::kSelect};
    default: return {};
  }
}

std::vector<Stage> full_pipeline() {
  return {Stage::kIngest,    Stage::kDedup,    Stage::kQuality, Stage::kRelevance,
          Stage::kDiversity, Stage::kTrainDvn, Stage::kSelect,  Stage::kReport};
}

Pipeline::Pipeline(PipelineConfig config, RunOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  config_.validate();
  if (options_.out_dir.empty()) throw InvalidConfig("an output directory is required");
  std::filesystem::create_directories(options_.out_dir);
  lock_path_ = options_.out_dir / ".tads.lock";
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const int err = errno;
    const std::string path = lock_path_.string();
    lock_path_.clear();
    if (err == EEXIST) {
      throw IoError(options_.out_dir.string() + " is in use by another run (remove " + path +
                    " if that run is gone)");
    }
    throw IoError("cannot create " + path + ": " + std::strerror(err));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);

  const auto manifest_path = options_.out_dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) manifest_ = read_json(manifest_path);
  if (!manifest_.is_object()) manifest_ = json::object();
  if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
  manifest_["engine_version"] = std::string(engine_version());
  manifest_["schema_version"] = config_.schema_version;
  manifest_["config_sha256"] = sha256_hex(config_to_json(config_).dump());
  manifest_["master_seed"] = config_.seed;
  json seeds = json::object();
  for (const char* purpose : kSeedPurposes) seeds[purpose] = derive_seed(config_.seed, purpose);
  if (config_.synth) seeds["synth"] = config_.synth->seed;
  manifest_["seeds"] = seeds;
  manifest_["timings_file"] = "timings.json";

  const auto timings_path = options_.out_dir / "timings.json";
  if (std::filesystem::exists(timings_path)) timings_ = read_json(timings_path);
  if (!timings_.is_object()) timings_ = json::object();
}

Pipeline::~Pipeline() {
  if (!lock_path_.empty()) {
    std::error_code ec;
    std::filesystem::remove(lock_path_, ec);
  }
}

RngStream Pipeline::stream(std::string_view purpose) const {
  return RngStream(derive_seed(config_.seed, purpose), purpose);
}

std::string Pipeline::write_output(const std::string& name, std::string_view bytes) {
  write_file_atomic(options_.out_dir / name, bytes);
  return name;
}

void Pipeline::save_manifest() {
  write_file_atomic(options_.out_dir / "manifest.json", manifest_.dump(2) + "\n");
  write_file_atomic(options_.out_dir / "timings.json", timings_.dump(2) + "\n");
}

std::string Pipeline::stage_key(Stage stage) const {
  const json cfg = config_to_json(config_);
  json section = json::object();
  switch (stage) {
    case Stage::kIngest:
      section["inputs"] = {{"records", sha256_file(config_.inputs.records)},
                           {"embeddings", sha256_file(config_.inputs.embeddings)}};
      break;
    case Stage::kDedup: section = cfg["dedup"]; break;
    case Stage::kQuality: section = cfg["quality"]; break;
    case Stage::kRelevance:
      section = {{"relevance", cfg["relevance"]},
                 {"tasks", config_.inputs.tasks.empty() ? "" : sha256_file(config_.inputs.tasks)}};
      break;
    case Stage::kDiversity: section = cfg["diversity"]; break;
    case Stage::kTrainDvn:
      section = {{"dvn", cfg["dvn"]}, {"fdo", cfg["fdo"]}, {"proxy", cfg["proxy"]}};
      section["fdo"].erase("threads");
      break;
    case Stage::kSelect: section = cfg["select"]; break;
    case Stage::kCalibrate: section = {{"dedup", cfg["dedup"]}, {"calibrate", cfg["calibrate"]}}; break;
    case Stage::kSynth: section = cfg.contains("synth") ? cfg["synth"] : json(nullptr); break;
    case Stage::kReport: break;
  }
  json upstream = json::object();
  for (Stage dep : stage_dependencies(stage)) {
    const std::string name(stage_name(dep));
    upstream[name] = manifest_["stages"].contains(name) ? manifest_["stages"][name]["outputs"] : json(nullptr);
  }
  const json key = {{"stage", std::string(stage_name(stage))},
                    {"engine", std::string(engine_version())},
                    {"seed", config_.seed},
                    {"config", section},
                    {"upstream", upstream}};
  return sha256_hex(key.dump());
}

bool Pipeline::stage_current(Stage stage) const {
  const std::string name(stage_name(stage));
  const json& stages = manifest_["stages"];
  if (!stages.contains(name)) return false;
  const json& entry = stages[name];
  for (const auto& out : entry["outputs"]) {
    const auto path = options_.out_dir / out["path"].get<std::string>();
    if (!std::filesystem::exists(path) || sha256_file(path) != out["sha256"].get<std::string>()) {
      return false;
    }
  }
  try {
    return entry["key"].get<std::string>() == stage_key(stage);
  } catch (const IoError&) {
    return false;
  }
}

void Pipeline::check_dependencies(Stage stage) const {
  for (Stage dep : stage_dependencies(stage)) {
    if (!stage_current(dep)) throw DependencyError(std::string(stage_name(dep)));
  }
}

StageOutcome Pipeline::run_stage(Stage stage) {
  check_dependencies(stage);
  StageOutcome outcome;
  outcome.stage = stage;
  const std::string name(stage_name(stage));
  if (!options_.force && stage_current(stage)) {
    outcome.skipped = true;
    for (const auto& out : manifest_["stages"][name]["outputs"]) {
      outcome.outputs.push_back(out["path"].get<std::string>());
    }
    return outcome;
  }

  const auto start = std::chrono::steady_clock::now();
  switch (stage) {
    case Stage::kIngest: outcome.outputs = stage_ingest(); break;
    case Stage::kDedup: outcome.outputs = stage_dedup(); break;
    case Stage::kQuality: outcome.outputs = stage_quality(); break;
    case Stage::kRelevance: outcome.outputs = stage_relevance(); break;
    case Stage::kDiversity: outcome.outputs = stage_diversity(); break;
    case Stage::kTrainDvn: outcome.outputs = stage_train_dvn(); break;
    case Stage::kSelect: outcome.outputs = stage_select(); break;
    case Stage::kReport: outcome.outputs = stage_report(); break;
    case Stage::kCalibrate: outcome.outputs = stage_calibrate(); break;
    case Stage::kSynth: outcome.outputs = stage_synth(); break;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json outputs = json::array();
  for (const auto& out : outcome.outputs) {
    outputs.push_back({{"path", out}, {"sha256", sha256_file(options_.out_dir / out)}});
  }
  manifest_["stages"][name] = {{"key", stage_key(stage)}, {"outputs", outputs}};
  timings_[name] = seconds;
  save_manifest();
  return outcome;
}

std::vector<StageOutcome> Pipeline::run_all() {
  std::vector<StageOutcome> outcomes;
  for (Stage s : full_pipeline()) outcomes.push_back(run_stage(s));
  return outcomes;
}

const Corpus& Pipeline::corpus() {
  if (!corpus_) {
    if (config_.inputs.records.empty() || config_.inputs.embeddings.empty()) {
      throw InvalidConfig("inputs.records and inputs.embeddings are required");
    }
    corpus_ = ingest(config_.inputs.records, config_.inputs.embeddings);
  }
  return *corpus_;
}

const TaskSuite& Pipeline::tasks() {
  if (!tasks_) {
    if (config_.inputs.tasks.empty()) throw InvalidConfig("inputs.tasks is required");
    tasks_ = load_task_suite(config_.inputs.tasks);
    check_disjoint(*tasks_, corpus().records);
  }
  return *tasks_;
}

std::vector<std::size_t> Pipeline::pool_indices() {
  const Corpus& c = corpus();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < c.records.size(); ++i) index[c.records[i].id] = i;
  const json survivors = read_json(options_.out_dir / "survivors.json");
  std::vector<std::size_t> pool;
  for (const auto& id : survivors.at("ids")) {
    auto it = index.find(id.get<std::string>());
    if (it == index.end()) throw CorpusMismatch("survivor '" + id.get<std::string>() + "' is not in the corpus");
    pool.push_back(it->second);
  }
  return pool;
}

std::vector<std::string> Pipeline::stage_ingest() {
  const Corpus& c = corpus();
  manifest_["input_corpus"] = {{"corpus_id", c.manifest.corpus_id},
                               {"checksum", c.manifest.checksum},
                               {"record_count", c.manifest.record_count}};
  return {write_output("corpus.json", manifest_to_json(c.manifest).dump(2) + "\n")};
}

std::vector<std::string> Pipeline::stage_dedup() {
  RngStream rng = stream("dedup/kmeans");
  const auto result = run_dedup_pipeline(corpus(), config_.dedup, rng);
  const json survivors = {{"ids", result.report.survivors}};
  return {write_output("dedup_report.json", report_to_json(result.report).dump(1) + "\n"),
          write_output("survivors.json", survivors.dump(1) + "\n")};
}

std::vector<std::string> Pipeline::stage_quality() {
  const Corpus& c = corpus();
  const auto pool = pool_indices();
  std::vector<OperatorFeatureVector> features;
  features.reserve(pool.size());
  for (std::size_t r : pool) features.push_back(extract_features(c, r));
  const auto& lfs = config_.quality.labeling_functions;
  const VoteMatrix votes = vote_matrix(features, lfs);
  const LabelModel model = fit_label_model(votes, config_.quality.em_iterations);
  const auto weak = weak_labels(model, votes);

  RngStream true_rng = stream("quality/true-set");
  const TrueLabelSet true_set = build_true_label_set(c, pool, true_rng, config_.quality.true_set_size);
  RngStream train_rng = stream("quality/train");
  const auto trained = train_quality_predictor(features, weak, true_set, config_.quality.train, train_rng);

  json ids = json::array();
  json q = json::array();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ids.push_back(c.records[pool[i]].id);
    q.push_back(predict_quality(trained.predictor, features[i]));
  }
  json lf_names = json::array();
  for (const auto& lf : lfs) lf_names.push_back(lf.name);
  const json doc = {{"ids", ids},
                    {"quality", q},
                    {"weak_label", weak},
                    {"label_model",
                     {{"labeling_functions", lf_names},
                      {"accuracies", model.accuracies},
                      {"coverage_pos", model.coverage_pos},
                      {"coverage_neg", model.coverage_neg},
                      {"prior", model.prior},
                      {"log_likelihood", model.log_likelihood}}},
                    {"true_set_size", true_set.entries.size()},
                    {"loss_curve", trained.loss_curve}};
  save_networks(options_.out_dir / "quality_model.tadsnet", {trained.predictor.net});
  return {"quality_model.tadsnet", write_output("quality.json", doc.dump(1) + "\n")};
}

std::vector<std::string> Pipeline::stage_relevance() {
  const Corpus& c = corpus();
  const TaskSuite& suite = tasks();
  const auto pool = pool_indices();
  const DenseMatrix rel = relevance_matrix(c, pool, suite.supports, config_.relevance.epsilon,
                                           config_.relevance.embedding);
  json task_ids = json::array();
  for (const auto& s : suite.supports) task_ids.push_back(s.task_id);
  json ids = json::array();
  json values = json::array();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ids.push_back(c.records[pool[i]].id);
    const auto row = rel.row(i);
    values.push_back(std::vector<double>(row.begin(), row.end()));
  }
  const json doc = {{"task_ids", task_ids}, {"ids", ids}, {"values", values}};
  return {write_output("relevance.json", doc.dump(1) + "\n")};
}

std::vector<std::string> Pipeline::stage_diversity() {
  const Corpus& c = corpus();
  const auto pool = pool_indices();
  RngStream rng = stream("diversity/kmeans");
  const ClusterAssignment assignment = cluster_pool(joint_matrix(c, pool), config_.diversity, rng);
  std::vector<std::string> ids;
  json factors = json::array();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ids.push_back(c.records[pool[i]].id);
    factors.push_back(diversity_factor(assignment, i, config_.diversity));
  }
  const json doc = {{"ids", ids}, {"factor", factors}, {"sizes", assignment.sizes}};
  return {write_output("clusters.json", assignment_to_json(assignment, ids).dump(1) + "\n"),
          write_output("diversity.json", doc.dump(1) + "\n")};
}

std::vector<ValueProfile> Pipeline::load_profiles(std::vector<std::size_t>* cluster_labels,
                                                  std::size_t* n_clusters) {
  const json q = read_json(options_.out_dir / "quality.json");
  const json r = read_json(options_.out_dir / "relevance.json");
  const json d = read_json(options_.out_dir / "diversity.json");
  const auto ids = q.at("ids").get<std::vector<std::string>>();
  if (r.at("ids").get<std::vector<std::string>>() != ids || d.at("ids").get<std::vector<std::string>>() != ids) {
    throw CorpusMismatch("quality, relevance and diversity outputs cover different samples");
  }
  std::vector<ValueProfile> profiles(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    profiles[i].quality = q.at("quality")[i].get<double>();
    profiles[i].relevance = r.at("values")[i].get<std::vector<double>>();
    profiles[i].diversity = d.at("factor")[i].get<double>();
  }
  if (cluster_labels) {
    const auto assignment = assignment_from_json(read_json(options_.out_dir / "clusters.json"), ids);
    *cluster_labels = assignment.labels;
    if (n_clusters) *n_clusters = assignment.sizes.size();
  }
  return profiles;
}

std::vector<std::string> Pipeline::stage_train_dvn() {
  const Corpus& c = corpus();
  const TaskSuite& suite = tasks();
  const auto pool = pool_indices();
  std::vector<std::size_t> labels;
  std::size_t n_clusters = 0;
  const auto profiles = load_profiles(&labels, &n_clusters);
  if (profiles.size() != pool.size()) throw CorpusMismatch("profiles do not match the refined pool");

  DvnConfig dvn_cfg = config_.dvn;
  dvn_cfg.task_count = suite.size();
  RngStream init_rng = stream("train-dvn/init");
  DvnParams params = DvnParams::random(dvn_cfg, init_rng);

  auto ctx = std::make_shared<ProxyRewardContext>();
  std::vector<std::size_t> rows;
  for (std::size_t r : pool) rows.push_back(c.records[r].embedding_index);
  ctx->pool_image = c.embeddings.image.select_rows(rows);
  ctx->pool_text = c.embeddings.text.select_rows(rows);
  ctx->evaluators = suite.evaluators;
  ctx->weights = suite.weights();
  ctx->config = config_.proxy;
  RngStream proxy_rng = stream("train-dvn/proxy-init");
  ctx->initial = ProxyModel::initial(c.embeddings.d, config_.proxy, proxy_rng);

  FdoConfig fdo_cfg = config_.fdo;
  fdo_cfg.meta.weights = suite.weights();
  const FdoState state = run_fdo(params, profiles, labels, n_clusters, make_proxy_reward(ctx), fdo_cfg,
                                 derive_seed(config_.seed, "train-dvn/fdo"));

  std::vector<std::string> task_ids;
  for (const auto& s : suite.supports) task_ids.push_back(s.task_id);
  std::string log;
  for (const auto& entry : state.log) log += iteration_log_to_json(entry, task_ids).dump() + "\n";

  json ids = json::array();
  for (std::size_t r : pool) ids.push_back(c.records[r].id);
  const json scores = {{"ids", ids}, {"scores", state.scores}, {"cluster", labels},
                       {"n_clusters", n_clusters}};
  const json meta = {{"beta", params.beta},
                     {"task_count", dvn_cfg.task_count},
                     {"head_width", dvn_cfg.head_width},
                     {"fusion_hidden", dvn_cfg.fusion_hidden},
                     {"parameter_count", params.parameter_count()},
                     {"reward_history", state.reward_history}};
  save_networks(options_.out_dir / "dvn.tadsnet", params.networks());
  return {"dvn.tadsnet", write_output("dvn.json", meta.dump(1) + "\n"),
          write_output("fdo_log.jsonl", log), write_output("scores.json", scores.dump(1) + "\n")};
}

std::vector<std::string> Pipeline::stage_select() {
  const json meta = read_json(options_.out_dir / "dvn.json");
  const DvnParams params =
      DvnParams::from_networks(load_networks(options_.out_dir / "dvn.tadsnet"), meta.at("beta").get<double>());
  const auto profiles = load_profiles(nullptr, nullptr);
  const auto ids = read_json(options_.out_dir / "quality.json").at("ids").get<std::vector<std::string>>();
  const auto selected = final_select(params, profiles, config_.tau);
  std::string lines;
  for (std::size_t i : selected) lines += ids[i] + "\n";
  const std::size_t input_count = corpus().records.size();
  const double ratio = input_count ? static_cast<double>(selected.size()) / static_cast<double>(input_count) : 0.0;
  const json doc = {{"tau", config_.tau},
                    {"input_count", input_count},
                    {"pool_size", profiles.size()},
                    {"selected_count", selected.size()},
                    {"selection_ratio", format_ratio(ratio)}};
  return {write_output("selected_ids.txt", lines), write_output("selection.json", doc.dump(1) + "\n")};
}

std::vector<std::string> Pipeline::stage_report() {
  const json report = emit_report(options_.out_dir, manifest_);
  return {write_output("report.json", report.dump(2) + "\n"),
          write_output("report.txt", render_report(report))};
}

std::vector<std::string> Pipeline::stage_calibrate() {
  RngStream rng = stream("calibrate/kmeans");
  const Corpus& c = corpus();
  const auto points = calibrate_dedup(c, config_.dedup, config_.calibrate.tau_edit, config_.calibrate.tau_sem, rng);
  json rows = json::array();
  for (const auto& p : points) {
    json removed = json::array();
    for (std::size_t r : p.removed) removed.push_back(c.records[r].id);
    rows.push_back({{"tau_edit", p.tau_edit},
                    {"tau_sem", p.tau_sem},
                    {"candidates", p.candidates},
                    {"removed_count", p.removed.size()},
                    {"removed", removed}});
  }
  return {write_output("calibration.json", json{{"points", rows}}.dump(1) + "\n")};
}

std::vector<std::string> Pipeline::stage_synth() {
  if (!config_.synth) throw InvalidConfig("synth: section missing from config");
  const SynthCorpus synth = generate_corpus(*config_.synth);
  write_synth(synth, options_.out_dir);
  std::vector<std::string> outputs = {"records.jsonl", "embeddings.tdsemb", "ground_truth.json"};
  if (!synth.tasks.supports.empty()) {
    outputs.push_back("tasks.json");
    for (const auto& s : synth.tasks.supports) {
      outputs.push_back(s.task_id + ".protos.tdsemb");
      outputs.push_back(s.task_id + ".val.tdsemb");
      outputs.push_back(s.task_id + ".val.jsonl");
    }
  }
  return outputs;
}

json emit_report(const std::filesystem::path& out_dir, const json& manifest) {
  const json corpus_doc = read_json(out_dir / "corpus.json");
  const json dedup = read_json(out_dir / "dedup_report.json");
  const json selection = read_json(out_dir / "selection.json");
  const json scores = read_json(out_dir / "scores.json");

  std::vector<double> curve;
  std::istringstream log(read_file(out_dir / "fdo_log.jsonl"));
  std::string line;
  while (std::getline(log, line)) {
    if (!line.empty()) curve.push_back(json::parse(line).at("J").get<double>());
  }

  const auto n_clusters = scores.at("n_clusters").get<std::size_t>();
  std::vector<double> sum(n_clusters, 0.0);
  std::vector<std::size_t> count(n_clusters, 0);
  const auto& v = scores.at("scores");
  const auto& labels = scores.at("cluster");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto l = labels[i].get<std::size_t>();
    sum[l] += v[i].get<double>();
    ++count[l];
  }
  json clusters = json::array();
  for (std::size_t k = 0; k < n_clusters; ++k) {
    clusters.push_back({{"cluster", k},
                        {"size", count[k]},
                        {"mean_score", count[k] ? sum[k] / static_cast<double>(count[k]) : 0.0}});
  }

  const auto removed = dedup.at("removed");
  const json counts = {{"input", corpus_doc.at("record_count")},
                       {"removed_metadata", removed.at("metadata")},
                       {"removed_semantic", removed.at("semantic")},
                       {"removed_quality_guided", removed.at("quality_guided")},
                       {"refined_pool", dedup.at("survivor_count")},
                       {"selected", selection.at("selected_count")}};
  json checksums = json::object();
  for (const auto& [stage, entry] : manifest.at("stages").items()) {
    for (const auto& out : entry.at("outputs")) checksums[out.at("path").get<std::string>()] = out.at("sha256");
  }
  return {{"engine_version", manifest.value("engine_version", "")},
          {"corpus_id", corpus_doc.at("corpus_id")},
          {"counts", counts},
          {"selection_ratio", selection.at("selection_ratio")},
          {"tau", selection.at("tau")},
          {"reward_curve", curve},
          {"clusters", clusters},
          {"artifacts", checksums}};
}

std::string render_report(const json& report) {
  std::ostringstream out;
  const auto& c = report.at("counts");
  auto row = [&out](const std::string& label, const std::string& value) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-26s %s\n", label.c_str(), value.c_str());
    out << buf;
  };
  out << "TADS curation report\n"
      << "corpus  " << report.at("corpus_id").get<std::string>() << "\n\n";
  row("input samples", c.at("input").dump());
  row("removed (metadata)", c.at("removed_metadata").dump());
  row("removed (semantic)", c.at("removed_semantic").dump());
  row("removed (quality-guided)", c.at("removed_quality_guided").dump());
  row("refined pool", c.at("refined_pool").dump());
  row("selected (tau=" + report.at("tau").dump() + ")", c.at("selected").dump());
  row("selection ratio", report.at("selection_ratio").get<std::string>());
  out << "\n"
      << "meta-reward curve (" << report.at("reward_curve").size() << " iterations)\n";
  const auto& curve = report.at("reward_curve");
  for (std::size_t i = 0; i < curve.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "  %3zu  %.4f\n", i, curve[i].get<double>());
    out << buf;
  }
  out << "\nper-cluster mean DVN score\n";
  for (const auto& cl : report.at("clusters")) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  cluster %3zu  size %6zu  mean %.4f\n", cl.at("cluster").get<std::size_t>(),
                  cl.at("size").get<std::size_t>(), cl.at("mean_score").get<double>());
    out << buf;
  }
  out << "\nartifacts\n";
  for (const auto& [path, sha] : report.at("artifacts").items()) {
    out << "  " << sha.get<std::string>() << "  " << path << "\n";
  }
  return out.str();
}

}  // namespace tads

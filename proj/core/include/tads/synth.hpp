#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tads/corpus.hpp"
#include "tads/tasks.hpp"

namespace tads {

struct SynthTask {
  std::string id;
  TaskKind kind = TaskKind::kZeroShotClassification;
  std::vector<std::size_t> clusters;  // clusters carrying utility for this task
  double weight = 0.0;                // 0 for every task selects 1/K
};

struct SynthSpec {
  std::size_t n = 1000;  // records written, duplicates included
  std::size_t d = 64;
  std::size_t clusters = 8;
  std::vector<double> cluster_weights;  // empty: equal sizes
  double spread = 0.5;      // within-cluster latent noise
  // 0: within-cluster noise is isotropic. Otherwise each cluster varies only
  // inside its own subspace of this dimension, orthogonal to every center and
  // to the other clusters' subspaces (needs clusters * (1 + dim) <= d).
  std::size_t subspace_dim = 0;
  double pair_noise = 0.3;  // image/text noise around the shared latent
  std::size_t exact_duplicates = 0;
  std::size_t near_duplicates = 0;
  std::size_t paraphrase_duplicates = 0;
  double corrupt_fraction = 0.0;
  // Clusters whose every pair is mismatched, with an isotropic random caption
  // embedding (on top of corrupt_fraction).
  std::vector<std::size_t> noise_clusters;
  double missing_field_rate = 0.05;
  double ocr_rate = 0.2;
  std::vector<SynthTask> tasks;
  std::size_t validation_per_cluster = 20;
  // Zero-shot classes contributed by each relevant cluster. With more than
  // one, class j sits at +/- spread along subspace axis j/2 of its cluster
  // (needs classes_per_cluster <= 2 * subspace_dim).
  std::size_t classes_per_cluster = 1;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t duplicate_count() const noexcept {
    return exact_duplicates + near_duplicates + paraphrase_duplicates;
  }
};

nlohmann::json synth_spec_to_json(const SynthSpec& spec);
// Rejects unknown keys; missing keys keep their defaults.
SynthSpec synth_spec_from_json(const nlohmann::json& j);

enum class DuplicateKind { kNone, kOriginal, kExact, kNearText, kParaphrase };

struct GroundTruthEntry {
  std::string id;
  bool clean = true;
  std::size_t cluster = 0;
  std::optional<std::size_t> duplicate_group;
  DuplicateKind duplicate_kind = DuplicateKind::kNone;
  std::vector<std::uint8_t> task_utility;
};

struct GroundTruth {
  std::vector<GroundTruthEntry> samples;  // record order
  std::size_t duplicate_groups = 0;
};

nlohmann::json ground_truth_to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

struct SynthCorpus {
  std::vector<SampleRecord> records;
  EmbeddingBlock embeddings;
  TaskSuite tasks;
  GroundTruth truth;
  std::vector<std::vector<double>> cluster_centers;
};

// Gaussian-mixture corpus with planted duplicates, corrupt pairs and
// task-relevant clusters. Embedding values are rounded to f32 so that the
// in-memory corpus equals what ingest() reads back from disk.
SynthCorpus generate_corpus(const SynthSpec& spec);

// In-memory Corpus view (manifest fields left empty).
Corpus to_corpus(const SynthCorpus& synth);

struct SynthPaths {
  std::filesystem::path records;
  std::filesystem::path embeddings;
  std::filesystem::path tasks;
  std::filesystem::path ground_truth;
};

// Writes records.jsonl, embeddings.tdsemb, tasks.json (plus task files) and
// ground_truth.json into dir.
SynthPaths write_synth(const SynthCorpus& synth, const std::filesystem::path& dir);

struct ExactReward {
  double expected = 0.0;
  std::vector<double> partials;  // dE[J]/dv_i
};

using MaskReward = std::function<double(std::span<const std::uint8_t> mask)>;

inline constexpr std::size_t kMaxEnumerationSamples = 20;

// E[J] over independent Bernoulli(v_i) masks and its partial derivatives via
// the score-function identity, by enumerating all 2^n masks. Sums use a
// pairwise tree so the result does not depend on evaluation order.
// Throws InvalidConfig when n > 20 or some v_i is outside (0, 1).
ExactReward exact_expected_reward(std::span<const double> scores, const MaskReward& reward);
// Table form: table[m] is J for the mask whose bit i is sample i.
ExactReward exact_expected_reward(std::span<const double> scores, std::span<const double> table);

}  // namespace tads

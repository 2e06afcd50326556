#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tads/corpus.hpp"
#include "tads/rng.hpp"

namespace tads {

struct DedupConfig {
  double alpha_r = 1e-6;  // per pixel
  double alpha_l = 0.01;  // per caption character
  double gamma = 0.8;     // retention ratio per semantic cluster
  // Semantic clusters M. 0 selects ceil(n / 500) clamped to [8, 512] and
  // capped at n.
  std::size_t m_clusters = 0;
  std::size_t tau_edit = 5;  // absolute character edits, strict <
  double tau_sem = 0.92;     // text-embedding cosine, strict >
  std::size_t kmeans_batch_size = 256;
  std::size_t kmeans_iterations = 50;

  void validate() const;
  std::size_t resolved_clusters(std::size_t n) const;
};

enum class DedupLayer { kMetadata = 0, kSemantic = 1, kQualityGuided = 2 };

struct DedupGroup {
  DedupLayer layer = DedupLayer::kMetadata;
  std::string key;  // hash, url, cluster index or component label
  std::vector<std::string> retained;
  std::vector<std::string> removed;
  std::string reason;
};

struct DedupReport {
  std::size_t input_count = 0;
  std::array<std::size_t, 3> removed_by_layer{};
  std::vector<DedupGroup> groups;
  std::vector<std::string> survivors;

  std::size_t total_removed() const {
    return removed_by_layer[0] + removed_by_layer[1] + removed_by_layer[2];
  }
};

// Record indices surviving one layer (in input order) plus its audit groups.
struct LayerResult {
  std::vector<std::size_t> survivors;
  std::vector<DedupGroup> groups;
};

struct SemanticLayerResult : LayerResult {
  std::size_t clusters = 0;
  // Semantic cluster of each survivor, parallel to `survivors`.
  std::vector<std::size_t> survivor_clusters;
};

// S_init = alpha_r * width * height + alpha_l * caption characters. The
// resolution term is 0 when either dimension is missing.
double init_quality_score(const SampleRecord& record, const DedupConfig& config);

// Exact-duplicate removal: group candidates by content hash, then the
// survivors by URL; keep the S_init maximizer of each collision set (smallest
// id on ties).
LayerResult metadata_dedup(std::span<const SampleRecord> records,
                           std::span<const std::size_t> candidates, const DedupConfig& config);

// Clusters joint embeddings into M groups and keeps the ceil(gamma*|C|)
// highest-S_init members of each.
SemanticLayerResult semantic_dedup(const Corpus& corpus, std::span<const std::size_t> candidates,
                                   const DedupConfig& config, RngStream& rng);

// Edit distance below tau_edit, or text cosine above tau_sem.
bool redundancy_indicator(const Corpus& corpus, std::size_t a, std::size_t b,
                          const DedupConfig& config);

// Within each cluster, groups records into connected components of the
// redundancy graph and keeps the best-aligned member of each (smallest id on
// ties). `clusters` is parallel to `survivors`.
LayerResult quality_guided_dedup(const Corpus& corpus, std::span<const std::size_t> survivors,
                                 std::span<const std::size_t> clusters,
                                 const DedupConfig& config);

struct DedupResult {
  DedupReport report;
  std::vector<std::size_t> survivors;  // record indices of U'
};

// Metadata, then semantic, then quality-guided deduplication.
DedupResult run_dedup_pipeline(const Corpus& corpus, const DedupConfig& config, RngStream& rng);

nlohmann::json report_to_json(const DedupReport& report);

struct CalibrationPoint {
  std::size_t tau_edit = 0;
  double tau_sem = 0.0;
  std::size_t candidates = 0;  // records entering the quality-guided layer
  std::vector<std::size_t> removed;
};

// Re-runs only the quality-guided layer over a threshold grid on top of one
// metadata + semantic pass, giving the removal-versus-threshold curve.
std::vector<CalibrationPoint> calibrate_dedup(const Corpus& corpus, const DedupConfig& config,
                                              std::span<const std::size_t> tau_edits,
                                              std::span<const double> tau_sems, RngStream& rng);

}  // namespace tads

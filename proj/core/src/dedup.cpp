#include "tads/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "tads/error.hpp"
#include "tads/kmeans.hpp"
#include "tads/text.hpp"

namespace tads {
namespace {

// Orders by descending score, then ascending id.
struct BetterFirst {
  std::span<const SampleRecord> records;
  const std::vector<double>& score;  // indexed by record

  bool operator()(std::size_t a, std::size_t b) const {
    if (score[a] != score[b]) return score[a] > score[b];
    return records[a].id < records[b].id;
  }
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

template <typename KeyFn>
LayerResult collapse_collisions(std::span<const SampleRecord> records,
                                std::span<const std::size_t> candidates,
                                const std::vector<double>& score, KeyFn key,
                                const std::string& reason) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t idx : candidates) {
    if (auto k = key(records[idx])) groups[*k].push_back(idx);
  }
  std::vector<bool> removed(records.size(), false);
  LayerResult result;
  for (auto& [k, members] : groups) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end(), BetterFirst{records, score});
    DedupGroup group{DedupLayer::kMetadata, k, {records[members[0]].id}, {}, reason};
    for (std::size_t m = 1; m < members.size(); ++m) {
      removed[members[m]] = true;
      group.removed.push_back(records[members[m]].id);
    }
    result.groups.push_back(std::move(group));
  }
  for (std::size_t idx : candidates) {
    if (!removed[idx]) result.survivors.push_back(idx);
  }
  return result;
}

struct TextView {
  std::u32string caption;
  std::vector<double> unit_text;
};

bool indicator(const TextView& a, const TextView& b, const DedupConfig& config) {
  if (dot(a.unit_text, b.unit_text) > config.tau_sem) return true;
  if (config.tau_edit == 0) return false;
  return levenshtein_bounded(a.caption, b.caption, config.tau_edit - 1) < config.tau_edit;
}

std::vector<TextView> text_views(const Corpus& corpus, std::span<const std::size_t> records) {
  std::vector<TextView> views;
  views.reserve(records.size());
  for (std::size_t r : records) {
    views.push_back({utf8_codepoints(corpus.records[r].caption),
                     normalized(corpus.text_embedding(r))});
  }
  return views;
}

LayerResult quality_guided_impl(const Corpus& corpus, std::span<const std::size_t> survivors,
                                std::span<const std::size_t> clusters,
                                const std::vector<TextView>& views, const DedupConfig& config) {
  const auto& records = corpus.records;
  std::map<std::size_t, std::vector<std::size_t>> by_cluster;  // positions into survivors
  for (std::size_t p = 0; p < survivors.size(); ++p) by_cluster[clusters[p]].push_back(p);

  std::vector<bool> removed(survivors.size(), false);
  LayerResult result;
  for (const auto& [cluster, members] : by_cluster) {
    UnionFind uf(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        // An edge inside an existing component cannot change the partition.
        if (uf.find(i) == uf.find(j)) continue;
        if (indicator(views[members[i]], views[members[j]], config)) uf.unite(i, j);
      }
    }
    std::map<std::size_t, std::vector<std::size_t>> components;
    for (std::size_t i = 0; i < members.size(); ++i) components[uf.find(i)].push_back(i);
    for (const auto& [root, comp] : components) {
      if (comp.size() < 2) continue;
      std::size_t best = comp[0];
      double best_score = -2.0;
      for (std::size_t c : comp) {
        const std::size_t rec = survivors[members[c]];
        const double s = alignment_score(corpus.embeddings, records[rec].embedding_index);
        if (s > best_score || (s == best_score && records[rec].id < records[survivors[members[best]]].id)) {
          best = c;
          best_score = s;
        }
      }
      DedupGroup group{DedupLayer::kQualityGuided,
                       "cluster " + std::to_string(cluster) + " / " +
                           records[survivors[members[best]]].id,
                       {records[survivors[members[best]]].id},
                       {},
                       "redundant captions (edit distance or text-embedding similarity)"};
      for (std::size_t c : comp) {
        if (c == best) continue;
        removed[members[c]] = true;
        group.removed.push_back(records[survivors[members[c]]].id);
      }
      result.groups.push_back(std::move(group));
    }
  }
  for (std::size_t p = 0; p < survivors.size(); ++p) {
    if (!removed[p]) result.survivors.push_back(survivors[p]);
  }
  return result;
}

}  // namespace

void DedupConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidConfig("dedup.gamma must be in (0, 1]");
  if (!(tau_sem > -1.0 && tau_sem < 1.0)) throw InvalidConfig("dedup.tau_sem must be in (-1, 1)");
  if (!(alpha_r >= 0.0) || !(alpha_l >= 0.0)) {
    throw InvalidConfig("dedup.alpha_r and dedup.alpha_l must be non-negative");
  }
  if (kmeans_batch_size == 0) throw InvalidConfig("dedup.kmeans_batch_size must be positive");
}

std::size_t DedupConfig::resolved_clusters(std::size_t n) const {
  if (m_clusters != 0) return m_clusters;
  const std::size_t automatic = std::clamp<std::size_t>((n + 499) / 500, 8, 512);
  return std::min(automatic, std::max<std::size_t>(n, 1));
}

double init_quality_score(const SampleRecord& record, const DedupConfig& config) {
  double resolution = 0.0;
  if (record.width_px && record.height_px) {
    resolution = static_cast<double>(*record.width_px) * static_cast<double>(*record.height_px);
  }
  return config.alpha_r * resolution +
         config.alpha_l * static_cast<double>(char_length(record.caption));
}

LayerResult metadata_dedup(std::span<const SampleRecord> records,
                           std::span<const std::size_t> candidates, const DedupConfig& config) {
  std::vector<double> score(records.size(), 0.0);
  for (std::size_t idx : candidates) score[idx] = init_quality_score(records[idx], config);

  LayerResult by_hash = collapse_collisions(
      records, candidates, score, [](const SampleRecord& r) { return r.content_hash; },
      "content_hash collision");
  LayerResult by_url = collapse_collisions(
      records, by_hash.survivors, score, [](const SampleRecord& r) { return r.url; },
      "url collision");
  by_hash.groups.insert(by_hash.groups.end(), by_url.groups.begin(), by_url.groups.end());
  by_url.groups = std::move(by_hash.groups);
  return by_url;
}

SemanticLayerResult semantic_dedup(const Corpus& corpus, std::span<const std::size_t> candidates,
                                   const DedupConfig& config, RngStream& rng) {
  config.validate();
  SemanticLayerResult result;
  if (candidates.empty()) return result;
  const std::size_t m = config.resolved_clusters(candidates.size());
  if (m > candidates.size()) {
    throw InvalidConfig("dedup.m_clusters=" + std::to_string(m) + " exceeds " +
                        std::to_string(candidates.size()) + " records");
  }
  const DenseMatrix joint = joint_matrix(corpus, candidates);
  KMeansOptions options{m, config.kmeans_batch_size, config.kmeans_iterations};
  const KMeansResult km = kmeans_cluster(joint, options, rng);
  result.clusters = m;

  const auto& records = corpus.records;
  std::vector<double> score(records.size(), 0.0);
  for (std::size_t idx : candidates) score[idx] = init_quality_score(records[idx], config);

  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t p = 0; p < candidates.size(); ++p) members[km.assignments[p]].push_back(candidates[p]);

  std::vector<bool> keep(records.size(), false);
  std::vector<std::size_t> cluster_of(records.size(), 0);
  for (std::size_t c = 0; c < m; ++c) {
    auto& group_members = members[c];
    if (group_members.empty()) continue;
    std::sort(group_members.begin(), group_members.end(), BetterFirst{records, score});
    const auto quota = static_cast<std::size_t>(
        std::ceil(config.gamma * static_cast<double>(group_members.size()) - 1e-12));
    const std::size_t keep_count = std::clamp<std::size_t>(quota, 1, group_members.size());
    DedupGroup group{DedupLayer::kSemantic, "cluster " + std::to_string(c), {}, {},
                     "semantic cluster trim to ceil(gamma*|C|)"};
    for (std::size_t r = 0; r < group_members.size(); ++r) {
      cluster_of[group_members[r]] = c;
      if (r < keep_count) {
        keep[group_members[r]] = true;
        group.retained.push_back(records[group_members[r]].id);
      } else {
        group.removed.push_back(records[group_members[r]].id);
      }
    }
    if (!group.removed.empty()) result.groups.push_back(std::move(group));
  }
  for (std::size_t idx : candidates) {
    if (!keep[idx]) continue;
    result.survivors.push_back(idx);
    result.survivor_clusters.push_back(cluster_of[idx]);
  }
  return result;
}

bool redundancy_indicator(const Corpus& corpus, std::size_t a, std::size_t b,
                          const DedupConfig& config) {
  const std::size_t edits = levenshtein(corpus.records[a].caption, corpus.records[b].caption);
  if (edits < config.tau_edit) return true;
  return cosine_similarity(corpus.text_embedding(a), corpus.text_embedding(b)) > config.tau_sem;
}

LayerResult quality_guided_dedup(const Corpus& corpus, std::span<const std::size_t> survivors,
                                 std::span<const std::size_t> clusters,
                                 const DedupConfig& config) {
  if (survivors.size() != clusters.size()) {
    throw ShapeError("quality_guided_dedup: one cluster label per survivor required");
  }
  return quality_guided_impl(corpus, survivors, clusters, text_views(corpus, survivors), config);
}

DedupResult run_dedup_pipeline(const Corpus& corpus, const DedupConfig& config, RngStream& rng) {
  config.validate();
  DedupResult result;
  DedupReport& report = result.report;
  report.input_count = corpus.records.size();
  if (corpus.records.empty()) return result;

  std::vector<std::size_t> all(corpus.records.size());
  std::iota(all.begin(), all.end(), 0);

  LayerResult meta = metadata_dedup(corpus.records, all, config);
  SemanticLayerResult sem = semantic_dedup(corpus, meta.survivors, config, rng);
  LayerResult fine = quality_guided_dedup(corpus, sem.survivors, sem.survivor_clusters, config);

  report.removed_by_layer = {all.size() - meta.survivors.size(),
                             meta.survivors.size() - sem.survivors.size(),
                             sem.survivors.size() - fine.survivors.size()};
  for (auto* layer : {&meta.groups, &sem.groups, &fine.groups}) {
    report.groups.insert(report.groups.end(), layer->begin(), layer->end());
  }
  for (std::size_t idx : fine.survivors) report.survivors.push_back(corpus.records[idx].id);
  result.survivors = std::move(fine.survivors);
  return result;
}

nlohmann::json report_to_json(const DedupReport& report) {
  static constexpr const char* kLayerNames[] = {"metadata", "semantic", "quality_guided"};
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : report.groups) {
    groups.push_back({{"layer", kLayerNames[static_cast<int>(g.layer)]},
                      {"key", g.key},
                      {"retained", g.retained},
                      {"removed", g.removed},
                      {"reason", g.reason}});
  }
  return {{"input_count", report.input_count},
          {"removed",
           {{"metadata", report.removed_by_layer[0]},
            {"semantic", report.removed_by_layer[1]},
            {"quality_guided", report.removed_by_layer[2]},
            {"total", report.total_removed()}}},
          {"survivor_count", report.survivors.size()},
          {"groups", std::move(groups)}};
}

std::vector<CalibrationPoint> calibrate_dedup(const Corpus& corpus, const DedupConfig& config,
                                              std::span<const std::size_t> tau_edits,
                                              std::span<const double> tau_sems, RngStream& rng) {
  config.validate();
  std::vector<std::size_t> all(corpus.records.size());
  std::iota(all.begin(), all.end(), 0);
  const LayerResult meta = metadata_dedup(corpus.records, all, config);
  const SemanticLayerResult sem = semantic_dedup(corpus, meta.survivors, config, rng);
  const std::vector<TextView> views = text_views(corpus, sem.survivors);

  std::vector<CalibrationPoint> curve;
  for (std::size_t tau_edit : tau_edits) {
    for (double tau_sem : tau_sems) {
      DedupConfig point_config = config;
      point_config.tau_edit = tau_edit;
      point_config.tau_sem = tau_sem;
      point_config.validate();
      const LayerResult fine =
          quality_guided_impl(corpus, sem.survivors, sem.survivor_clusters, views, point_config);
      CalibrationPoint point{tau_edit, tau_sem, sem.survivors.size(), {}};
      std::vector<bool> kept(corpus.records.size(), false);
      for (std::size_t idx : fine.survivors) kept[idx] = true;
      for (std::size_t idx : sem.survivors) {
        if (!kept[idx]) point.removed.push_back(idx);
      }
      curve.push_back(std::move(point));
    }
  }
  return curve;
}

}  // namespace tads

#include "tads/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "tads/checksum.hpp"
#include "tads/error.hpp"
#include "tads/rng.hpp"

namespace tads {
namespace {

using nlohmann::json;

std::vector<double> gaussian(std::size_t d, RngStream& rng, double scale) {
  std::vector<double> v(d);
  const double s = scale / std::sqrt(static_cast<double>(d));
  for (double& x : v) x = s * rng.normal();
  return v;
}

std::vector<double> add_noise(std::span<const double> base, double scale, RngStream& rng) {
  auto noise = gaussian(base.size(), rng, scale);
  for (std::size_t i = 0; i < base.size(); ++i) noise[i] += base[i];
  normalize_in_place(noise);
  return noise;
}

// Unit vector whose cosine with unit `v` is exactly `target`.
std::vector<double> rotate_to_cosine(std::span<const double> v, double target, RngStream& rng) {
  std::vector<double> h = gaussian(v.size(), rng, 1.0);
  const double along = dot(h, v);
  for (std::size_t i = 0; i < v.size(); ++i) h[i] -= along * v[i];
  normalize_in_place(h);
  const double a = std::sqrt(1.0 / (target * target) - 1.0);
  std::vector<double> out(v.begin(), v.end());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] += a * h[i];
  normalize_in_place(out);
  return out;
}

void round_to_f32(std::span<double> v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

std::vector<std::vector<double>> orthonormal_centers(std::size_t k, std::size_t d, RngStream& rng) {
  std::vector<std::vector<double>> centers;
  while (centers.size() < k) {
    auto v = gaussian(d, rng, 1.0);
    for (const auto& c : centers) {
      const double p = dot(v, c);
      for (std::size_t i = 0; i < d; ++i) v[i] -= p * c[i];
    }
    if (l2_norm(v) < 1e-6) continue;
    normalize_in_place(v);
    centers.push_back(std::move(v));
  }
  return centers;
}

std::vector<std::string> make_vocabulary(RngStream& rng) {
  static constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ne", "ru", "ta", "vi", "so",
                                               "pe", "du", "ga", "fi", "ho", "ze", "ba", "ly",
                                               "cor", "tin", "mar", "quo", "sel", "wen", "pra", "xu"};
  constexpr std::size_t kSyllableCount = std::size(kSyllables);
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (words.size() < 600) {
    std::string w;
    const std::size_t parts = 2 + rng.below(2);
    for (std::size_t p = 0; p < parts; ++p) w += kSyllables[rng.below(kSyllableCount)];
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

std::string make_phrase(const std::vector<std::string>& vocab, std::size_t lo, std::size_t hi,
                        RngStream& rng) {
  const std::size_t count = lo + rng.below(hi - lo + 1);
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    if (i) out += ' ';
    out += vocab[rng.below(vocab.size())];
  }
  return out;
}

// Applies 1-3 random single-character edits.
std::string edit_caption(std::string s, RngStream& rng) {
  const std::size_t edits = 1 + rng.below(3);
  for (std::size_t e = 0; e < edits; ++e) {
    const char c = static_cast<char>('a' + rng.below(26));
    const std::size_t op = s.size() <= 1 ? 1 : rng.below(3);
    if (op == 0) {
      s[rng.below(s.size())] = c;
    } else if (op == 1) {
      s.insert(s.begin() + static_cast<std::ptrdiff_t>(rng.below(s.size() + 1)), c);
    } else {
      s.erase(s.begin() + static_cast<std::ptrdiff_t>(rng.below(s.size())));
    }
  }
  return s;
}

std::string random_hex(RngStream& rng, std::size_t chars) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  while (out.size() < chars) {
    std::uint64_t v = rng.next_u64();
    for (int i = 0; i < 16 && out.size() < chars; ++i, v >>= 4) out += kHex[v & 0xF];
  }
  return out;
}

std::map<std::string, std::optional<double>> make_fields(bool clean, double missing_rate,
                                                          RngStream& rng) {
  struct Range {
    const char* name;
    double clean_lo, clean_hi, corrupt_lo, corrupt_hi;
  };
  static constexpr Range kRanges[] = {
      {"blur_score", 0.4, 1.0, 0.2, 0.9},
      {"ocr_region_ratio", 0.0, 0.3, 0.0, 0.6},
      {"lang_confidence", 0.7, 1.0, 0.3, 1.0},
      {"concreteness", 0.4, 0.9, 0.1, 0.7},
      {"flipped_consistency", 0.5, 1.0, 0.3, 1.0},
      {"grounding_box_count_norm", 0.3, 0.9, 0.0, 0.5},
      {"grounding_confidence", 0.5, 1.0, 0.0, 0.6},
  };
  std::map<std::string, std::optional<double>> fields;
  for (const auto& r : kRanges) {
    const double value = clean ? rng.uniform(r.clean_lo, r.clean_hi) : rng.uniform(r.corrupt_lo, r.corrupt_hi);
    if (rng.uniform() < missing_rate) {
      fields[r.name] = std::nullopt;
    } else {
      fields[r.name] = std::round(value * 1e6) / 1e6;
    }
  }
  return fields;
}

// Largest-remainder apportionment of `total` by `weights`.
std::vector<std::size_t> apportion(std::size_t total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.push_back({exact - std::floor(exact), i});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[remainders[r % remainders.size()].second];
  return counts;
}

template <typename T>
void shuffle(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

struct Item {
  SampleRecord record;
  std::vector<double> image;
  std::vector<double> text;
  GroundTruthEntry truth;
};

std::string_view duplicate_kind_name(DuplicateKind k) {
  switch (k) {
    case DuplicateKind::kOriginal: return "original";
    case DuplicateKind::kExact: return "exact";
    case DuplicateKind::kNearText: return "near_text";
    case DuplicateKind::kParaphrase: return "paraphrase";
    default: return "none";
  }
}

DuplicateKind duplicate_kind_from_name(std::string_view s) {
  for (auto k : {DuplicateKind::kNone, DuplicateKind::kOriginal, DuplicateKind::kExact,
                 DuplicateKind::kNearText, DuplicateKind::kParaphrase}) {
    if (duplicate_kind_name(k) == s) return k;
  }
  throw ParseError("unknown duplicate kind '" + std::string(s) + "'");
}

}  // namespace

void SynthSpec::validate() const {
  if (n == 0 || d == 0) throw InvalidConfig("synth.n and synth.d must be positive");
  if (clusters == 0 || clusters > d) throw InvalidConfig("synth.clusters must be in [1, d]");
  if (clusters * (1 + subspace_dim) > d) {
    throw InvalidConfig("synth.subspace_dim: clusters * (1 + subspace_dim) exceeds d");
  }
  if (!cluster_weights.empty()) {
    if (cluster_weights.size() != clusters) throw InvalidConfig("synth.cluster_weights needs one weight per cluster");
    for (double w : cluster_weights) {
      if (!(w > 0.0) || !std::isfinite(w)) throw InvalidConfig("synth.cluster_weights must be positive");
    }
  }
  auto fraction = [](double f, const char* name) {
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidConfig(std::string("synth.") + name + " must be in [0, 1]");
  };
  fraction(corrupt_fraction, "corrupt_fraction");
  for (std::size_t c : noise_clusters) {
    if (c >= clusters) throw InvalidConfig("synth.noise_clusters entry " + std::to_string(c) + " out of range");
  }
  fraction(missing_field_rate, "missing_field_rate");
  fraction(ocr_rate, "ocr_rate");
  if (!(spread >= 0.0) || !(pair_noise >= 0.0)) throw InvalidConfig("synth noise levels must be >= 0");
  if (2 * duplicate_count() > n) {
    throw InvalidConfig("synth: " + std::to_string(duplicate_count()) + " duplicates need at least " +
                        std::to_string(2 * duplicate_count()) + " records");
  }
  if (n - duplicate_count() < clusters) throw InvalidConfig("synth: fewer base samples than clusters");
  std::set<std::string> ids;
  bool any_weight = false;
  bool all_weight = true;
  for (const auto& t : tasks) {
    if (t.id.empty() || !ids.insert(t.id).second) throw InvalidConfig("synth task ids must be unique and non-empty");
    if (t.clusters.empty()) throw InvalidConfig("synth task '" + t.id + "' has no clusters");
    for (std::size_t c : t.clusters) {
      if (c >= clusters) throw InvalidConfig("synth task '" + t.id + "' names cluster " + std::to_string(c));
    }
    if (t.kind == TaskKind::kRetrieval && t.clusters.size() * validation_per_cluster < 1) {
      throw InvalidConfig("synth task '" + t.id + "' has no validation pairs");
    }
    any_weight = any_weight || t.weight != 0.0;
    all_weight = all_weight && t.weight != 0.0;
  }
  if (any_weight && !all_weight) throw InvalidConfig("synth: either every task or no task sets a weight");
  if (classes_per_cluster == 0 || (classes_per_cluster > 1 && classes_per_cluster > 2 * subspace_dim)) {
    throw InvalidConfig("synth.classes_per_cluster must be 1 or at most 2 * subspace_dim");
  }
  if (!tasks.empty() && validation_per_cluster == 0) throw InvalidConfig("synth.validation_per_cluster must be positive");
}

json synth_spec_to_json(const SynthSpec& s) {
  json tasks = json::array();
  for (const auto& t : s.tasks) {
    tasks.push_back({{"id", t.id}, {"kind", std::string(task_kind_name(t.kind))},
                     {"clusters", t.clusters}, {"weight", t.weight}});
  }
  return {{"n", s.n},
          {"d", s.d},
          {"clusters", s.clusters},
          {"cluster_weights", s.cluster_weights},
          {"spread", s.spread},
          {"subspace_dim", s.subspace_dim},
          {"pair_noise", s.pair_noise},
          {"exact_duplicates", s.exact_duplicates},
          {"near_duplicates", s.near_duplicates},
          {"paraphrase_duplicates", s.paraphrase_duplicates},
          {"corrupt_fraction", s.corrupt_fraction},
          {"noise_clusters", s.noise_clusters},
          {"missing_field_rate", s.missing_field_rate},
          {"ocr_rate", s.ocr_rate},
          {"tasks", tasks},
          {"validation_per_cluster", s.validation_per_cluster},
          {"classes_per_cluster", s.classes_per_cluster},
          {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const json& j) {
  if (!j.is_object()) throw InvalidConfig("synth: expected an object");
  SynthSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n") s.n = value.get<std::size_t>();
      else if (key == "d") s.d = value.get<std::size_t>();
      else if (key == "clusters") s.clusters = value.get<std::size_t>();
      else if (key == "cluster_weights") s.cluster_weights = value.get<std::vector<double>>();
      else if (key == "spread") s.spread = value.get<double>();
      else if (key == "subspace_dim") s.subspace_dim = value.get<std::size_t>();
      else if (key == "pair_noise") s.pair_noise = value.get<double>();
      else if (key == "exact_duplicates") s.exact_duplicates = value.get<std::size_t>();
      else if (key == "near_duplicates") s.near_duplicates = value.get<std::size_t>();
      else if (key == "paraphrase_duplicates") s.paraphrase_duplicates = value.get<std::size_t>();
      else if (key == "corrupt_fraction") s.corrupt_fraction = value.get<double>();
      else if (key == "noise_clusters") s.noise_clusters = value.get<std::vector<std::size_t>>();
      else if (key == "missing_field_rate") s.missing_field_rate = value.get<double>();
      else if (key == "ocr_rate") s.ocr_rate = value.get<double>();
      else if (key == "validation_per_cluster") s.validation_per_cluster = value.get<std::size_t>();
      else if (key == "classes_per_cluster") s.classes_per_cluster = value.get<std::size_t>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else if (key == "tasks") {
        for (std::size_t t = 0; t < value.size(); ++t) {
          const json& tj = value[t];
          SynthTask task;
          for (const auto& [tk, tv] : tj.items()) {
            if (tk == "id") task.id = tv.get<std::string>();
            else if (tk == "kind") {
              const auto kind = task_kind_from_name(tv.get<std::string>());
              if (!kind) throw InvalidConfig("synth.tasks[" + std::to_string(t) + "].kind: unknown kind");
              task.kind = *kind;
            } else if (tk == "clusters") task.clusters = tv.get<std::vector<std::size_t>>();
            else if (tk == "weight") task.weight = tv.get<double>();
            else throw InvalidConfig("synth.tasks[" + std::to_string(t) + "]." + tk + ": unknown key");
          }
          s.tasks.push_back(std::move(task));
        }
      } else {
        throw InvalidConfig("synth." + key + ": unknown key");
      }
    }
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("synth: ") + e.what());
  }
  return s;
}

json ground_truth_to_json(const GroundTruth& truth) {
  json samples = json::array();
  for (const auto& e : truth.samples) {
    samples.push_back({{"id", e.id},
                       {"clean", e.clean},
                       {"cluster", e.cluster},
                       {"duplicate_group", e.duplicate_group ? json(*e.duplicate_group) : json(nullptr)},
                       {"duplicate_kind", std::string(duplicate_kind_name(e.duplicate_kind))},
                       {"task_utility", e.task_utility}});
  }
  return {{"duplicate_groups", truth.duplicate_groups}, {"samples", samples}};
}

GroundTruth ground_truth_from_json(const json& j) {
  GroundTruth truth;
  try {
    truth.duplicate_groups = j.at("duplicate_groups").get<std::size_t>();
    for (const auto& s : j.at("samples")) {
      GroundTruthEntry e;
      e.id = s.at("id").get<std::string>();
      e.clean = s.at("clean").get<bool>();
      e.cluster = s.at("cluster").get<std::size_t>();
      if (!s.at("duplicate_group").is_null()) e.duplicate_group = s.at("duplicate_group").get<std::size_t>();
      e.duplicate_kind = duplicate_kind_from_name(s.at("duplicate_kind").get<std::string>());
      e.task_utility = s.at("task_utility").get<std::vector<std::uint8_t>>();
      truth.samples.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("ground truth: ") + e.what());
  }
  return truth;
}

SynthCorpus generate_corpus(const SynthSpec& spec) {
  spec.validate();
  const RngStream root(spec.seed, "synth");
  RngStream center_rng = root.derive("centers");
  RngStream vocab_rng = root.derive("vocabulary");
  RngStream layout_rng = root.derive("layout");
  RngStream sample_rng = root.derive("samples");
  RngStream dup_rng = root.derive("duplicates");
  RngStream val_rng = root.derive("validation");

  SynthCorpus out;
  auto basis = orthonormal_centers(spec.clusters * (1 + spec.subspace_dim), spec.d, center_rng);
  out.cluster_centers.assign(basis.begin(), basis.begin() + static_cast<std::ptrdiff_t>(spec.clusters));
  const auto& centers = out.cluster_centers;
  const auto vocab = make_vocabulary(vocab_rng);
  const std::size_t k_tasks = spec.tasks.size();

  const std::size_t bases = spec.n - spec.duplicate_count();
  const std::vector<double> weights =
      spec.cluster_weights.empty() ? std::vector<double>(spec.clusters, 1.0) : spec.cluster_weights;
  std::vector<std::size_t> base_cluster;
  const auto counts = apportion(bases, weights);
  for (std::size_t c = 0; c < counts.size(); ++c) base_cluster.insert(base_cluster.end(), counts[c], c);
  shuffle(base_cluster, layout_rng);

  std::vector<char> corrupt(bases, 0);
  {
    std::vector<std::size_t> order(bases);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, layout_rng);
    const auto n_corrupt = static_cast<std::size_t>(std::llround(spec.corrupt_fraction * static_cast<double>(bases)));
    for (std::size_t i = 0; i < n_corrupt; ++i) corrupt[order[i]] = 1;
    for (std::size_t b = 0; b < bases; ++b) {
      const auto& nc = spec.noise_clusters;
      if (std::find(nc.begin(), nc.end(), base_cluster[b]) != nc.end()) corrupt[b] = 1;
    }
  }

  auto latent = [&](std::size_t cluster, RngStream& rng) {
    if (spec.subspace_dim == 0) return add_noise(centers[cluster], spec.spread, rng);
    std::vector<double> u = centers[cluster];
    const double scale = spec.spread / std::sqrt(static_cast<double>(spec.subspace_dim));
    for (std::size_t k = 0; k < spec.subspace_dim; ++k) {
      const auto& axis = basis[spec.clusters + cluster * spec.subspace_dim + k];
      const double w = scale * rng.normal();
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += w * axis[i];
    }
    normalize_in_place(u);
    return u;
  };

  std::vector<Item> items;
  items.reserve(spec.n);
  for (std::size_t b = 0; b < bases; ++b) {
    Item it;
    const std::size_t c = base_cluster[b];
    const bool clean = !corrupt[b];
    const auto u = latent(c, sample_rng);
    it.image = add_noise(u, spec.pair_noise, sample_rng);
    const bool noise_cluster =
        std::find(spec.noise_clusters.begin(), spec.noise_clusters.end(), c) != spec.noise_clusters.end();
    if (clean) {
      it.text = add_noise(u, spec.pair_noise, sample_rng);
    } else if (noise_cluster) {
      it.text = add_noise(std::vector<double>(spec.d, 0.0), 1.0, sample_rng);
    } else {
      const std::size_t other = spec.clusters > 1 ? (c + 1 + sample_rng.below(spec.clusters - 1)) % spec.clusters : c;
      it.text = add_noise(latent(other, sample_rng), spec.pair_noise, sample_rng);
    }
    SampleRecord& r = it.record;
    r.content_hash = random_hex(sample_rng, 64);
    r.width_px = static_cast<std::uint32_t>(128 + sample_rng.below(1921));
    r.height_px = static_cast<std::uint32_t>(128 + sample_rng.below(1921));
    r.caption = make_phrase(vocab, 5, 14, sample_rng);
    if (sample_rng.uniform() < spec.ocr_rate) r.ocr_text = make_phrase(vocab, 1, 4, sample_rng);
    r.operator_fields = make_fields(clean, spec.missing_field_rate, sample_rng);
    it.truth.clean = clean;
    it.truth.cluster = c;
    it.truth.task_utility.assign(k_tasks, 0);
    for (std::size_t t = 0; t < k_tasks; ++t) {
      const auto& tc = spec.tasks[t].clusters;
      it.truth.task_utility[t] = clean && std::find(tc.begin(), tc.end(), c) != tc.end();
    }
    items.push_back(std::move(it));
  }

  // Duplicates: each planted copy gets its own distinct original.
  std::vector<std::size_t> originals(bases);
  std::iota(originals.begin(), originals.end(), 0);
  shuffle(originals, dup_rng);
  std::size_t next_original = 0;
  auto plant = [&](DuplicateKind kind, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t o = originals[next_original++];
      Item dup = items[o];
      const std::size_t group = out.truth.duplicate_groups++;
      items[o].truth.duplicate_group = group;
      items[o].truth.duplicate_kind = DuplicateKind::kOriginal;
      dup.truth.duplicate_group = group;
      dup.truth.duplicate_kind = kind;
      if (kind != DuplicateKind::kExact) {
        dup.record.content_hash = random_hex(dup_rng, 64);
        dup.image = add_noise(items[o].image, 0.02, dup_rng);
        if (kind == DuplicateKind::kNearText) {
          dup.record.caption = edit_caption(items[o].record.caption, dup_rng);
          dup.text = rotate_to_cosine(items[o].text, dup_rng.uniform(0.85, 0.95), dup_rng);
        } else {
          dup.record.caption = make_phrase(vocab, 5, 14, dup_rng);
          dup.text = rotate_to_cosine(items[o].text, dup_rng.uniform(0.96, 0.99), dup_rng);
        }
      }
      items.push_back(std::move(dup));
    }
  };
  plant(DuplicateKind::kExact, spec.exact_duplicates);
  plant(DuplicateKind::kNearText, spec.near_duplicates);
  plant(DuplicateKind::kParaphrase, spec.paraphrase_duplicates);
  shuffle(items, layout_rng);

  const std::size_t n = items.size();
  out.embeddings = EmbeddingBlock{n, spec.d, DenseMatrix(n, spec.d), DenseMatrix(n, spec.d)};
  for (std::size_t i = 0; i < n; ++i) {
    Item& it = items[i];
    char id[32];
    std::snprintf(id, sizeof id, "s%07zu", i);
    it.record.id = id;
    it.record.url = "https://img.example.org/" + random_hex(layout_rng, 16) + ".jpg";
    it.record.embedding_index = i;
    round_to_f32(it.image);
    round_to_f32(it.text);
    std::copy(it.image.begin(), it.image.end(), out.embeddings.image.row(i).begin());
    std::copy(it.text.begin(), it.text.end(), out.embeddings.text.row(i).begin());
    it.truth.id = it.record.id;
    out.records.push_back(std::move(it.record));
    out.truth.samples.push_back(std::move(it.truth));
  }

  const bool weighted = !spec.tasks.empty() && spec.tasks.front().weight != 0.0;
  // Class (cluster, j): offset +/- spread along subspace axis j/2.
  auto class_offset = [&](std::size_t cluster, std::size_t j) {
    std::vector<double> u = centers[cluster];
    if (spec.classes_per_cluster == 1) return u;
    const auto& axis = basis[spec.clusters + cluster * spec.subspace_dim + j / 2];
    const double sign = j % 2 == 0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += sign * spec.spread * axis[i];
    return u;
  };
  for (const auto& task : spec.tasks) {
    const bool classify = task.kind == TaskKind::kZeroShotClassification;
    const std::size_t per_cluster = classify ? spec.classes_per_cluster : 1;
    TaskSupportSet support;
    support.task_id = task.id;
    support.kind = task.kind;
    support.weight = weighted ? task.weight : 1.0 / static_cast<double>(k_tasks);
    support.prototypes = DenseMatrix(task.clusters.size() * per_cluster, spec.d);
    for (std::size_t p = 0; p < task.clusters.size(); ++p) {
      for (std::size_t j = 0; j < per_cluster; ++j) {
        auto row = support.prototypes.row(p * per_cluster + j);
        const auto proto = class_offset(task.clusters[p], j);
        std::copy(proto.begin(), proto.end(), row.begin());
        normalize_in_place(row);
        round_to_f32(row);
      }
    }
    TaskEvaluator eval;
    eval.task_id = task.id;
    eval.kind = task.kind;
    eval.class_prototypes = support.prototypes;
    const std::size_t rows = task.clusters.size() * spec.validation_per_cluster;
    eval.image = DenseMatrix(rows, spec.d);
    eval.text = DenseMatrix(rows, spec.d);
    std::size_t row = 0;
    for (std::size_t p = 0; p < task.clusters.size(); ++p) {
      for (std::size_t v = 0; v < spec.validation_per_cluster; ++v, ++row) {
        const std::size_t j = v % per_cluster;
        std::vector<double> u;
        if (per_cluster == 1) {
          u = latent(task.clusters[p], val_rng);
        } else {
          // Class offset plus the usual within-cluster scatter.
          u = class_offset(task.clusters[p], j);
          const double scale = spec.spread / std::sqrt(static_cast<double>(spec.subspace_dim));
          for (std::size_t k = 0; k < spec.subspace_dim; ++k) {
            const auto& axis = basis[spec.clusters + task.clusters[p] * spec.subspace_dim + k];
            const double w = scale * val_rng.normal();
            for (std::size_t i = 0; i < u.size(); ++i) u[i] += w * axis[i];
          }
          normalize_in_place(u);
        }
        auto img = add_noise(u, spec.pair_noise, val_rng);
        auto txt = add_noise(u, spec.pair_noise, val_rng);
        round_to_f32(img);
        round_to_f32(txt);
        std::copy(img.begin(), img.end(), eval.image.row(row).begin());
        std::copy(txt.begin(), txt.end(), eval.text.row(row).begin());
        char id[64];
        std::snprintf(id, sizeof id, "val-%s-%05zu", task.id.c_str(), row);
        eval.ids.push_back(id);
        if (classify) eval.labels.push_back(p * per_cluster + j);
      }
    }
    out.tasks.supports.push_back(std::move(support));
    out.tasks.evaluators.push_back(std::move(eval));
  }
  if (weighted) validate_task_weights(out.tasks.weights());
  return out;
}

Corpus to_corpus(const SynthCorpus& synth) {
  Corpus c;
  c.records = synth.records;
  c.embeddings = synth.embeddings;
  c.manifest.record_count = synth.records.size();
  c.manifest.embedding_dim = synth.embeddings.d;
  return c;
}

SynthPaths write_synth(const SynthCorpus& synth, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SynthPaths paths{dir / "records.jsonl", dir / "embeddings.tdsemb", dir / "tasks.json",
                   dir / "ground_truth.json"};
  write_records(paths.records, synth.records);
  write_embeddings(paths.embeddings, synth.embeddings);
  if (!synth.tasks.supports.empty()) write_task_suite(paths.tasks, synth.tasks);
  write_file_atomic(paths.ground_truth, ground_truth_to_json(synth.truth).dump(1) + "\n");
  return paths;
}

namespace {

struct Enumerator {
  std::span<const double> v;
  const MaskReward& reward;

  // Sums J(m) P(m) and J(m) P(m) * score_i(m) over masks [lo, hi).
  std::vector<double> sum(std::uint64_t lo, std::uint64_t hi) const {
    const std::size_t n = v.size();
    if (hi - lo <= 64) {
      std::vector<double> acc(n + 1, 0.0);
      std::vector<std::uint8_t> mask(n);
      for (std::uint64_t m = lo; m < hi; ++m) {
        double p = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
          mask[i] = static_cast<std::uint8_t>((m >> i) & 1U);
          p *= mask[i] ? v[i] : 1.0 - v[i];
        }
        const double w = p * reward(mask);
        acc[0] += w;
        for (std::size_t i = 0; i < n; ++i) acc[i + 1] += mask[i] ? w / v[i] : -w / (1.0 - v[i]);
      }
      return acc;
    }
    const std::uint64_t mid = lo + (hi - lo) / 2;
    auto a = sum(lo, mid);
    const auto b = sum(mid, hi);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
  }
};

}  // namespace

ExactReward exact_expected_reward(std::span<const double> scores, const MaskReward& reward) {
  if (scores.size() > kMaxEnumerationSamples) {
    throw InvalidConfig("exact enumeration supports at most 20 samples, got " + std::to_string(scores.size()));
  }
  for (double v : scores) {
    if (!(v > 0.0 && v < 1.0)) throw InvalidConfig("exact enumeration needs every score in (0, 1)");
  }
  const Enumerator e{scores, reward};
  const auto acc = e.sum(0, std::uint64_t{1} << scores.size());
  return {acc[0], std::vector<double>(acc.begin() + 1, acc.end())};
}

ExactReward exact_expected_reward(std::span<const double> scores, std::span<const double> table) {
  if (scores.size() <= kMaxEnumerationSamples && table.size() != (std::size_t{1} << scores.size())) {
    throw ShapeError("reward table must hold 2^n entries");
  }
  return exact_expected_reward(scores, [&](std::span<const std::uint8_t> mask) {
    std::size_t index = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) index |= static_cast<std::size_t>(mask[i]) << i;
    return table[index];
  });
}

}  // namespace tads

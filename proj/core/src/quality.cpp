#include "tads/quality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tads/error.hpp"
#include "tads/text.hpp"

namespace tads {
namespace {

constexpr const char* kFeatureNames[kFeatureCount] = {
    "resolution_norm", "aspect_ratio_norm",       "blur_score",           "ocr_region_ratio",
    "lang_confidence", "concreteness",            "caption_len_norm",     "token_count_norm",
    "clip_cosine",     "flipped_consistency",     "grounding_box_count_norm",
    "grounding_confidence", "ocr_caption_info_gain",
};

double clamp_probability(double p) {
  return std::clamp(p, kLabelModelClampLo, kLabelModelClampHi);
}

void set_ingested(OperatorFeatureVector& fv, Feature f, const SampleRecord& source,
                  bool available) {
  if (available) {
    auto it = source.operator_fields.find(std::string(feature_name(f)));
    if (it != source.operator_fields.end() && it->second) {
      fv[f] = std::clamp(*it->second, 0.0, 1.0);
      return;
    }
  }
  fv[f] = kImputedValue;
  fv.imputed.set(static_cast<std::size_t>(f));
}

double info_gain(const SampleRecord& image_side, std::span<const double> caption_embedding,
                 const std::string& caption) {
  if (image_side.ocr_embedding) {
    return (1.0 - cosine_similarity(caption_embedding, *image_side.ocr_embedding)) / 2.0;
  }
  if (!image_side.ocr_text || image_side.ocr_text->empty()) return 1.0;
  // No OCR embedding: fall back to normalized character edit distance.
  const std::u32string a = utf8_codepoints(caption);
  const std::u32string b = utf8_codepoints(*image_side.ocr_text);
  const double longest = static_cast<double>(std::max(a.size(), b.size()));
  return longest == 0.0 ? 0.0 : static_cast<double>(levenshtein(a, b)) / longest;
}

double bce(double q, int y) {
  const double p = std::clamp(q, 1e-12, 1.0 - 1e-12);
  return y == 1 ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace

std::string_view feature_name(Feature f) noexcept {
  return kFeatureNames[static_cast<std::size_t>(f)];
}

std::optional<Feature> feature_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (name == kFeatureNames[i]) return static_cast<Feature>(i);
  }
  return std::nullopt;
}

bool is_ingested_feature(Feature f) noexcept {
  switch (f) {
    case Feature::kBlur:
    case Feature::kOcrRegionRatio:
    case Feature::kLangConfidence:
    case Feature::kConcreteness:
    case Feature::kFlippedConsistency:
    case Feature::kGroundingBoxCount:
    case Feature::kGroundingConfidence:
      return true;
    default:
      return false;
  }
}

OperatorFeatureVector extract_features(const Corpus& corpus, std::size_t record) {
  return extract_pair_features(corpus, record, record);
}

OperatorFeatureVector extract_pair_features(const Corpus& corpus, std::size_t image_record,
                                            std::size_t text_record) {
  const SampleRecord& img = corpus.records.at(image_record);
  const SampleRecord& txt = corpus.records.at(text_record);
  const bool own_pair = image_record == text_record;
  OperatorFeatureVector fv;

  if (img.width_px && img.height_px) {
    const double w = *img.width_px;
    const double h = *img.height_px;
    fv[Feature::kResolution] = std::min(1.0, w * h / kResolutionScalePixels);
    fv[Feature::kAspectRatio] = std::min(w, h) / std::max(w, h);
  }
  set_ingested(fv, Feature::kBlur, img, true);
  set_ingested(fv, Feature::kOcrRegionRatio, img, true);
  set_ingested(fv, Feature::kLangConfidence, txt, true);
  set_ingested(fv, Feature::kConcreteness, txt, true);

  fv[Feature::kCaptionLength] =
      std::min(1.0, static_cast<double>(char_length(txt.caption)) / kCaptionScaleChars);
  fv[Feature::kTokenCount] =
      std::min(1.0, static_cast<double>(token_count(txt.caption)) / kTokenScale);

  const auto image_embedding = corpus.image_embedding(image_record);
  const auto text_embedding = corpus.text_embedding(text_record);
  fv[Feature::kClipCosine] = (1.0 + cosine_similarity(image_embedding, text_embedding)) / 2.0;

  set_ingested(fv, Feature::kFlippedConsistency, img, own_pair);
  set_ingested(fv, Feature::kGroundingBoxCount, img, own_pair);
  set_ingested(fv, Feature::kGroundingConfidence, img, own_pair);

  fv[Feature::kOcrCaptionInfoGain] =
      std::clamp(info_gain(img, text_embedding, txt.caption), 0.0, 1.0);
  return fv;
}

std::vector<LabelingFunction> default_labeling_functions() {
  return {
      {"clip_aligned", "clip_cosine", Comparator::kGreater, 0.60, +1},
      {"clip_misaligned", "clip_cosine", Comparator::kLess, 0.55, -1},
      {"caption_too_short", "caption_len_norm", Comparator::kLess, 0.03, -1},
      {"language_uncertain", "lang_confidence", Comparator::kLess, 0.50, -1},
      {"text_dominated_image", "ocr_region_ratio", Comparator::kGreater, 0.40, -1},
      {"concrete_description", "concreteness", Comparator::kGreater, 0.60, +1},
  };
}

std::vector<std::int8_t> apply_lfs(const OperatorFeatureVector& fv,
                                   std::span<const LabelingFunction> lfs) {
  std::vector<std::int8_t> votes;
  votes.reserve(lfs.size());
  for (const auto& lf : lfs) {
    const auto feature = feature_from_name(lf.feature);
    if (!feature) throw InvalidConfig("labeling function '" + lf.name + "': unknown feature '" + lf.feature + "'");
    if (lf.vote_if_true != 1 && lf.vote_if_true != -1) {
      throw InvalidConfig("labeling function '" + lf.name + "': vote must be +1 or -1");
    }
    if (fv.is_imputed(*feature)) {
      votes.push_back(0);
      continue;
    }
    const double v = fv[*feature];
    const bool fires = lf.comparator == Comparator::kGreater ? v > lf.threshold : v < lf.threshold;
    votes.push_back(fires ? static_cast<std::int8_t>(lf.vote_if_true) : 0);
  }
  return votes;
}

VoteMatrix vote_matrix(std::span<const OperatorFeatureVector> features,
                       std::span<const LabelingFunction> lfs) {
  VoteMatrix m{features.size(), lfs.size(), {}};
  m.votes.reserve(m.rows * m.cols);
  for (const auto& fv : features) {
    const auto row = apply_lfs(fv, lfs);
    m.votes.insert(m.votes.end(), row.begin(), row.end());
  }
  return m;
}

namespace {

struct ClassLogs {
  double pos = 0.0;
  double neg = 0.0;
};

// log P(y, votes) for both classes.
ClassLogs joint_logs(const LabelModel& model, std::span<const std::int8_t> votes) {
  if (votes.size() != model.accuracies.size()) throw ShapeError("vote row length");
  const bool coverage = !model.coverage_pos.empty();
  ClassLogs l{std::log(model.prior), std::log(1.0 - model.prior)};
  for (std::size_t j = 0; j < votes.size(); ++j) {
    if (votes[j] == 0) {
      if (coverage) {
        l.pos += std::log(1.0 - model.coverage_pos[j]);
        l.neg += std::log(1.0 - model.coverage_neg[j]);
      }
      continue;
    }
    const double a = model.accuracies[j];
    l.pos += std::log(votes[j] > 0 ? a : 1.0 - a);
    l.neg += std::log(votes[j] < 0 ? a : 1.0 - a);
    if (coverage) {
      l.pos += std::log(model.coverage_pos[j]);
      l.neg += std::log(model.coverage_neg[j]);
    }
  }
  return l;
}

double row_log_likelihood(const LabelModel& model, std::span<const std::int8_t> votes) {
  const ClassLogs l = joint_logs(model, votes);
  const double hi = std::max(l.pos, l.neg);
  return hi + std::log(std::exp(l.pos - hi) + std::exp(l.neg - hi));
}

}  // namespace

LabelModel fit_label_model(const VoteMatrix& votes, std::size_t em_iterations) {
  if (votes.votes.size() != votes.rows * votes.cols) throw ShapeError("vote matrix size");
  if (std::all_of(votes.votes.begin(), votes.votes.end(), [](std::int8_t v) { return v == 0; })) {
    throw DegenerateInput("label model: every labeling function abstains on every row");
  }
  // Majority-vote initial posteriors.
  std::vector<double> posterior(votes.rows, 0.5);
  for (std::size_t i = 0; i < votes.rows; ++i) {
    int sum = 0;
    for (std::int8_t v : votes.row(i)) sum += v;
    posterior[i] = sum > 0 ? 1.0 : (sum < 0 ? 0.0 : 0.5);
  }

  LabelModel model;
  model.accuracies.assign(votes.cols, 0.5);
  model.coverage_pos.assign(votes.cols, 0.5);
  model.coverage_neg.assign(votes.cols, 0.5);
  const std::size_t iterations = std::max<std::size_t>(em_iterations, 1);
  for (std::size_t it = 0; it < iterations; ++it) {
    // M-step.
    double pos_mass = 0.0;
    for (double p : posterior) pos_mass += p;
    const double neg_mass = static_cast<double>(votes.rows) - pos_mass;
    model.prior = clamp_probability(votes.rows ? pos_mass / static_cast<double>(votes.rows) : 0.5);
    for (std::size_t j = 0; j < votes.cols; ++j) {
      double agree = 0.0;
      double count = 0.0;
      double fired_pos = 0.0;
      double fired_neg = 0.0;
      for (std::size_t i = 0; i < votes.rows; ++i) {
        const std::int8_t v = votes.votes[i * votes.cols + j];
        if (v == 0) continue;
        agree += v > 0 ? posterior[i] : 1.0 - posterior[i];
        count += 1.0;
        fired_pos += posterior[i];
        fired_neg += 1.0 - posterior[i];
      }
      model.accuracies[j] = clamp_probability(count > 0.0 ? agree / count : 0.5);
      model.coverage_pos[j] = clamp_probability(pos_mass > 0.0 ? fired_pos / pos_mass : 0.5);
      model.coverage_neg[j] = clamp_probability(neg_mass > 0.0 ? fired_neg / neg_mass : 0.5);
    }
    double ll = 0.0;
    for (std::size_t i = 0; i < votes.rows; ++i) ll += row_log_likelihood(model, votes.row(i));
    model.log_likelihood.push_back(ll);
    ++model.em_iterations;
    // E-step. Unlike weak_label(), all-abstain rows use the full model here.
    for (std::size_t i = 0; i < votes.rows; ++i) {
      const ClassLogs l = joint_logs(model, votes.row(i));
      posterior[i] = 1.0 / (1.0 + std::exp(l.neg - l.pos));
    }
  }
  return model;
}

double weak_label(const LabelModel& model, std::span<const std::int8_t> votes) {
  if (std::all_of(votes.begin(), votes.end(), [](std::int8_t v) { return v == 0; })) {
    if (votes.size() != model.accuracies.size()) throw ShapeError("vote row length");
    return model.prior;
  }
  const ClassLogs l = joint_logs(model, votes);
  return 1.0 / (1.0 + std::exp(l.neg - l.pos));
}

std::vector<double> weak_labels(const LabelModel& model, const VoteMatrix& votes) {
  std::vector<double> out(votes.rows);
  for (std::size_t i = 0; i < votes.rows; ++i) out[i] = weak_label(model, votes.row(i));
  return out;
}

TrueLabelSet build_true_label_set(const Corpus& corpus, std::span<const std::size_t> pool,
                                  RngStream& rng, std::size_t size) {
  if (pool.size() < 2) throw InvalidConfig("true label set needs at least 2 pool samples");
  if (size < 2) throw InvalidConfig("true label set size must be at least 2");
  const std::size_t n_pos = (size + 1) / 2;
  const std::size_t n_neg = size - n_pos;
  const std::size_t n_shuffled = (n_neg + 1) / 2;
  const std::size_t n_mismatch = n_neg - n_shuffled;
  if (n_pos > pool.size()) {
    throw InvalidConfig("true label set size " + std::to_string(size) + " needs " +
                        std::to_string(n_pos) + " positives but the pool has " +
                        std::to_string(pool.size()) + " samples");
  }

  std::vector<std::size_t> ranked(pool.begin(), pool.end());
  std::vector<double> align(corpus.records.size(), 0.0);
  for (std::size_t r : ranked) {
    align[r] = alignment_score(corpus.embeddings, corpus.records[r].embedding_index);
  }
  std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    if (align[a] != align[b]) return align[a] > align[b];
    return corpus.records[a].id < corpus.records[b].id;
  });
  const std::vector<std::size_t> positives(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n_pos));

  TrueLabelSet set;
  for (std::size_t p : positives) {
    set.entries.push_back({extract_features(corpus, p), 1, LabelProvenance::kCuratedPositive, p});
  }
  for (std::size_t k = 0; k < n_shuffled; ++k) {
    const std::size_t src = positives[k % n_pos];
    std::size_t other = pool[rng.below(pool.size())];
    while (other == src) other = pool[rng.below(pool.size())];
    set.entries.push_back(
        {extract_pair_features(corpus, src, other), 0, LabelProvenance::kShuffledNegative, src});
  }
  for (std::size_t k = 0; k < n_mismatch; ++k) {
    const std::size_t src = positives[(n_shuffled + k) % n_pos];
    const auto image = corpus.image_embedding(src);
    std::size_t worst = src;
    double worst_cos = 2.0;
    for (std::size_t r : pool) {
      if (r == src) continue;
      const double c = dot(image, corpus.text_embedding(r));
      if (c < worst_cos) {
        worst_cos = c;
        worst = r;
      }
    }
    set.entries.push_back(
        {extract_pair_features(corpus, src, worst), 0, LabelProvenance::kMismatchNegative, src});
  }
  return set;
}

void QualityTrainConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw InvalidConfig("quality lambdas must be >= 0");
  if (lambda1 == 0.0 && lambda2 == 0.0) throw InvalidConfig("quality lambda1 and lambda2 are both 0");
  if (batch_size == 0) throw InvalidConfig("quality.batch_size must be positive");
  if (!(learning_rate >= 0.0)) throw InvalidConfig("quality.learning_rate must be >= 0");
}

double hybrid_loss(std::span<const double> q_true, std::span<const int> labels,
                   std::span<const double> q_pool, std::span<const double> weak,
                   double lambda1, double lambda2) {
  if (q_true.size() != labels.size() || q_pool.size() != weak.size()) {
    throw ShapeError("hybrid_loss: prediction and target lengths differ");
  }
  double sup = 0.0;
  for (std::size_t i = 0; i < q_true.size(); ++i) sup += bce(q_true[i], labels[i]);
  if (!q_true.empty()) sup /= static_cast<double>(q_true.size());
  double weak_term = 0.0;
  for (std::size_t i = 0; i < q_pool.size(); ++i) {
    const double diff = q_pool[i] - weak[i];
    weak_term += diff * diff;
  }
  if (!q_pool.empty()) weak_term /= static_cast<double>(q_pool.size());
  return lambda1 * sup + lambda2 * weak_term;
}

namespace {

double full_loss(const Mlp& net, std::span<const OperatorFeatureVector> pool,
                 std::span<const double> weak, const TrueLabelSet& true_set,
                 const QualityTrainConfig& config) {
  std::vector<double> q_true;
  std::vector<int> labels;
  for (const auto& e : true_set.entries) {
    q_true.push_back(net.forward(e.features.values)[0]);
    labels.push_back(e.label);
  }
  std::vector<double> q_pool;
  if (config.lambda2 > 0.0) {
    for (const auto& fv : pool) q_pool.push_back(net.forward(fv.values)[0]);
  }
  return hybrid_loss(q_true, labels, q_pool,
                     config.lambda2 > 0.0 ? weak : std::span<const double>{}, config.lambda1,
                     config.lambda2);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

}  // namespace

QualityTrainResult train_quality_predictor(std::span<const OperatorFeatureVector> pool,
                                           std::span<const double> weak,
                                           const TrueLabelSet& true_set,
                                           const QualityTrainConfig& config, RngStream& rng) {
  config.validate();
  if (pool.size() != weak.size()) throw ShapeError("one weak label per pool sample required");
  if (config.lambda1 > 0.0 && true_set.entries.empty()) {
    throw InvalidConfig("true label set is empty but lambda1 > 0");
  }
  const bool use_pool = config.lambda2 > 0.0 && !pool.empty();
  const bool use_true = config.lambda1 > 0.0;

  std::vector<std::size_t> dims = {kFeatureCount};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(1);
  std::vector<Activation> acts(dims.size() - 1, Activation::kRelu);
  acts.back() = Activation::kSigmoid;

  QualityTrainResult result;
  result.predictor.config = config;
  RngStream init_rng = rng.derive("init");
  Mlp& net = result.predictor.net = Mlp::random(dims, acts, init_rng);
  result.loss_curve.push_back(full_loss(net, pool, weak, true_set, config));

  const std::size_t batch = config.batch_size;
  const std::size_t driver = use_pool ? pool.size() : true_set.entries.size();
  const std::size_t steps = (driver + batch - 1) / batch;
  AdamState adam = AdamState::for_parameters(net.parameter_count(), config.learning_rate);
  std::vector<double> params = net.parameters();
  std::vector<double> grad(params.size());
  MlpTrace trace;
  double upstream[1];

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto pool_order = shuffled_indices(pool.size(), rng);
    const auto true_order = shuffled_indices(true_set.entries.size(), rng);
    for (std::size_t step = 0; step < steps; ++step) {
      std::fill(grad.begin(), grad.end(), 0.0);
      if (use_true) {
        const std::size_t count = std::min(batch, true_order.size());
        for (std::size_t b = 0; b < count; ++b) {
          const auto& entry = true_set.entries[true_order[(step * batch + b) % true_order.size()]];
          const double q = net.forward(entry.features.values, trace)[0];
          // d BCE / dq; the sigmoid derivative is applied by backward().
          const double denom = std::max(q * (1.0 - q), 1e-12);
          upstream[0] = config.lambda1 * (q - entry.label) / denom / static_cast<double>(count);
          net.backward(trace, upstream, grad);
        }
      }
      if (use_pool) {
        const std::size_t begin = step * batch;
        const std::size_t end = std::min(pool.size(), begin + batch);
        for (std::size_t b = begin; b < end; ++b) {
          const std::size_t i = pool_order[b];
          const double q = net.forward(pool[i].values, trace)[0];
          upstream[0] = config.lambda2 * 2.0 * (q - weak[i]) / static_cast<double>(end - begin);
          net.backward(trace, upstream, grad);
        }
      }
      adam_step(params, grad, adam);
      net.set_parameters(params);
    }
    result.loss_curve.push_back(full_loss(net, pool, weak, true_set, config));
  }
  return result;
}

double predict_quality(const QualityPredictor& predictor, const OperatorFeatureVector& fv) {
  return predictor.net.forward(fv.values)[0];
}

}  // namespace tads

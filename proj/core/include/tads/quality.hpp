#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tads/corpus.hpp"
#include "tads/mlp.hpp"
#include "tads/rng.hpp"

namespace tads {

enum class Feature : std::size_t {
  kResolution = 0,
  kAspectRatio,
  kBlur,                // ingested
  kOcrRegionRatio,      // ingested
  kLangConfidence,      // ingested
  kConcreteness,        // ingested
  kCaptionLength,
  kTokenCount,
  kClipCosine,
  kFlippedConsistency,  // ingested
  kGroundingBoxCount,   // ingested
  kGroundingConfidence, // ingested
  kOcrCaptionInfoGain,
};

inline constexpr std::size_t kFeatureCount = 13;

std::string_view feature_name(Feature f) noexcept;
std::optional<Feature> feature_from_name(std::string_view name) noexcept;
// True for the fields that come from precomputed perception operators.
bool is_ingested_feature(Feature f) noexcept;

// Fixed-order quality features, each in [0, 1]. Ingested fields that were
// missing hold 0.5 and have their bit set in `imputed`.
struct OperatorFeatureVector {
  std::array<double, kFeatureCount> values{};
  std::bitset<kFeatureCount> imputed;

  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  bool is_imputed(Feature f) const { return imputed.test(static_cast<std::size_t>(f)); }
};

inline constexpr double kImputedValue = 0.5;
inline constexpr double kResolutionScalePixels = 1e6;
inline constexpr double kCaptionScaleChars = 256.0;
inline constexpr double kTokenScale = 64.0;

// Features for a record's own image-text pair.
OperatorFeatureVector extract_features(const Corpus& corpus, std::size_t record);

// Features for the image of `image_record` paired with the caption and text
// embedding of `text_record`. Cross-modal ingested fields are only valid for
// a record's own pair and are imputed otherwise.
OperatorFeatureVector extract_pair_features(const Corpus& corpus, std::size_t image_record,
                                            std::size_t text_record);

enum class Comparator { kLess, kGreater };

struct LabelingFunction {
  std::string name;
  std::string feature;
  Comparator comparator = Comparator::kGreater;
  double threshold = 0.5;
  int vote_if_true = 1;  // +1 or -1
};

std::vector<LabelingFunction> default_labeling_functions();

// Votes in {-1, 0, +1}; 0 when the condition is false or the feature was
// imputed. Throws InvalidConfig on an unknown feature name.
std::vector<std::int8_t> apply_lfs(const OperatorFeatureVector& fv,
                                   std::span<const LabelingFunction> lfs);

struct VoteMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> votes;  // row-major

  std::span<const std::int8_t> row(std::size_t r) const { return {votes.data() + r * cols, cols}; }
};

VoteMatrix vote_matrix(std::span<const OperatorFeatureVector> features,
                       std::span<const LabelingFunction> lfs);

struct LabelModel {
  std::vector<double> accuracies;  // P(vote correct | LF votes), in [0.01, 0.99]
  double prior = 0.5;              // P(y = 1), in [0.01, 0.99]
  // P(LF votes | y = 1) and P(LF votes | y = 0), in [0.01, 0.99]. Empty means
  // abstentions carry no evidence.
  std::vector<double> coverage_pos;
  std::vector<double> coverage_neg;
  std::size_t em_iterations = 0;
  std::vector<double> log_likelihood;  // after each M-step
};

inline constexpr double kLabelModelClampLo = 0.01;
inline constexpr double kLabelModelClampHi = 0.99;

// Two-class conditionally independent label model fitted by EM, starting from
// majority-vote posteriors. Whether an LF fires is modeled per class, so
// one-sided LFs (that only ever vote one way) stay identifiable. Throws
// DegenerateInput when every vote abstains.
LabelModel fit_label_model(const VoteMatrix& votes, std::size_t em_iterations);

// P(y = 1 | votes). A row where every LF abstains gets the prior.
double weak_label(const LabelModel& model, std::span<const std::int8_t> votes);
std::vector<double> weak_labels(const LabelModel& model, const VoteMatrix& votes);

enum class LabelProvenance { kCuratedPositive, kShuffledNegative, kMismatchNegative };

struct TrueLabelEntry {
  OperatorFeatureVector features;
  int label = 0;
  LabelProvenance provenance = LabelProvenance::kCuratedPositive;
  std::size_t source_record = 0;
};

struct TrueLabelSet {
  std::vector<TrueLabelEntry> entries;
};

// ceil(size/2) best-aligned pool records as positives; the rest split between
// caption-shuffled negatives and most-dissimilar-text mismatch negatives.
TrueLabelSet build_true_label_set(const Corpus& corpus, std::span<const std::size_t> pool,
                                  RngStream& rng, std::size_t size);

struct QualityTrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 0.5;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::vector<std::size_t> hidden = {32, 16};

  void validate() const;
};

struct QualityPredictor {
  Mlp net;
  QualityTrainConfig config;
};

struct QualityTrainResult {
  QualityPredictor predictor;
  // Hybrid loss over the full data before training and after every epoch.
  std::vector<double> loss_curve;
};

// lambda1 * mean BCE(q_true, y) + lambda2 * mean (q_pool - weak)^2. An empty
// side contributes 0.
double hybrid_loss(std::span<const double> q_true, std::span<const int> labels,
                   std::span<const double> q_pool, std::span<const double> weak,
                   double lambda1, double lambda2);

QualityTrainResult train_quality_predictor(std::span<const OperatorFeatureVector> pool,
                                           std::span<const double> weak,
                                           const TrueLabelSet& true_set,
                                           const QualityTrainConfig& config, RngStream& rng);

double predict_quality(const QualityPredictor& predictor, const OperatorFeatureVector& fv);

}  // namespace tads

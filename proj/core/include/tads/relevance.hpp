#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tads/corpus.hpp"
#include "tads/matrix.hpp"
#include "tads/tasks.hpp"

namespace tads {

inline constexpr double kRelevanceEpsilon = 1e-8;

// Which sample embedding is compared with the (textual) prototypes.
enum class RelevanceEmbedding { kImage, kText };

// Mean cosine between the sample embedding and each prototype row.
double task_relevance(std::span<const double> sample, const TaskSupportSet& support);

struct RelevanceVector {
  std::vector<double> values;
  double epsilon = kRelevanceEpsilon;
};

// v / (||v|| + epsilon).
RelevanceVector normalize_relevance(std::span<const double> raw, double epsilon);
RelevanceVector relevance_profile(std::span<const double> sample,
                                  std::span<const TaskSupportSet> supports,
                                  double epsilon = kRelevanceEpsilon);

// Normalized relevance for each listed record, one row per record.
DenseMatrix relevance_matrix(const Corpus& corpus, std::span<const std::size_t> records,
                             std::span<const TaskSupportSet> supports, double epsilon,
                             RelevanceEmbedding embedding = RelevanceEmbedding::kImage);

}  // namespace tads

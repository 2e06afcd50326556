#include "tads/relevance.hpp"

#include <cmath>

#include "tads/error.hpp"

namespace tads {

double task_relevance(std::span<const double> sample, const TaskSupportSet& support) {
  const auto& protos = support.prototypes;
  if (protos.rows() == 0) throw InvalidConfig("task '" + support.task_id + "' has no prototypes");
  if (protos.cols() != sample.size()) {
    throw ShapeError("task '" + support.task_id + "': sample dim " + std::to_string(sample.size()) +
                     " vs prototype dim " + std::to_string(protos.cols()));
  }
  double sum = 0.0;
  for (std::size_t p = 0; p < protos.rows(); ++p) sum += cosine_similarity(sample, protos.row(p));
  return sum / static_cast<double>(protos.rows());
}

RelevanceVector normalize_relevance(std::span<const double> raw, double epsilon) {
  if (!(epsilon >= 0.0)) throw InvalidConfig("relevance epsilon must be >= 0");
  RelevanceVector out{std::vector<double>(raw.begin(), raw.end()), epsilon};
  const double norm = l2_norm(raw);
  if (norm == 0.0) return out;
  for (double& v : out.values) v /= norm + epsilon;
  return out;
}

RelevanceVector relevance_profile(std::span<const double> sample,
                                  std::span<const TaskSupportSet> supports, double epsilon) {
  if (supports.empty()) throw InvalidConfig("relevance needs at least one task");
  std::vector<double> raw;
  raw.reserve(supports.size());
  for (const auto& s : supports) raw.push_back(task_relevance(sample, s));
  return normalize_relevance(raw, epsilon);
}

DenseMatrix relevance_matrix(const Corpus& corpus, std::span<const std::size_t> records,
                             std::span<const TaskSupportSet> supports, double epsilon,
                             RelevanceEmbedding embedding) {
  DenseMatrix out(records.size(), supports.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto sample = embedding == RelevanceEmbedding::kImage ? corpus.image_embedding(records[i])
                                                                : corpus.text_embedding(records[i]);
    const auto profile = relevance_profile(sample, supports, epsilon);
    std::copy(profile.values.begin(), profile.values.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace tads

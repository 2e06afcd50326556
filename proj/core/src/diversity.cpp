#include "tads/diversity.hpp"

#include <cmath>
#include <map>

#include "tads/error.hpp"

namespace tads {

void DiversityConfig::validate() const {
  if (n_clusters == 0) throw InvalidConfig("diversity.n_clusters must be positive");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidConfig("diversity.delta must be >= 0");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidConfig("diversity.epsilon must be > 0");
  if (kmeans_batch_size == 0) throw InvalidConfig("diversity.kmeans_batch_size must be positive");
}

ClusterAssignment cluster_pool(const DenseMatrix& joint, const DiversityConfig& config,
                               RngStream& rng) {
  config.validate();
  if (joint.rows() == 0) throw InvalidConfig("cannot cluster an empty pool");
  if (config.n_clusters > joint.rows()) {
    throw InvalidConfig("diversity.n_clusters " + std::to_string(config.n_clusters) +
                        " exceeds pool size " + std::to_string(joint.rows()));
  }
  KMeansOptions options;
  options.k = config.n_clusters;
  options.batch_size = config.kmeans_batch_size;
  options.iterations = config.kmeans_iterations;
  auto result = kmeans_cluster(joint, options, rng);
  ClusterAssignment out = assignment_from_labels(result.assignments, config.n_clusters);
  out.model = std::move(result.model);
  return out;
}

ClusterAssignment assignment_from_labels(std::span<const std::size_t> labels,
                                         std::size_t n_clusters) {
  ClusterAssignment out;
  out.labels.assign(labels.begin(), labels.end());
  out.sizes.assign(n_clusters, 0);
  for (std::size_t l : labels) {
    if (l >= n_clusters) throw IndexError("cluster label " + std::to_string(l) + " >= " + std::to_string(n_clusters));
    ++out.sizes[l];
  }
  out.model.k = n_clusters;
  return out;
}

double diversity_factor(std::size_t cluster_size, double delta, double epsilon) {
  return std::pow(1.0 / (static_cast<double>(cluster_size) + epsilon), delta);
}

double diversity_factor(const ClusterAssignment& assignment, std::size_t i,
                        const DiversityConfig& config) {
  if (i >= assignment.labels.size()) throw IndexError("sample " + std::to_string(i) + " has no cluster");
  return diversity_factor(assignment.sizes[assignment.labels[i]], config.delta, config.epsilon);
}

nlohmann::json assignment_to_json(const ClusterAssignment& assignment,
                                  std::span<const std::string> ids) {
  if (ids.size() != assignment.labels.size()) throw ShapeError("one id per cluster label required");
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    rows.push_back({{"id", ids[i]}, {"cluster", assignment.labels[i]}});
  }
  return {{"n_clusters", assignment.sizes.size()}, {"assignments", rows}};
}

ClusterAssignment assignment_from_json(const nlohmann::json& j, std::span<const std::string> ids) {
  try {
    const auto k = j.at("n_clusters").get<std::size_t>();
    std::map<std::string, std::size_t> table;
    for (const auto& row : j.at("assignments")) {
      table[row.at("id").get<std::string>()] = row.at("cluster").get<std::size_t>();
    }
    std::vector<std::size_t> labels;
    labels.reserve(ids.size());
    for (const auto& id : ids) {
      auto it = table.find(id);
      if (it == table.end()) throw CorpusMismatch("cluster table has no entry for '" + id + "'");
      labels.push_back(it->second);
    }
    return assignment_from_labels(labels, k);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cluster table: ") + e.what());
  }
}

}  // namespace tads

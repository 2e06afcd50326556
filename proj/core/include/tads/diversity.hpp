#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tads/kmeans.hpp"
#include "tads/matrix.hpp"
#include "tads/rng.hpp"

namespace tads {

struct DiversityConfig {
  // Shared with the cluster perturbations of the feedback loop.
  std::size_t n_clusters = 8;
  double delta = 0.5;
  double epsilon = 1.0;
  std::size_t kmeans_batch_size = 256;
  std::size_t kmeans_iterations = 50;

  void validate() const;
};

struct ClusterAssignment {
  KMeansModel model;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> sizes;
};

// Clusters joint embeddings (one row per refined-pool sample).
ClusterAssignment cluster_pool(const DenseMatrix& joint, const DiversityConfig& config,
                               RngStream& rng);

// Builds an assignment from given labels (an override or a persisted table).
ClusterAssignment assignment_from_labels(std::span<const std::size_t> labels,
                                         std::size_t n_clusters);

// (1 / (size + epsilon))^delta
double diversity_factor(std::size_t cluster_size, double delta, double epsilon);
double diversity_factor(const ClusterAssignment& assignment, std::size_t i,
                        const DiversityConfig& config);

// {"n_clusters": k, "assignments": [{"id": ..., "cluster": c}, ...]}
nlohmann::json assignment_to_json(const ClusterAssignment& assignment,
                                  std::span<const std::string> ids);
// Labels in the order of `ids`; every id must be present.
ClusterAssignment assignment_from_json(const nlohmann::json& j, std::span<const std::string> ids);

}  // namespace tads

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tads/matrix.hpp"
#include "tads/rng.hpp"

namespace tads {

struct KMeansOptions {
  std::size_t k = 8;
  std::size_t batch_size = 256;
  std::size_t iterations = 50;
  // Cap on full-data Lloyd/Hartigan refinement sweeps after the mini-batch phase.
  std::size_t max_refine_sweeps = 100;
};

struct KMeansModel {
  std::size_t k = 0;
  DenseMatrix centroids;
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0;
  // Within-cluster SSE after k-means++ seeding and after every accepted
  // update. Non-increasing by construction.
  std::vector<double> sse_history;
};

struct KMeansResult {
  KMeansModel model;
  std::vector<std::size_t> assignments;
};

// Mini-batch k-means with k-means++ seeding.
//
// The mini-batch phase follows Sculley's per-center learning rates; an update
// that would raise the full-data SSE is rolled back. A refinement phase then
// alternates Lloyd steps with Hartigan single-point moves until the partition
// is stable, which also escapes the symmetric fixed points Lloyd alone can
// stall in. Empty clusters are reseeded at the point farthest from its
// centroid. Every point ends assigned to its nearest centroid (lowest index on
// ties).
KMeansResult kmeans_cluster(const DenseMatrix& points, const KMeansOptions& options,
                            RngStream& rng);

std::vector<std::size_t> assign_nearest(const DenseMatrix& points,
                                        const DenseMatrix& centroids);

double within_cluster_sse(const DenseMatrix& points, const DenseMatrix& centroids,
                          std::span<const std::size_t> assignments);

}  // namespace tads

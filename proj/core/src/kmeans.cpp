#include "tads/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tads/error.hpp"

namespace tads {
namespace {

struct Nearest {
  std::size_t index;
  double distance;
};

Nearest nearest_centroid(std::span<const double> x, const DenseMatrix& centroids) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(x, centroids.row(c));
    if (d < best.distance) best = {c, d};
  }
  return best;
}

double nearest_sse(const DenseMatrix& points, const DenseMatrix& centroids) {
  double sse = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    sse += nearest_centroid(points.row(i), centroids).distance;
  }
  return sse;
}

// Greedy k-means++: each step draws 2 + ln(k) candidates by D^2 sampling and
// keeps the one that lowers the total potential most.
DenseMatrix kmeans_plus_plus(const DenseMatrix& points, std::size_t k, RngStream& rng) {
  const std::size_t n = points.rows();
  DenseMatrix centroids(k, points.cols());
  std::vector<bool> chosen(n, false);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));

  auto sample = [&](double total) {
    double target = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i] <= 0.0) continue;
      target -= dist[i];
      pick = i;
      if (target < 0.0) break;
    }
    return pick;
  };

  std::vector<double> trial(n);
  std::vector<double> best_dist(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pick = 0;
    if (c == 0) {
      pick = rng.below(n);
      for (std::size_t i = 0; i < n; ++i) best_dist[i] = squared_distance(points.row(i), points.row(pick));
    } else {
      double total = 0.0;
      for (double d : dist) total += d;
      if (total > 0.0) {
        double best_potential = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < trials; ++t) {
          const std::size_t cand = sample(total);
          double potential = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            trial[i] = std::min(dist[i], squared_distance(points.row(i), points.row(cand)));
            potential += trial[i];
          }
          if (potential < best_potential) {
            best_potential = potential;
            pick = cand;
            best_dist.swap(trial);
          }
        }
      } else {
        // All remaining points coincide with a chosen centroid.
        pick = static_cast<std::size_t>(
            std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
        for (std::size_t i = 0; i < n; ++i) {
          best_dist[i] = std::min(dist[i], squared_distance(points.row(i), points.row(pick)));
        }
      }
    }
    chosen[pick] = true;
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    dist = best_dist;
  }
  return centroids;
}

// Moves the centroid of each empty cluster onto the point farthest from its
// own centroid (taken from clusters that keep at least one other member).
bool repair_empty(const DenseMatrix& points, DenseMatrix& centroids,
                  std::vector<std::size_t>& assignments) {
  const std::size_t k = centroids.rows();
  bool repaired = false;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assignments) ++sizes[a];
    if (sizes[c] != 0) continue;
    std::size_t far = points.rows();
    double far_dist = -1.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (sizes[assignments[i]] < 2) continue;
      const double d = squared_distance(points.row(i), centroids.row(assignments[i]));
      if (d > far_dist) {
        far_dist = d;
        far = i;
      }
    }
    if (far == points.rows()) break;
    std::copy(points.row(far).begin(), points.row(far).end(), centroids.row(c).begin());
    assignments[far] = c;
    repaired = true;
  }
  return repaired;
}

void recompute_means(const DenseMatrix& points, DenseMatrix& centroids,
                     std::span<const std::size_t> assignments) {
  const std::size_t d = points.cols();
  std::vector<std::size_t> sizes(centroids.rows(), 0);
  DenseMatrix sums(centroids.rows(), d);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto row = sums.row(assignments[i]);
    const auto x = points.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] += x[j];
    ++sizes[assignments[i]];
  }
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    if (sizes[c] == 0) continue;
    for (std::size_t j = 0; j < d; ++j) {
      centroids(c, j) = sums(c, j) / static_cast<double>(sizes[c]);
    }
  }
}

// One sweep of Hartigan's rule: move a point when the exact SSE change,
// accounting for both centroid shifts, is negative. Returns moves made.
std::size_t hartigan_sweep(const DenseMatrix& points, DenseMatrix& centroids,
                           std::vector<std::size_t>& assignments) {
  const std::size_t k = centroids.rows();
  const std::size_t d = points.cols();
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t a : assignments) ++sizes[a];
  std::size_t moves = 0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const std::size_t from = assignments[i];
    if (sizes[from] < 2) continue;
    const auto x = points.row(i);
    const double nf = static_cast<double>(sizes[from]);
    const double removal_gain = nf / (nf - 1.0) * squared_distance(x, centroids.row(from));
    std::size_t best = from;
    double best_cost = removal_gain;
    for (std::size_t c = 0; c < k; ++c) {
      if (c == from) continue;
      const double nc = static_cast<double>(sizes[c]);
      const double cost = nc / (nc + 1.0) * squared_distance(x, centroids.row(c));
      if (cost < best_cost) {
        best_cost = cost;
        best = c;
      }
    }
    // Relative margin keeps rounding noise from triggering no-op moves.
    if (best == from || best_cost >= removal_gain * (1.0 - 1e-12)) continue;
    const double nt = static_cast<double>(sizes[best]);
    for (std::size_t j = 0; j < d; ++j) {
      centroids(from, j) = (nf * centroids(from, j) - x[j]) / (nf - 1.0);
      centroids(best, j) = (nt * centroids(best, j) + x[j]) / (nt + 1.0);
    }
    --sizes[from];
    ++sizes[best];
    assignments[i] = best;
    ++moves;
  }
  return moves;
}

}  // namespace

std::vector<std::size_t> assign_nearest(const DenseMatrix& points,
                                        const DenseMatrix& centroids) {
  std::vector<std::size_t> out(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    out[i] = nearest_centroid(points.row(i), centroids).index;
  }
  return out;
}

double within_cluster_sse(const DenseMatrix& points, const DenseMatrix& centroids,
                          std::span<const std::size_t> assignments) {
  double sse = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    sse += squared_distance(points.row(i), centroids.row(assignments[i]));
  }
  return sse;
}

KMeansResult kmeans_cluster(const DenseMatrix& points, const KMeansOptions& options,
                            RngStream& rng) {
  const std::size_t n = points.rows();
  const std::size_t k = options.k;
  if (n == 0) throw InvalidConfig("kmeans: no points");
  if (k == 0) throw InvalidConfig("kmeans: k must be at least 1");
  if (k > n) {
    throw InvalidConfig("kmeans: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(n) + " points");
  }
  if (!points.all_finite()) throw NumericalDomain("kmeans: non-finite input");

  KMeansResult result;
  KMeansModel& model = result.model;
  model.k = k;
  model.seed = rng.seed();
  model.centroids = kmeans_plus_plus(points, k, rng);

  double sse = nearest_sse(points, model.centroids);
  model.sse_history.push_back(sse);

  // Mini-batch phase.
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  std::vector<double> counts(k, 0.0);
  std::vector<std::size_t> batch_idx(batch);
  std::vector<std::size_t> batch_assign(batch);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    for (auto& idx : batch_idx) idx = rng.below(n);
    for (std::size_t b = 0; b < batch; ++b) {
      batch_assign[b] = nearest_centroid(points.row(batch_idx[b]), model.centroids).index;
    }
    const DenseMatrix saved_centroids = model.centroids;
    const std::vector<double> saved_counts = counts;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t c = batch_assign[b];
      counts[c] += 1.0;
      const double eta = 1.0 / counts[c];
      auto centroid = model.centroids.row(c);
      const auto x = points.row(batch_idx[b]);
      for (std::size_t j = 0; j < centroid.size(); ++j) {
        centroid[j] = (1.0 - eta) * centroid[j] + eta * x[j];
      }
    }
    ++model.iterations_run;
    const double next = nearest_sse(points, model.centroids);
    if (next > sse) {
      model.centroids = saved_centroids;
      counts = saved_counts;
      continue;
    }
    sse = next;
    model.sse_history.push_back(sse);
  }

  // Refinement phase.
  std::vector<std::size_t> assignments = assign_nearest(points, model.centroids);
  for (std::size_t sweep = 0; sweep < options.max_refine_sweeps; ++sweep) {
    DenseMatrix saved_centroids = model.centroids;
    std::vector<std::size_t> saved_assignments = assignments;
    const bool repaired = repair_empty(points, model.centroids, assignments);
    recompute_means(points, model.centroids, assignments);
    const std::size_t moves = hartigan_sweep(points, model.centroids, assignments);
    const std::vector<std::size_t> nearest = assign_nearest(points, model.centroids);
    const bool changed = nearest != assignments;
    assignments = nearest;
    ++model.iterations_run;
    const double next = within_cluster_sse(points, model.centroids, assignments);
    if (next > sse) {
      // Only rounding can raise the SSE here; keep the previous partition.
      model.centroids = std::move(saved_centroids);
      assignments = std::move(saved_assignments);
      break;
    }
    sse = next;
    model.sse_history.push_back(sse);
    if (!repaired && moves == 0 && !changed) break;
  }
  if (repair_empty(points, model.centroids, assignments)) {
    assignments = assign_nearest(points, model.centroids);
    sse = within_cluster_sse(points, model.centroids, assignments);
    model.sse_history.push_back(sse);
  }
  result.assignments = std::move(assignments);
  return result;
}

}  // namespace tads

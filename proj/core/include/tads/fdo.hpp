#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tads/dvn.hpp"
#include "tads/matrix.hpp"
#include "tads/proxy.hpp"
#include "tads/rng.hpp"
#include "tads/tasks.hpp"

namespace tads {

struct MetaRewardConfig {
  std::vector<double> weights;  // phi_k, summing to 1
  double sigma_pert = 0.05;
  double clamp_lo = 1e-4;
  double clamp_hi = 1.0 - 1e-4;
  bool common_random_numbers = true;
  // Independent sample/train/evaluate draws averaged into one J.
  std::size_t replicates = 1;
  // Worker threads for the per-cluster evaluations. Results do not depend
  // on this value.
  std::size_t threads = 1;

  void validate() const;
};

// m_i = 1 iff r_i <= v_i, one uniform draw per sample in index order.
std::vector<std::uint8_t> bernoulli_select(std::span<const double> scores, RngStream& rng);
std::vector<std::size_t> mask_indices(std::span<const std::uint8_t> mask);

// sum_k phi_k eval_k
double meta_reward(std::span<const double> evals, std::span<const double> weights);

struct RewardSample {
  double reward = 0.0;
  std::vector<double> evals;
  std::size_t subset_size = 0;
};

// One sample -> train -> evaluate draw for the given scores. Everything
// random must derive from draw_seed.
using RewardFn = std::function<RewardSample(std::span<const double> scores, std::uint64_t draw_seed)>;

struct ProxyRewardContext {
  DenseMatrix pool_image;
  DenseMatrix pool_text;
  std::vector<TaskEvaluator> evaluators;
  std::vector<double> weights;
  ProxyModel initial;  // omega_0, restored before every training run
  ProxyConfig config;
};

// Bernoulli subset, proxy reset to omega_0 and trained, tasks evaluated.
// An empty subset scores J = 0 with all evals 0.
RewardFn make_proxy_reward(std::shared_ptr<const ProxyRewardContext> context);

struct RewardEstimate {
  double reward = 0.0;
  std::vector<double> evals;  // replicate means
  double subset_size = 0.0;   // replicate mean
};

// Averages `replicates` draws with seeds derive_seed(seed, r).
RewardEstimate estimate_reward(const RewardFn& reward_fn, std::span<const double> scores,
                               std::size_t replicates, std::uint64_t seed);

// g_i = (J(V + sigma 1_{C_i}) - J(V)) / sigma with perturbed scores clamped
// to [clamp_lo, clamp_hi]. `baseline` must be estimate_reward(..., seed).
// With common random numbers every perturbed evaluation replays the
// baseline's seeds; otherwise each cluster gets its own.
std::vector<double> cluster_advantages(std::span<const double> scores,
                                       std::span<const std::size_t> labels, std::size_t n_clusters,
                                       const RewardFn& reward_fn, double baseline,
                                       const MetaRewardConfig& config, std::uint64_t seed);

struct FdoConfig {
  std::size_t iterations = 50;
  double learning_rate = 1e-3;
  MetaRewardConfig meta;

  void validate() const;
};

struct FdoIterationLog {
  std::size_t iteration = 0;
  double reward = 0.0;
  std::vector<double> evals;
  double subset_size = 0.0;
  std::vector<double> advantages;
  double mean_score = 0.0;
};

struct FdoState {
  std::size_t iteration = 0;
  std::vector<double> scores;
  std::vector<double> advantages;
  std::vector<double> reward_history;
  std::vector<FdoIterationLog> log;
  AdamState adam;
  std::uint64_t seed = 0;

  static FdoState start(const DvnParams& params, const FdoConfig& config, std::uint64_t seed);
};

// One meta-iteration: score, sample/train/evaluate J, estimate cluster
// advantages, one DVN step, record J.
const FdoIterationLog& fdo_iteration(FdoState& state, DvnParams& params,
                                     std::span<const ValueProfile> profiles,
                                     std::span<const std::size_t> labels, std::size_t n_clusters,
                                     const RewardFn& reward_fn, const FdoConfig& config);

FdoState run_fdo(DvnParams& params, std::span<const ValueProfile> profiles,
                 std::span<const std::size_t> labels, std::size_t n_clusters,
                 const RewardFn& reward_fn, const FdoConfig& config, std::uint64_t seed);

// Indices with v > tau (strict).
std::vector<std::size_t> final_select(const DvnParams& params,
                                      std::span<const ValueProfile> profiles, double tau);

nlohmann::json iteration_log_to_json(const FdoIterationLog& entry,
                                     std::span<const std::string> task_ids);

}  // namespace tads

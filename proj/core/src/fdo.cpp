#include "tads/fdo.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <memory>

#include "tads/error.hpp"

namespace tads {

void MetaRewardConfig::validate() const {
  validate_task_weights(weights);
  if (!(sigma_pert > 0.0) || !std::isfinite(sigma_pert)) throw InvalidConfig("fdo.sigma_pert must be > 0");
  if (!(clamp_lo > 0.0) || !(clamp_hi < 1.0) || !(clamp_lo < clamp_hi)) {
    throw InvalidConfig("fdo clamp bounds must satisfy 0 < lo < hi < 1");
  }
  if (replicates == 0) throw InvalidConfig("fdo.replicates must be positive");
  if (threads == 0) throw InvalidConfig("fdo.threads must be positive");
}

void FdoConfig::validate() const {
  meta.validate();
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidConfig("fdo.learning_rate must be >= 0");
}

std::vector<std::uint8_t> bernoulli_select(std::span<const double> scores, RngStream& rng) {
  std::vector<std::uint8_t> mask(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) mask[i] = rng.uniform() <= scores[i] ? 1 : 0;
  return mask;
}

std::vector<std::size_t> mask_indices(std::span<const std::uint8_t> mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

double meta_reward(std::span<const double> evals, std::span<const double> weights) {
  if (evals.size() != weights.size()) throw ShapeError("one weight per task evaluation required");
  double j = 0.0;
  for (std::size_t k = 0; k < evals.size(); ++k) j += weights[k] * evals[k];
  return j;
}

RewardFn make_proxy_reward(std::shared_ptr<const ProxyRewardContext> context) {
  if (context->evaluators.size() != context->weights.size()) {
    throw ShapeError("one weight per evaluator required");
  }
  return [context](std::span<const double> scores, std::uint64_t draw_seed) {
    const auto& ctx = *context;
    if (scores.size() != ctx.pool_image.rows()) throw ShapeError("one score per pool sample required");
    RngStream bernoulli(draw_seed, "bernoulli");
    const auto subset = mask_indices(bernoulli_select(scores, bernoulli));
    RewardSample sample;
    sample.subset_size = subset.size();
    sample.evals.assign(ctx.evaluators.size(), 0.0);
    if (subset.empty()) return sample;
    RngStream train_rng(draw_seed, "proxy-train");
    const auto trained = train_proxy(ctx.initial, ctx.pool_image, ctx.pool_text, subset, ctx.config, train_rng);
    for (std::size_t k = 0; k < ctx.evaluators.size(); ++k) {
      sample.evals[k] = evaluate_task(trained.model, ctx.evaluators[k]);
    }
    sample.reward = meta_reward(sample.evals, ctx.weights);
    return sample;
  };
}

RewardEstimate estimate_reward(const RewardFn& reward_fn, std::span<const double> scores,
                               std::size_t replicates, std::uint64_t seed) {
  if (replicates == 0) throw InvalidConfig("replicates must be positive");
  RewardEstimate est;
  for (std::size_t r = 0; r < replicates; ++r) {
    const RewardSample s = reward_fn(scores, derive_seed(seed, r));
    est.reward += s.reward;
    est.subset_size += static_cast<double>(s.subset_size);
    if (est.evals.empty()) est.evals.assign(s.evals.size(), 0.0);
    for (std::size_t k = 0; k < s.evals.size(); ++k) est.evals[k] += s.evals[k];
  }
  const double inv = 1.0 / static_cast<double>(replicates);
  est.reward *= inv;
  est.subset_size *= inv;
  for (double& e : est.evals) e *= inv;
  return est;
}

std::vector<double> cluster_advantages(std::span<const double> scores,
                                       std::span<const std::size_t> labels, std::size_t n_clusters,
                                       const RewardFn& reward_fn, double baseline,
                                       const MetaRewardConfig& config, std::uint64_t seed) {
  if (labels.size() != scores.size()) throw ShapeError("one cluster label per score required");
  std::vector<std::vector<std::size_t>> members(n_clusters);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_clusters) throw IndexError("cluster label " + std::to_string(labels[i]) + " out of range");
    members[labels[i]].push_back(i);
  }

  auto advantage = [&](std::size_t c) {
    if (members[c].empty()) return 0.0;
    std::vector<double> perturbed(scores.begin(), scores.end());
    for (std::size_t i : members[c]) {
      perturbed[i] = std::clamp(perturbed[i] + config.sigma_pert, config.clamp_lo, config.clamp_hi);
    }
    const std::uint64_t s = config.common_random_numbers ? seed : derive_seed(seed, "cluster-" + std::to_string(c));
    const double j = estimate_reward(reward_fn, perturbed, config.replicates, s).reward;
    return (j - baseline) / config.sigma_pert;
  };

  std::vector<double> g(n_clusters, 0.0);
  if (config.threads <= 1) {
    for (std::size_t c = 0; c < n_clusters; ++c) g[c] = advantage(c);
    return g;
  }
  for (std::size_t begin = 0; begin < n_clusters; begin += config.threads) {
    const std::size_t end = std::min(n_clusters, begin + config.threads);
    std::vector<std::future<double>> jobs;
    for (std::size_t c = begin; c < end; ++c) jobs.push_back(std::async(std::launch::async, advantage, c));
    for (std::size_t c = begin; c < end; ++c) g[c] = jobs[c - begin].get();
  }
  return g;
}

FdoState FdoState::start(const DvnParams& params, const FdoConfig& config, std::uint64_t seed) {
  config.validate();
  FdoState state;
  state.adam = AdamState::for_parameters(params.parameter_count(), config.learning_rate);
  state.seed = seed;
  return state;
}

const FdoIterationLog& fdo_iteration(FdoState& state, DvnParams& params,
                                     std::span<const ValueProfile> profiles,
                                     std::span<const std::size_t> labels, std::size_t n_clusters,
                                     const RewardFn& reward_fn, const FdoConfig& config) {
  const std::uint64_t seed = derive_seed(state.seed, static_cast<std::uint64_t>(state.iteration));
  std::vector<double> scores = dvn_scores(params, profiles);
  for (double& v : scores) v = std::clamp(v, config.meta.clamp_lo, config.meta.clamp_hi);

  const RewardEstimate base = estimate_reward(reward_fn, scores, config.meta.replicates, seed);
  auto g = cluster_advantages(scores, labels, n_clusters, reward_fn, base.reward, config.meta, seed);
  dvn_update(params, profiles, labels, g, state.adam);

  FdoIterationLog entry;
  entry.iteration = state.iteration;
  entry.reward = base.reward;
  entry.evals = base.evals;
  entry.subset_size = base.subset_size;
  entry.advantages = g;
  double sum = 0.0;
  for (double v : scores) sum += v;
  entry.mean_score = scores.empty() ? 0.0 : sum / static_cast<double>(scores.size());

  state.scores = std::move(scores);
  state.advantages = std::move(g);
  state.reward_history.push_back(base.reward);
  state.log.push_back(std::move(entry));
  ++state.iteration;
  return state.log.back();
}

FdoState run_fdo(DvnParams& params, std::span<const ValueProfile> profiles,
                 std::span<const std::size_t> labels, std::size_t n_clusters,
                 const RewardFn& reward_fn, const FdoConfig& config, std::uint64_t seed) {
  FdoState state = FdoState::start(params, config, seed);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    fdo_iteration(state, params, profiles, labels, n_clusters, reward_fn, config);
  }
  state.scores = dvn_scores(params, profiles);
  return state;
}

std::vector<std::size_t> final_select(const DvnParams& params,
                                      std::span<const ValueProfile> profiles, double tau) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (dvn_forward(params, profiles[i]) > tau) out.push_back(i);
  }
  return out;
}

nlohmann::json iteration_log_to_json(const FdoIterationLog& entry,
                                     std::span<const std::string> task_ids) {
  nlohmann::json evals = nlohmann::json::object();
  for (std::size_t k = 0; k < entry.evals.size(); ++k) {
    evals[k < task_ids.size() ? task_ids[k] : std::to_string(k)] = entry.evals[k];
  }
  return {{"iteration", entry.iteration}, {"J", entry.reward},
          {"evals", evals},               {"subset_size", entry.subset_size},
          {"advantages", entry.advantages}, {"mean_score", entry.mean_score}};
}

}  // namespace tads

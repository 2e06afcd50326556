#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tads/mlp.hpp"
#include "tads/rng.hpp"

namespace tads {

// Per-sample DVN input: quality q, normalized relevance h_r, diversity d.
struct ValueProfile {
  double quality = 0.0;
  std::vector<double> relevance;
  double diversity = 1.0;
};

struct DvnConfig {
  std::size_t task_count = 1;
  std::size_t head_width = 16;
  std::vector<std::size_t> fusion_hidden = {32};
  double beta = 1e-4;

  void validate() const;
};

// Three projection heads feeding a fusion network with a sigmoid output.
// Flat parameter order: quality head, relevance head, diversity head, fusion.
struct DvnParams {
  Mlp quality_head;    // 1 -> h, relu
  Mlp relevance_head;  // K -> h, relu
  Mlp diversity_head;  // 1 -> h, relu
  Mlp fusion;          // 3h -> hidden... -> 1, sigmoid
  double beta = 1e-4;

  static DvnParams zeros(const DvnConfig& config);
  // He/Glorot-scaled weights, zero biases.
  static DvnParams random(const DvnConfig& config, RngStream& rng);
  // Reassembles parameters from the four networks in flat order.
  static DvnParams from_networks(std::vector<Mlp> nets, double beta);

  std::vector<Mlp> networks() const;
  std::size_t task_count() const noexcept { return relevance_head.input_dim(); }
  std::size_t parameter_count() const noexcept;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  double squared_norm() const noexcept;
};

double dvn_forward(const DvnParams& params, const ValueProfile& profile);
std::vector<double> dvn_scores(const DvnParams& params, std::span<const ValueProfile> profiles);

inline constexpr double kPolicyLogFloor = 1e-12;

// -sum_i g_{label(i)} log max(v_i, 1e-12) + beta ||theta||^2
double policy_loss(const DvnParams& params, std::span<const ValueProfile> profiles,
                   std::span<const std::size_t> cluster_labels,
                   std::span<const double> advantages);
double policy_loss_from_scores(std::span<const double> scores,
                               std::span<const std::size_t> cluster_labels,
                               std::span<const double> advantages, double l2_term);

// Gradient of policy_loss with respect to the flat parameters.
std::vector<double> policy_gradient(const DvnParams& params, std::span<const ValueProfile> profiles,
                                    std::span<const std::size_t> cluster_labels,
                                    std::span<const double> advantages);

// One Adam step on policy_loss. Throws NumericalDomain on non-finite
// advantages or gradients, leaving params unchanged.
void dvn_update(DvnParams& params, std::span<const ValueProfile> profiles,
                std::span<const std::size_t> cluster_labels, std::span<const double> advantages,
                AdamState& adam);

}  // namespace tads

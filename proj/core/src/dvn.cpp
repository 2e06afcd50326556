#include "tads/dvn.hpp"

#include <algorithm>
#include <cmath>

#include "tads/error.hpp"

namespace tads {
namespace {

struct Forward {
  MlpTrace q, r, d, fuse;
  double v = 0.0;
};

Mlp make_head(std::size_t in, std::size_t width, RngStream* rng) {
  const std::size_t dims[] = {in, width};
  const Activation acts[] = {Activation::kRelu};
  return rng ? Mlp::random(dims, acts, *rng) : Mlp(dims, acts);
}

Mlp make_fusion(const DvnConfig& c, RngStream* rng) {
  std::vector<std::size_t> dims = {3 * c.head_width};
  dims.insert(dims.end(), c.fusion_hidden.begin(), c.fusion_hidden.end());
  dims.push_back(1);
  std::vector<Activation> acts(dims.size() - 1, Activation::kRelu);
  acts.back() = Activation::kSigmoid;
  return rng ? Mlp::random(dims, acts, *rng) : Mlp(dims, acts);
}

DvnParams build(const DvnConfig& config, RngStream* rng) {
  config.validate();
  DvnParams p;
  p.quality_head = make_head(1, config.head_width, rng);
  p.relevance_head = make_head(config.task_count, config.head_width, rng);
  p.diversity_head = make_head(1, config.head_width, rng);
  p.fusion = make_fusion(config, rng);
  p.beta = config.beta;
  return p;
}

void check_profile(const DvnParams& params, const ValueProfile& profile) {
  if (profile.relevance.size() != params.task_count()) {
    throw ShapeError("relevance vector has " + std::to_string(profile.relevance.size()) +
                     " entries, DVN expects " + std::to_string(params.task_count()));
  }
}

Forward forward_traced(const DvnParams& p, const ValueProfile& profile) {
  check_profile(p, profile);
  Forward f;
  const double q[] = {profile.quality};
  const double d[] = {profile.diversity};
  const auto eq = p.quality_head.forward(q, f.q);
  const auto er = p.relevance_head.forward(profile.relevance, f.r);
  const auto ed = p.diversity_head.forward(d, f.d);
  std::vector<double> fused;
  fused.reserve(eq.size() + er.size() + ed.size());
  fused.insert(fused.end(), eq.begin(), eq.end());
  fused.insert(fused.end(), er.begin(), er.end());
  fused.insert(fused.end(), ed.begin(), ed.end());
  f.v = p.fusion.forward(fused, f.fuse)[0];
  return f;
}

void check_labels(std::size_t n, std::span<const std::size_t> labels,
                  std::span<const double> advantages) {
  if (labels.size() != n) throw ShapeError("one cluster label per profile required");
  for (std::size_t l : labels) {
    if (l >= advantages.size()) throw IndexError("cluster " + std::to_string(l) + " has no advantage");
  }
}

}  // namespace

void DvnConfig::validate() const {
  if (task_count == 0) throw InvalidConfig("dvn needs at least one task");
  if (head_width == 0) throw InvalidConfig("dvn.head_width must be positive");
  for (std::size_t h : fusion_hidden) {
    if (h == 0) throw InvalidConfig("dvn.fusion_hidden entries must be positive");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidConfig("dvn.beta must be >= 0");
}

DvnParams DvnParams::zeros(const DvnConfig& config) { return build(config, nullptr); }

DvnParams DvnParams::random(const DvnConfig& config, RngStream& rng) { return build(config, &rng); }

DvnParams DvnParams::from_networks(std::vector<Mlp> nets, double beta) {
  if (nets.size() != 4) throw ShapeError("DVN needs 4 networks, got " + std::to_string(nets.size()));
  DvnParams p{std::move(nets[0]), std::move(nets[1]), std::move(nets[2]), std::move(nets[3]), beta};
  const std::size_t h = p.quality_head.output_dim();
  if (p.quality_head.input_dim() != 1 || p.diversity_head.input_dim() != 1 ||
      p.relevance_head.output_dim() != h || p.diversity_head.output_dim() != h ||
      p.fusion.input_dim() != 3 * h || p.fusion.output_dim() != 1) {
    throw ShapeError("DVN networks have inconsistent dimensions");
  }
  return p;
}

std::vector<Mlp> DvnParams::networks() const {
  return {quality_head, relevance_head, diversity_head, fusion};
}

std::size_t DvnParams::parameter_count() const noexcept {
  return quality_head.parameter_count() + relevance_head.parameter_count() +
         diversity_head.parameter_count() + fusion.parameter_count();
}

std::vector<double> DvnParams::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const Mlp* net : {&quality_head, &relevance_head, &diversity_head, &fusion}) {
    const auto p = net->parameters();
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return flat;
}

void DvnParams::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeError("DVN parameter count mismatch");
  std::size_t offset = 0;
  for (Mlp* net : {&quality_head, &relevance_head, &diversity_head, &fusion}) {
    const std::size_t n = net->parameter_count();
    net->set_parameters(flat.subspan(offset, n));
    offset += n;
  }
}

double DvnParams::squared_norm() const noexcept {
  return quality_head.squared_norm() + relevance_head.squared_norm() +
         diversity_head.squared_norm() + fusion.squared_norm();
}

double dvn_forward(const DvnParams& params, const ValueProfile& profile) {
  return forward_traced(params, profile).v;
}

std::vector<double> dvn_scores(const DvnParams& params, std::span<const ValueProfile> profiles) {
  std::vector<double> out;
  out.reserve(profiles.size());
  for (const auto& p : profiles) out.push_back(dvn_forward(params, p));
  return out;
}

double policy_loss_from_scores(std::span<const double> scores,
                               std::span<const std::size_t> cluster_labels,
                               std::span<const double> advantages, double l2_term) {
  check_labels(scores.size(), cluster_labels, advantages);
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double g = advantages[cluster_labels[i]];
    if (g != 0.0) loss -= g * std::log(std::max(scores[i], kPolicyLogFloor));
  }
  return loss + l2_term;
}

double policy_loss(const DvnParams& params, std::span<const ValueProfile> profiles,
                   std::span<const std::size_t> cluster_labels,
                   std::span<const double> advantages) {
  return policy_loss_from_scores(dvn_scores(params, profiles), cluster_labels, advantages,
                                 params.beta * params.squared_norm());
}

std::vector<double> policy_gradient(const DvnParams& params, std::span<const ValueProfile> profiles,
                                    std::span<const std::size_t> cluster_labels,
                                    std::span<const double> advantages) {
  check_labels(profiles.size(), cluster_labels, advantages);
  const std::size_t nq = params.quality_head.parameter_count();
  const std::size_t nr = params.relevance_head.parameter_count();
  const std::size_t nd = params.diversity_head.parameter_count();
  const std::size_t h = params.quality_head.output_dim();

  std::vector<double> grad = params.parameters();
  for (double& g : grad) g *= 2.0 * params.beta;
  std::span<double> all(grad);
  auto gq = all.subspan(0, nq);
  auto gr = all.subspan(nq, nr);
  auto gd = all.subspan(nq + nr, nd);
  auto gf = all.subspan(nq + nr + nd);

  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const double g = advantages[cluster_labels[i]];
    if (g == 0.0) continue;
    const Forward f = forward_traced(params, profiles[i]);
    // d(-g log v)/dv; zero where the log floor is active.
    const double upstream[] = {f.v > kPolicyLogFloor ? -g / f.v : 0.0};
    const auto dfused = params.fusion.backward(f.fuse, upstream, gf);
    const std::span<const double> df(dfused);
    params.quality_head.backward(f.q, df.subspan(0, h), gq);
    params.relevance_head.backward(f.r, df.subspan(h, h), gr);
    params.diversity_head.backward(f.d, df.subspan(2 * h, h), gd);
  }
  return grad;
}

void dvn_update(DvnParams& params, std::span<const ValueProfile> profiles,
                std::span<const std::size_t> cluster_labels, std::span<const double> advantages,
                AdamState& adam) {
  for (double g : advantages) {
    if (!std::isfinite(g)) throw NumericalDomain("non-finite cluster advantage");
  }
  const auto grad = policy_gradient(params, profiles, cluster_labels, advantages);
  auto flat = params.parameters();
  adam_step(flat, grad, adam);
  params.set_parameters(flat);
}

}  // namespace tads

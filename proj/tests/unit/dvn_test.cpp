#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tads/dvn.hpp"
#include "tads/error.hpp"

namespace tads {
namespace {

ValueProfile random_profile(RngStream& r, std::size_t k) {
  ValueProfile p;
  p.quality = r.uniform();
  p.relevance.resize(k);
  for (auto& x : p.relevance) x = r.uniform(-1, 1);
  p.diversity = r.uniform(0.05, 1.0);
  return p;
}

DvnParams jittered(const DvnConfig& cfg, RngStream& r) {
  auto p = DvnParams::random(cfg, r);
  auto flat = p.parameters();
  for (auto& x : flat) x += 0.05 * r.normal();
  p.set_parameters(flat);
  return p;
}

TEST(Dvn, ZeroParamsScoreHalf) {
  DvnConfig cfg;
  cfg.task_count = 3;
  const auto p = DvnParams::zeros(cfg);
  RngStream r(1, "p");
  for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(dvn_forward(p, random_profile(r, 3)), 0.5);
  // 1->16, 3->16, 1->16, 48->32->1
  EXPECT_EQ(p.parameter_count(), 32u + 64u + 32u + 48u * 32u + 32u + 33u);
}

TEST(Dvn, SeededScoresReplayBitForBit) {
  DvnConfig cfg;
  cfg.task_count = 2;
  RngStream a(7, "dvn"), b(7, "dvn"), r(1, "p");
  const auto pa = DvnParams::random(cfg, a);
  const auto pb = DvnParams::random(cfg, b);
  const auto prof = random_profile(r, 2);
  EXPECT_EQ(dvn_forward(pa, prof), dvn_forward(pb, prof));
  const double v = dvn_forward(pa, prof);
  EXPECT_GT(v, 0.0);
  EXPECT_LT(v, 1.0);
}

TEST(Dvn, RelevanceLengthMismatch) {
  DvnConfig cfg;
  cfg.task_count = 2;
  const auto p = DvnParams::zeros(cfg);
  ValueProfile prof;
  prof.relevance = {1.0};
  EXPECT_THROW(dvn_forward(p, prof), ShapeError);
  EXPECT_THROW(DvnParams::from_networks({p.quality_head}, 0.0), ShapeError);
  cfg.task_count = 0;
  EXPECT_THROW(DvnParams::zeros(cfg), InvalidConfig);
}

TEST(PolicyLoss, Examples) {
  const double v[] = {0.5, 0.5};
  const std::size_t lab[] = {0, 0};
  const double g1[] = {1.0}, g0[] = {0.0};
  EXPECT_NEAR(policy_loss_from_scores(v, lab, g1, 0.0), 2.0 * std::log(2.0), 1e-15);
  EXPECT_EQ(policy_loss_from_scores(v, lab, g0, 0.0), 0.0);
  DvnConfig cfg;
  cfg.beta = 0.01;
  RngStream r(3, "p");
  const auto p = DvnParams::random(cfg, r);
  std::vector<ValueProfile> profs{random_profile(r, 1), random_profile(r, 1)};
  EXPECT_NEAR(policy_loss(p, profs, lab, g0), 0.01 * p.squared_norm(), 1e-15);
  const double zero[] = {0.0};
  EXPECT_NEAR(policy_loss_from_scores(zero, std::span<const std::size_t>(lab, 1), g1, 0.0),
              -std::log(kPolicyLogFloor), 1e-9);
  const std::size_t bad[] = {0, 1};
  EXPECT_THROW(policy_loss_from_scores(v, bad, g1, 0.0), IndexError);
}

TEST(PolicyLoss, InvariantUnderClusterRelabeling) {
  DvnConfig cfg;
  cfg.task_count = 2;
  RngStream r(4, "p");
  const auto p = DvnParams::random(cfg, r);
  std::vector<ValueProfile> profs;
  std::vector<std::size_t> lab, relab;
  const std::size_t perm[] = {2, 0, 3, 1};
  for (int i = 0; i < 12; ++i) {
    profs.push_back(random_profile(r, 2));
    lab.push_back(i % 4);
    relab.push_back(perm[i % 4]);
  }
  const std::vector<double> g{0.3, -1.2, 0.0, 2.0};
  std::vector<double> pg(4);
  for (std::size_t c = 0; c < 4; ++c) pg[perm[c]] = g[c];
  EXPECT_NEAR(policy_loss(p, profs, lab, g), policy_loss(p, profs, relab, pg), 1e-12);
  const auto ga = policy_gradient(p, profs, lab, g);
  const auto gb = policy_gradient(p, profs, relab, pg);
  EXPECT_LE(testing::max_relative_error(ga, gb, 1e-12), 1e-12);
}

TEST(PolicyGradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngStream r(seed, "fd");
    DvnConfig cfg;
    cfg.task_count = 1 + r.below(4);
    cfg.head_width = 4;
    cfg.fusion_hidden = {6};
    cfg.beta = 1e-3;
    const auto p = jittered(cfg, r);
    std::vector<ValueProfile> profs;
    std::vector<std::size_t> lab;
    for (int i = 0; i < 6; ++i) {
      profs.push_back(random_profile(r, cfg.task_count));
      lab.push_back(r.below(3));
    }
    const std::vector<double> g{r.normal(), r.normal(), r.normal()};
    const auto grad = policy_gradient(p, profs, lab, g);
    auto loss = [&](std::span<const double> flat) {
      auto q = p;
      q.set_parameters(flat);
      return policy_loss(q, profs, lab, g);
    };
    const auto flat = p.parameters();
    std::vector<double> fd(flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) fd[i] = testing::central_difference(loss, flat, i, 1e-6);
    EXPECT_LE(testing::max_relative_error(grad, fd, 1e-4), 1e-4) << "seed " << seed;
  }
}

TEST(DvnUpdate, ZeroAdvantageWithoutPenaltyLeavesParams) {
  DvnConfig cfg;
  cfg.beta = 0.0;
  RngStream r(5, "p");
  auto p = DvnParams::random(cfg, r);
  const auto before = p.parameters();
  std::vector<ValueProfile> profs{random_profile(r, 1)};
  const std::size_t lab[] = {0};
  const double g[] = {0.0};
  auto adam = AdamState::for_parameters(p.parameter_count(), 1e-3);
  dvn_update(p, profs, lab, g, adam);
  EXPECT_EQ(p.parameters(), before);
  const double nan[] = {std::nan("")};
  EXPECT_THROW(dvn_update(p, profs, lab, nan, adam), NumericalDomain);
  EXPECT_EQ(p.parameters(), before);
}

TEST(DvnUpdate, SignLaw) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (double sign : {1.0, -1.0}) {
      DvnConfig cfg;
      cfg.task_count = 2;
      cfg.beta = 0.0;
      RngStream r(seed, "sign");
      auto p = DvnParams::random(cfg, r);
      std::vector<ValueProfile> profs{random_profile(r, 2), random_profile(r, 2)};
      const std::size_t lab[] = {0, 1};
      const double g[] = {sign * 1.0, 0.0};
      const double v0 = dvn_forward(p, profs[0]);
      const double v1 = dvn_forward(p, profs[1]);
      auto adam = AdamState::for_parameters(p.parameter_count(), 1e-4);
      dvn_update(p, profs, lab, g, adam);
      const double dv = dvn_forward(p, profs[0]) - v0;
      if (sign > 0) {
        EXPECT_GT(dv, 0.0) << "seed " << seed;
      } else {
        EXPECT_LT(dv, 0.0) << "seed " << seed;
      }
      (void)v1;
    }
  }
}

}  // namespace
}  // namespace tads

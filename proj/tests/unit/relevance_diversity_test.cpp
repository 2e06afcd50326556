#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fixtures.hpp"
#include "tads/diversity.hpp"
#include "tads/error.hpp"
#include "tads/relevance.hpp"
#include "tads/tasks.hpp"

namespace tads {
namespace {

TaskSupportSet support(std::string id, std::vector<std::vector<double>> rows) {
  TaskSupportSet s;
  s.task_id = std::move(id);
  s.prototypes = DenseMatrix(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto u = testing::unit(rows[r]);
    std::copy(u.begin(), u.end(), s.prototypes.row(r).begin());
  }
  return s;
}

TEST(TaskRelevance, MeanCosineOverPrototypes) {
  const std::vector<double> x{1, 0};
  EXPECT_DOUBLE_EQ(task_relevance(x, support("t", {{1, 0}})), 1.0);
  EXPECT_NEAR(task_relevance(x, support("t", {{0.8, 0.6}, {0.4, std::sqrt(1 - 0.16)}})), 0.6, 1e-15);
  EXPECT_NEAR(task_relevance(x, support("t", {{0, 1}, {0, -1}})), 0.0, 1e-15);
  const std::vector<double> wrong{1, 0, 0};
  EXPECT_THROW(task_relevance(wrong, support("t", {{1, 0}})), ShapeError);
}

TEST(NormalizeRelevance, Examples) {
  const double v[] = {3, 4};
  const auto r = normalize_relevance(v, 0.0);
  EXPECT_DOUBLE_EQ(r.values[0], 0.6);
  EXPECT_DOUBLE_EQ(r.values[1], 0.8);
  const double z[] = {0, 0, 0};
  const auto rz = normalize_relevance(z, kRelevanceEpsilon);
  for (double x : rz.values) EXPECT_EQ(x, 0.0);
  const double one[] = {0.3};
  EXPECT_NEAR(normalize_relevance(one, kRelevanceEpsilon).values[0], 1.0, 1e-7);
}

TEST(NormalizeRelevance, UnitNormAndPermutationEquivariance) {
  RngStream r(1, "rel");
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(1 + r.below(8));
    for (auto& x : v) x = r.uniform(-1, 1);
    const auto n = normalize_relevance(v, 0.0).values;
    EXPECT_NEAR(std::sqrt(std::inner_product(n.begin(), n.end(), n.begin(), 0.0)), 1.0, 1e-9);
    std::vector<std::size_t> perm(v.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[r.below(i)]);
    std::vector<double> pv(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) pv[i] = v[perm[i]];
    const auto pn = normalize_relevance(pv, 0.0).values;
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(pn[i], n[perm[i]]);
  }
}

TEST(RelevanceMatrix, RowsFollowRecordsAndTasks) {
  const auto c = testing::make_corpus({testing::make_record("a", "x", 0), testing::make_record("b", "y", 1)},
                                      {{1, 0}, {0, 1}}, {{0, 1}, {1, 0}});
  const std::vector<TaskSupportSet> sup{support("t1", {{1, 0}}), support("t2", {{1, 1}})};
  const std::size_t recs[] = {1, 0};
  const auto m = relevance_matrix(c, recs, sup, 0.0);
  ASSERT_EQ(m.rows(), 2u);
  ASSERT_EQ(m.cols(), 2u);
  // record 1 image = (0,1): raw (0, 1/sqrt2)
  EXPECT_NEAR(m(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(m(0, 1), 1.0, 1e-15);
  const auto t = relevance_matrix(c, recs, sup, 0.0, RelevanceEmbedding::kText);
  EXPECT_NEAR(t(0, 0), std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_THROW(relevance_matrix(c, recs, {}, 0.0), InvalidConfig);
}

TEST(Diversity, FactorExamples) {
  EXPECT_DOUBLE_EQ(diversity_factor(99, 0.5, 1.0), 0.1);
  EXPECT_DOUBLE_EQ(diversity_factor(1, 1.0, 1.0), 0.5);
  for (std::size_t s : {1u, 10u, 1000u}) EXPECT_EQ(diversity_factor(s, 0.0, 1.0), 1.0);
  for (std::size_t s = 1; s < 200; ++s) {
    EXPECT_LT(diversity_factor(s + 1, 0.5, 1.0), diversity_factor(s, 0.5, 1.0));
    EXPECT_GT(diversity_factor(s, 0.5, 1.0), 0.0);
    EXPECT_LE(diversity_factor(s, 0.5, 1.0), 1.0);
  }
}

TEST(Diversity, AssignmentFromLabels) {
  const std::size_t labels[] = {0, 2, 2, 0, 2};
  const auto a = assignment_from_labels(labels, 3);
  EXPECT_EQ(a.sizes, (std::vector<std::size_t>{2, 0, 3}));
  DiversityConfig cfg;
  cfg.delta = 1.0;
  EXPECT_DOUBLE_EQ(diversity_factor(a, 1, cfg), 0.25);
  EXPECT_DOUBLE_EQ(diversity_factor(a, 0, cfg), 1.0 / 3.0);
  EXPECT_THROW(diversity_factor(a, 5, cfg), IndexError);
  const std::size_t bad[] = {0, 3};
  EXPECT_THROW(assignment_from_labels(bad, 3), IndexError);
}

TEST(Diversity, TwoBlobsRecoveredUpToRelabeling) {
  RngStream r(2, "blobs");
  DenseMatrix pts(60, 4);
  std::vector<std::size_t> planted(60);
  for (std::size_t i = 0; i < 60; ++i) {
    planted[i] = i % 2;
    for (std::size_t j = 0; j < 4; ++j) pts(i, j) = (planted[i] ? 5.0 : -5.0) + 0.1 * r.normal();
  }
  DiversityConfig cfg;
  cfg.n_clusters = 2;
  RngStream rng(2, "k");
  const auto a = cluster_pool(pts, cfg, rng);
  const std::size_t flip = a.labels[0] == planted[0] ? 0 : 1;
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(a.labels[i] ^ flip, planted[i]);
  EXPECT_EQ(a.sizes[0] + a.sizes[1], 60u);
  cfg.n_clusters = 1;
  RngStream rng1(2, "k");
  const auto one = cluster_pool(pts, cfg, rng1);
  EXPECT_EQ(one.sizes, (std::vector<std::size_t>{60}));
  cfg.n_clusters = 61;
  EXPECT_THROW(cluster_pool(pts, cfg, rng1), InvalidConfig);
}

TEST(Diversity, JsonTableRoundTrip) {
  const std::size_t labels[] = {1, 0, 1};
  const auto a = assignment_from_labels(labels, 2);
  const std::vector<std::string> ids{"x", "y", "z"};
  const auto j = assignment_to_json(a, ids);
  EXPECT_EQ(j.at("n_clusters"), 2);
  const std::vector<std::string> reordered{"z", "x", "y"};
  const auto back = assignment_from_json(j, reordered);
  EXPECT_EQ(back.labels, (std::vector<std::size_t>{1, 1, 0}));
  const std::vector<std::string> missing{"x", "w"};
  EXPECT_THROW(assignment_from_json(j, missing), CorpusMismatch);
}

TEST(TaskSuite, WriteLoadRoundTripAndChecks) {
  testing::TempDir dir;
  const auto synth = generate_corpus(testing::small_spec(1));
  write_task_suite(dir / "tasks.json", synth.tasks);
  const auto back = load_task_suite(dir / "tasks.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.supports[0].task_id, "cls");
  EXPECT_EQ(back.supports[1].kind, TaskKind::kRetrieval);
  EXPECT_EQ(back.evaluators[0].labels, synth.tasks.evaluators[0].labels);
  EXPECT_EQ(back.evaluators[1].ids, synth.tasks.evaluators[1].ids);
  const auto w = back.weights();
  EXPECT_NEAR(w[0] + w[1], 1.0, 1e-12);
  EXPECT_NO_THROW(check_disjoint(back, synth.records));
  auto clash = synth.records;
  clash[0].id = back.evaluators[0].ids[0];
  EXPECT_THROW(check_disjoint(back, clash), InvalidConfig);
  const double good[] = {0.25, 0.75}, bad[] = {0.5, 0.6}, neg[] = {-0.5, 1.5};
  EXPECT_NO_THROW(validate_task_weights(good));
  EXPECT_THROW(validate_task_weights(bad), InvalidConfig);
  EXPECT_THROW(validate_task_weights(neg), InvalidConfig);
}

TEST(TaskSuite, UnknownKindAndMissingFile) {
  testing::TempDir dir;
  std::ofstream(dir / "t.json") << R"({"tasks":[{"id":"a","kind":"captioning","prototypes":"p.tdsemb","validation":"v.tdsemb","validation_index":"v.jsonl"}]})";
  EXPECT_THROW(load_task_suite(dir / "t.json"), InvalidConfig);
  EXPECT_THROW(load_task_suite(dir / "none.json"), Error);
}

}  // namespace
}  // namespace tads

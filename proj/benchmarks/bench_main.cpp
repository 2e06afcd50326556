#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "tads/dvn.hpp"
#include "tads/kmeans.hpp"
#include "tads/proxy.hpp"
#include "tads/rng.hpp"
#include "tads/text.hpp"

namespace {

using namespace tads;

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  RngStream rng(seed, "bench-matrix");
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

std::string random_caption(std::size_t length, RngStream& rng) {
  std::string s(length, ' ');
  for (auto& c : s) c = static_cast<char>('a' + rng.below(26));
  return s;
}

void BM_Levenshtein(benchmark::State& state) {
  RngStream rng(1, "bench-text");
  const auto a = random_caption(static_cast<std::size_t>(state.range(0)), rng);
  const auto b = random_caption(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(levenshtein(a, b));
}
BENCHMARK(BM_Levenshtein)->Arg(32)->Arg(128)->Arg(512);

void BM_KMeans(benchmark::State& state) {
  const auto points = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 2);
  for (auto _ : state) {
    RngStream rng(3, "bench-kmeans");
    benchmark::DoNotOptimize(kmeans_cluster(points, {.k = 16, .batch_size = 256, .iterations = 20}, rng));
  }
}
BENCHMARK(BM_KMeans)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_DvnForward(benchmark::State& state) {
  DvnConfig cfg;
  cfg.task_count = 4;
  RngStream rng(4, "bench-dvn");
  const auto params = DvnParams::random(cfg, rng);
  std::vector<ValueProfile> profiles(1024);
  for (auto& p : profiles) {
    p.quality = rng.uniform();
    p.relevance = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    p.diversity = rng.uniform();
  }
  for (auto _ : state) benchmark::DoNotOptimize(dvn_scores(params, profiles));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(profiles.size()));
}
BENCHMARK(BM_DvnForward);

void BM_ProxyStep(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  ProxyConfig cfg;
  RngStream rng(5, "bench-proxy");
  const auto model = ProxyModel::initial(64, cfg, rng);
  const auto image = random_matrix(batch, 64, 6);
  const auto text = random_matrix(batch, 64, 7);
  DenseMatrix gi, gt;
  for (auto _ : state) benchmark::DoNotOptimize(info_nce_loss(model, image, text, &gi, &gt));
}
BENCHMARK(BM_ProxyStep)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();

#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "tads/matrix.hpp"

namespace tads::testing {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("tads-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

SampleRecord make_record(std::string id, std::string caption, std::size_t embedding_index) {
  SampleRecord r;
  r.id = std::move(id);
  r.caption = std::move(caption);
  r.embedding_index = embedding_index;
  return r;
}

std::vector<double> unit(std::vector<double> v) {
  normalize_in_place(v);
  return v;
}

Corpus make_corpus(std::vector<SampleRecord> records, std::vector<std::vector<double>> image,
                   std::vector<std::vector<double>> text) {
  Corpus c;
  c.records = std::move(records);
  const std::size_t n = image.size();
  const std::size_t d = n ? image[0].size() : 0;
  c.embeddings.n = n;
  c.embeddings.d = d;
  c.embeddings.image = DenseMatrix(n, d);
  c.embeddings.text = DenseMatrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = unit(image[i]);
    const auto b = unit(text[i]);
    std::copy(a.begin(), a.end(), c.embeddings.image.row(i).begin());
    std::copy(b.begin(), b.end(), c.embeddings.text.row(i).begin());
  }
  return c;
}

SynthSpec small_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n = 400;
  s.d = 16;
  s.clusters = 4;
  s.exact_duplicates = 8;
  s.near_duplicates = 8;
  s.paraphrase_duplicates = 8;
  s.corrupt_fraction = 0.2;
  s.validation_per_cluster = 10;
  s.tasks = {{"cls", TaskKind::kZeroShotClassification, {0, 1}, 0.0},
             {"ret", TaskKind::kRetrieval, {2}, 0.0}};
  s.seed = seed;
  return s;
}

std::filesystem::path write_small_run(const std::filesystem::path& dir, std::uint64_t seed,
                                      const std::string& extra_json) {
  const auto synth = generate_corpus(small_spec(seed));
  const auto paths = write_synth(synth, dir / "data");
  nlohmann::json cfg = {
      {"schema_version", 1},
      {"seed", seed},
      {"inputs",
       {{"records", "data/records.jsonl"},
        {"embeddings", "data/embeddings.tdsemb"},
        {"tasks", "data/tasks.json"}}},
      {"quality", {{"epochs", 3}, {"true_set_size", 60}}},
      {"diversity", {{"n_clusters", 4}}},
      {"fdo", {{"iterations", 3}}},
      {"proxy", {{"learning_rate", 0.005}, {"samples_budget", 256}, {"batch_size", 64}}},
  };
  cfg.merge_patch(nlohmann::json::parse(extra_json));
  const auto path = dir / "config.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

}  // namespace tads::testing

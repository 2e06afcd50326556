#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tads/corpus.hpp"
#include "tads/synth.hpp"

namespace tads::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

SampleRecord make_record(std::string id, std::string caption, std::size_t embedding_index);

// Corpus whose i-th record uses embedding row i. Rows are normalized.
Corpus make_corpus(std::vector<SampleRecord> records, std::vector<std::vector<double>> image,
                   std::vector<std::vector<double>> text);

std::vector<double> unit(std::vector<double> v);

// Small two-task SynthSpec used by the pipeline and CLI tests.
SynthSpec small_spec(std::uint64_t seed);

// Writes a pipeline config next to a synthetic corpus in `dir` and returns
// its path. `extra` is merged into the document.
std::filesystem::path write_small_run(const std::filesystem::path& dir, std::uint64_t seed,
                                      const std::string& extra_json = "{}");

}  // namespace tads::testing

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tads/matrix.hpp"

namespace tads {

// Names of the precomputed perception-operator fields a record may carry.
inline constexpr const char* kOperatorFieldNames[] = {
    "blur_score",          "ocr_region_ratio",         "lang_confidence",
    "concreteness",        "flipped_consistency",      "grounding_box_count_norm",
    "grounding_confidence",
};

bool is_operator_field(std::string_view name) noexcept;

// One image-text pair. Embeddings live in the EmbeddingBlock at embedding_index.
struct SampleRecord {
  std::string id;
  std::optional<std::string> url;
  std::optional<std::string> content_hash;  // 64 lowercase hex characters
  std::optional<std::uint32_t> width_px;
  std::optional<std::uint32_t> height_px;
  std::string caption;
  std::optional<std::string> ocr_text;
  std::size_t embedding_index = 0;
  std::map<std::string, std::optional<double>> operator_fields;
  // Text-encoder embedding of ocr_text, when available.
  std::optional<std::vector<double>> ocr_embedding;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct EmbeddingBlock {
  std::size_t n = 0;
  std::size_t d = 0;
  DenseMatrix image;  // n x d, unit rows
  DenseMatrix text;   // n x d, unit rows

  friend bool operator==(const EmbeddingBlock&, const EmbeddingBlock&) = default;
};

struct CorpusManifest {
  std::string corpus_id;
  std::size_t record_count = 0;
  std::size_t embedding_dim = 0;
  std::vector<std::string> source_paths;
  std::string records_sha256;
  std::string embeddings_sha256;
  // SHA-256 over both file digests; validates the pair as a unit.
  std::string checksum;
  std::string created_at;
};

struct Corpus {
  std::vector<SampleRecord> records;
  EmbeddingBlock embeddings;
  CorpusManifest manifest;

  std::span<const double> image_embedding(std::size_t record) const {
    return embeddings.image.row(records[record].embedding_index);
  }
  std::span<const double> text_embedding(std::size_t record) const {
    return embeddings.text.row(records[record].embedding_index);
  }
};

inline constexpr double kUnitNormTolerance = 1e-3;

// Reads and validates a record file plus embedding file.
//   CorpusMismatch  record count differs from embedding rows, or rows reused
//   ParseError      malformed line (message carries the line number) or
//                   duplicate id (message names it)
//   NormError       an embedding row is not unit norm within 1e-3
Corpus ingest(const std::filesystem::path& record_path,
              const std::filesystem::path& embedding_path);

std::vector<SampleRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, std::span<const SampleRecord> records);
nlohmann::json record_to_json(const SampleRecord& record);
SampleRecord record_from_json(const nlohmann::json& j);

// Embedding file: "TADSEMB1", u32 n, u32 d, then n*d little-endian f32 for
// the image block followed by n*d for the text block. A file holding a
// single block (prototype sets) is read by read_text_block.
EmbeddingBlock read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingBlock& block);
DenseMatrix read_text_block(const std::filesystem::path& path);
void write_text_block(const std::filesystem::path& path, const DenseMatrix& text);

// Throws NormError naming the first row whose L2 norm is off by more than
// kUnitNormTolerance.
void check_unit_rows(const DenseMatrix& m, std::string_view what);

CorpusManifest build_manifest(const std::filesystem::path& record_path,
                              const std::filesystem::path& embedding_path,
                              std::size_t record_count, std::size_t embedding_dim);
nlohmann::json manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const nlohmann::json& j);

// [z_I ; z_T] for embedding row i. Throws IndexError when i >= n.
std::vector<double> joint_embedding(const EmbeddingBlock& block, std::size_t i);
// Joint embeddings for the listed records, one per row.
DenseMatrix joint_matrix(const Corpus& corpus, std::span<const std::size_t> records);

// cos(z_I, z_T) for embedding row i.
double alignment_score(const EmbeddingBlock& block, std::size_t i);

}  // namespace tads

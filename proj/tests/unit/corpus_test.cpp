#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "tads/checksum.hpp"
#include "tads/corpus.hpp"
#include "tads/error.hpp"

namespace tads {
namespace {

using testing::TempDir;

Corpus three_pairs() {
  auto r0 = testing::make_record("a", "a red bus", 0);
  r0.url = "http://x/a.jpg";
  r0.content_hash = std::string(64, 'a');
  r0.width_px = 640;
  r0.height_px = 480;
  r0.operator_fields["blur_score"] = 0.25;
  r0.operator_fields["lang_confidence"] = std::nullopt;
  auto r1 = testing::make_record("b", "two cats", 1);
  r1.ocr_text = "STOP";
  r1.ocr_embedding = std::vector<double>{1.0, 0.0, 0.0};
  auto r2 = testing::make_record("c", "", 2);
  return testing::make_corpus({r0, r1, r2}, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
                              {{1, 0, 0}, {0, 0.6, 0.8}, {1, 0, 0}});
}

void write_corpus(const TempDir& dir, const Corpus& c) {
  write_records(dir / "r.jsonl", c.records);
  write_embeddings(dir / "e.tdsemb", c.embeddings);
}

TEST(Corpus, WriteThenIngestRoundTrips) {
  TempDir dir;
  const auto c = three_pairs();
  write_corpus(dir, c);
  const auto back = ingest(dir / "r.jsonl", dir / "e.tdsemb");
  EXPECT_EQ(back.records, c.records);
  ASSERT_EQ(back.embeddings.n, 3u);
  ASSERT_EQ(back.embeddings.d, 3u);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(back.embeddings.text.data()[i], static_cast<double>(static_cast<float>(c.embeddings.text.data()[i])));
  }
  EXPECT_EQ(back.manifest.record_count, 3u);
  EXPECT_EQ(back.manifest.embedding_dim, 3u);
  EXPECT_EQ(back.manifest.records_sha256, sha256_file(dir / "r.jsonl"));
  EXPECT_EQ(back.manifest.embeddings_sha256, sha256_file(dir / "e.tdsemb"));
  EXPECT_EQ(back.manifest.checksum.size(), 64u);
  const auto m = manifest_from_json(manifest_to_json(back.manifest));
  EXPECT_EQ(m.checksum, back.manifest.checksum);
  EXPECT_EQ(m.source_paths, back.manifest.source_paths);
}

TEST(Corpus, RecordCountMismatch) {
  TempDir dir;
  auto c = three_pairs();
  write_embeddings(dir / "e.tdsemb", c.embeddings);
  c.records.pop_back();
  write_records(dir / "r.jsonl", c.records);
  EXPECT_THROW(ingest(dir / "r.jsonl", dir / "e.tdsemb"), CorpusMismatch);
}

TEST(Corpus, ReusedEmbeddingRow) {
  TempDir dir;
  auto c = three_pairs();
  c.records[2].embedding_index = 0;
  write_corpus(dir, c);
  EXPECT_THROW(ingest(dir / "r.jsonl", dir / "e.tdsemb"), CorpusMismatch);
}

TEST(Corpus, DuplicateIdNamesTheId) {
  TempDir dir;
  auto c = three_pairs();
  c.records[2].id = "a";
  write_corpus(dir, c);
  try {
    ingest(dir / "r.jsonl", dir / "e.tdsemb");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos);
  }
}

TEST(Corpus, MalformedLineReportsLineNumber) {
  TempDir dir;
  std::ofstream(dir / "r.jsonl") << R"({"id":"a","caption":"x","embedding_index":0})" << "\n{oops\n";
  try {
    read_records(dir / "r.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(Corpus, RejectsUnknownAndInvalidFields) {
  EXPECT_THROW(record_from_json(nlohmann::json::parse(
                   R"({"id":"a","caption":"x","embedding_index":0,"colour":1})")),
               ParseError);
  EXPECT_THROW(record_from_json(nlohmann::json::parse(
                   R"({"id":"a","caption":"x","embedding_index":0,"content_hash":"ABC"})")),
               ParseError);
  EXPECT_THROW(record_from_json(nlohmann::json::parse(
                   R"({"id":"a","caption":"x","embedding_index":0,"operator_fields":{"blur_score":1.5}})")),
               ParseError);
  EXPECT_THROW(record_from_json(nlohmann::json::parse(R"({"caption":"x","embedding_index":0})")),
               ParseError);
}

TEST(Corpus, NonUnitRowIsRejected) {
  TempDir dir;
  auto c = three_pairs();
  c.embeddings.image(1, 0) = 0.0;
  c.embeddings.image(1, 1) = 0.0;
  write_corpus(dir, c);
  try {
    ingest(dir / "r.jsonl", dir / "e.tdsemb");
    FAIL() << "expected NormError";
  } catch (const NormError& e) {
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
  DenseMatrix ok(1, 2, std::vector<double>{0.6, 0.8005});
  EXPECT_NO_THROW(check_unit_rows(ok, "m"));
  DenseMatrix bad(1, 2, std::vector<double>{0.6, 0.802});
  EXPECT_THROW(check_unit_rows(bad, "m"), NormError);
}

TEST(Corpus, TruncatedEmbeddingFile) {
  TempDir dir;
  const auto c = three_pairs();
  write_embeddings(dir / "e.tdsemb", c.embeddings);
  auto bytes = read_file(dir / "e.tdsemb");
  write_file_atomic(dir / "e.tdsemb", bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(read_embeddings(dir / "e.tdsemb"), ParseError);
  write_file_atomic(dir / "e.tdsemb", "GARBAGE!");
  EXPECT_THROW(read_embeddings(dir / "e.tdsemb"), ParseError);
}

TEST(Corpus, TextBlockRoundTrip) {
  TempDir dir;
  DenseMatrix m(2, 2, std::vector<double>{1, 0, 0, 1});
  write_text_block(dir / "p.tdsemb", m);
  EXPECT_EQ(read_text_block(dir / "p.tdsemb"), m);
}

TEST(Corpus, JointEmbeddingAndAlignment) {
  const auto c = three_pairs();
  const auto j = joint_embedding(c.embeddings, 1);
  const std::vector<double> expect{0, 1, 0, 0, 0.6, 0.8};
  ASSERT_EQ(j.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(j[i], expect[i], 1e-15);
  EXPECT_DOUBLE_EQ(alignment_score(c.embeddings, 0), 1.0);
  EXPECT_NEAR(alignment_score(c.embeddings, 1), 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(alignment_score(c.embeddings, 2), 0.0);
  EXPECT_THROW(joint_embedding(c.embeddings, 3), IndexError);
  EXPECT_THROW(alignment_score(c.embeddings, 3), IndexError);
  const std::size_t pick[] = {2, 0};
  const auto jm = joint_matrix(c, pick);
  ASSERT_EQ(jm.rows(), 2u);
  ASSERT_EQ(jm.cols(), 6u);
  EXPECT_EQ(jm(0, 2), 1.0);
  EXPECT_EQ(jm(1, 3), 1.0);
}

}  // namespace
}  // namespace tads

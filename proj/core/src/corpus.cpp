#include "tads/corpus.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "tads/checksum.hpp"
#include "tads/error.hpp"

namespace tads {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kEmbeddingMagic[8] = {'T', 'A', 'D', 'S', 'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderBytes = 16;

const std::set<std::string, std::less<>> kRecordKeys = {
    "id",      "url",      "content_hash",    "width_px",         "height_px",
    "caption", "ocr_text", "embedding_index", "operator_fields", "ocr_embedding",
};

bool is_hex64(const std::string& s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_block(std::string& out, const DenseMatrix& m) {
  for (double v : m.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    put_u32(out, bits);
  }
}

std::uint32_t get_u32(const std::string& bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  return v;
}

DenseMatrix get_block(const std::string& bytes, std::size_t pos, std::size_t n, std::size_t d) {
  DenseMatrix m(n, d);
  auto data = m.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, pos + 4 * i)));
  }
  return m;
}

struct Header {
  std::size_t n;
  std::size_t d;
  std::size_t blocks;
};

Header read_header(const std::string& bytes, const fs::path& path) {
  if (bytes.size() < kHeaderBytes ||
      std::memcmp(bytes.data(), kEmbeddingMagic, sizeof(kEmbeddingMagic)) != 0) {
    throw ParseError(path.string() + ": not a TADSEMB1 embedding file");
  }
  const std::size_t n = get_u32(bytes, 8);
  const std::size_t d = get_u32(bytes, 12);
  const std::size_t block_bytes = n * d * 4;
  const std::size_t payload = bytes.size() - kHeaderBytes;
  if (payload == 2 * block_bytes) return {n, d, 2};
  if (payload == block_bytes) return {n, d, 1};
  throw ParseError(path.string() + ": payload of " + std::to_string(payload) +
                   " bytes does not match n=" + std::to_string(n) + " d=" + std::to_string(d));
}

std::string format_utc(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// SOURCE_DATE_EPOCH when set; otherwise the newest source modification time.
// Either way the stamp is a function of the inputs, not of when ingest ran.
std::string creation_stamp(std::initializer_list<fs::path> sources) {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    return format_utc(static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10)));
  }
  std::time_t newest = 0;
  for (const auto& p : sources) {
    const auto ftime = fs::last_write_time(p);
    const auto sys = std::chrono::time_point_cast<std::chrono::seconds>(
        ftime - fs::file_time_type::clock::now() + std::chrono::system_clock::now());
    newest = std::max(newest, std::chrono::system_clock::to_time_t(sys));
  }
  return format_utc(newest);
}

}  // namespace

bool is_operator_field(std::string_view name) noexcept {
  return std::any_of(std::begin(kOperatorFieldNames), std::end(kOperatorFieldNames),
                     [&](const char* f) { return name == f; });
}

json record_to_json(const SampleRecord& r) {
  json j;
  j["id"] = r.id;
  j["url"] = r.url ? json(*r.url) : json(nullptr);
  j["content_hash"] = r.content_hash ? json(*r.content_hash) : json(nullptr);
  j["width_px"] = r.width_px ? json(*r.width_px) : json(nullptr);
  j["height_px"] = r.height_px ? json(*r.height_px) : json(nullptr);
  j["caption"] = r.caption;
  j["ocr_text"] = r.ocr_text ? json(*r.ocr_text) : json(nullptr);
  j["embedding_index"] = r.embedding_index;
  json fields = json::object();
  for (const auto& [name, value] : r.operator_fields) {
    fields[name] = value ? json(*value) : json(nullptr);
  }
  j["operator_fields"] = std::move(fields);
  if (r.ocr_embedding) j["ocr_embedding"] = *r.ocr_embedding;
  return j;
}

SampleRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  for (const auto& item : j.items()) {
    if (!kRecordKeys.contains(item.key())) throw ParseError("unknown field '" + item.key() + "'");
  }
  for (const char* key : {"id", "caption", "embedding_index"}) {
    if (!j.contains(key) || j[key].is_null()) {
      throw ParseError(std::string("missing required field '") + key + "'");
    }
  }
  SampleRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.url = optional_field<std::string>(j, "url");
    r.content_hash = optional_field<std::string>(j, "content_hash");
    r.width_px = optional_field<std::uint32_t>(j, "width_px");
    r.height_px = optional_field<std::uint32_t>(j, "height_px");
    r.caption = j.at("caption").get<std::string>();
    r.ocr_text = optional_field<std::string>(j, "ocr_text");
    r.embedding_index = j.at("embedding_index").get<std::size_t>();
    if (auto it = j.find("operator_fields"); it != j.end() && !it->is_null()) {
      if (!it->is_object()) throw ParseError("operator_fields must be an object");
      for (const auto& item : it->items()) {
        if (!is_operator_field(item.key())) {
          throw ParseError("unknown operator field '" + item.key() + "'");
        }
        if (item.value().is_null()) {
          r.operator_fields[item.key()] = std::nullopt;
          continue;
        }
        const double v = item.value().get<double>();
        if (!(v >= 0.0 && v <= 1.0)) {
          throw ParseError("operator field '" + item.key() + "' outside [0,1]");
        }
        r.operator_fields[item.key()] = v;
      }
    }
    r.ocr_embedding = optional_field<std::vector<double>>(j, "ocr_embedding");
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
  if (r.id.empty()) throw ParseError("empty id");
  if (r.content_hash && !is_hex64(*r.content_hash)) {
    throw ParseError("content_hash must be 64 lowercase hex characters");
  }
  if ((r.width_px && *r.width_px == 0) || (r.height_px && *r.height_px == 0)) {
    throw ParseError("width_px/height_px must be at least 1");
  }
  return r;
}

std::vector<SampleRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SampleRecord> records;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + e.what());
    }
    SampleRecord r;
    try {
      r = record_from_json(j);
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    }
    if (!ids.insert(r.id).second) throw ParseError(where + "duplicate id '" + r.id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

void write_records(const fs::path& path, std::span<const SampleRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

void check_unit_rows(const DenseMatrix& m, std::string_view what) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double norm = l2_norm(m.row(i));
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitNormTolerance) {
      std::ostringstream msg;
      msg << what << " row " << i << " has norm " << norm;
      throw NormError(msg.str());
    }
  }
}

EmbeddingBlock read_embeddings(const fs::path& path) {
  const std::string bytes = read_file(path);
  const Header h = read_header(bytes, path);
  if (h.blocks != 2) throw ParseError(path.string() + ": expected image and text blocks");
  EmbeddingBlock block;
  block.n = h.n;
  block.d = h.d;
  block.image = get_block(bytes, kHeaderBytes, h.n, h.d);
  block.text = get_block(bytes, kHeaderBytes + h.n * h.d * 4, h.n, h.d);
  return block;
}

void write_embeddings(const fs::path& path, const EmbeddingBlock& block) {
  if (block.image.rows() != block.n || block.text.rows() != block.n ||
      block.image.cols() != block.d || block.text.cols() != block.d) {
    throw ShapeError("embedding block dimensions are inconsistent");
  }
  std::string out(kEmbeddingMagic, sizeof(kEmbeddingMagic));
  put_u32(out, static_cast<std::uint32_t>(block.n));
  put_u32(out, static_cast<std::uint32_t>(block.d));
  put_block(out, block.image);
  put_block(out, block.text);
  write_file_atomic(path, out);
}

DenseMatrix read_text_block(const fs::path& path) {
  const std::string bytes = read_file(path);
  const Header h = read_header(bytes, path);
  const std::size_t offset = kHeaderBytes + (h.blocks == 2 ? h.n * h.d * 4 : 0);
  return get_block(bytes, offset, h.n, h.d);
}

void write_text_block(const fs::path& path, const DenseMatrix& text) {
  std::string out(kEmbeddingMagic, sizeof(kEmbeddingMagic));
  put_u32(out, static_cast<std::uint32_t>(text.rows()));
  put_u32(out, static_cast<std::uint32_t>(text.cols()));
  put_block(out, text);
  write_file_atomic(path, out);
}

CorpusManifest build_manifest(const fs::path& record_path, const fs::path& embedding_path,
                              std::size_t record_count, std::size_t embedding_dim) {
  CorpusManifest m;
  m.record_count = record_count;
  m.embedding_dim = embedding_dim;
  m.source_paths = {record_path.string(), embedding_path.string()};
  m.records_sha256 = sha256_file(record_path);
  m.embeddings_sha256 = sha256_file(embedding_path);
  m.checksum = sha256_hex(m.records_sha256 + m.embeddings_sha256);
  m.corpus_id = "corpus-" + m.checksum.substr(0, 12);
  m.created_at = creation_stamp({record_path, embedding_path});
  return m;
}

json manifest_to_json(const CorpusManifest& m) {
  return json{{"corpus_id", m.corpus_id},
              {"record_count", m.record_count},
              {"embedding_dim", m.embedding_dim},
              {"source_paths", m.source_paths},
              {"records_sha256", m.records_sha256},
              {"embeddings_sha256", m.embeddings_sha256},
              {"checksum", m.checksum},
              {"created_at", m.created_at}};
}

CorpusManifest manifest_from_json(const json& j) {
  CorpusManifest m;
  try {
    m.corpus_id = j.at("corpus_id").get<std::string>();
    m.record_count = j.at("record_count").get<std::size_t>();
    m.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    m.source_paths = j.at("source_paths").get<std::vector<std::string>>();
    m.records_sha256 = j.at("records_sha256").get<std::string>();
    m.embeddings_sha256 = j.at("embeddings_sha256").get<std::string>();
    m.checksum = j.at("checksum").get<std::string>();
    m.created_at = j.at("created_at").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("corpus manifest: ") + e.what());
  }
  return m;
}

Corpus ingest(const fs::path& record_path, const fs::path& embedding_path) {
  Corpus corpus;
  corpus.records = read_records(record_path);
  corpus.embeddings = read_embeddings(embedding_path);
  const auto& block = corpus.embeddings;
  if (corpus.records.size() != block.n) {
    throw CorpusMismatch(std::to_string(corpus.records.size()) + " records but " +
                         std::to_string(block.n) + " embedding rows");
  }
  std::vector<bool> used(block.n, false);
  for (const auto& r : corpus.records) {
    if (r.embedding_index >= block.n) {
      throw CorpusMismatch("record '" + r.id + "' embedding_index " +
                           std::to_string(r.embedding_index) + " out of range");
    }
    if (used[r.embedding_index]) {
      throw CorpusMismatch("embedding row " + std::to_string(r.embedding_index) +
                           " referenced twice");
    }
    used[r.embedding_index] = true;
    if (r.ocr_embedding && r.ocr_embedding->size() != block.d) {
      throw ShapeError("record '" + r.id + "' ocr_embedding has wrong dimension");
    }
  }
  check_unit_rows(block.image, "image embedding");
  check_unit_rows(block.text, "text embedding");
  corpus.manifest = build_manifest(record_path, embedding_path, corpus.records.size(), block.d);
  return corpus;
}

std::vector<double> joint_embedding(const EmbeddingBlock& block, std::size_t i) {
  if (i >= block.n) {
    throw IndexError("embedding row " + std::to_string(i) + " >= " + std::to_string(block.n));
  }
  std::vector<double> out;
  out.reserve(2 * block.d);
  const auto img = block.image.row(i);
  const auto txt = block.text.row(i);
  out.insert(out.end(), img.begin(), img.end());
  out.insert(out.end(), txt.begin(), txt.end());
  return out;
}

DenseMatrix joint_matrix(const Corpus& corpus, std::span<const std::size_t> records) {
  const std::size_t d = corpus.embeddings.d;
  DenseMatrix out(records.size(), 2 * d);
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto img = corpus.image_embedding(records[r]);
    const auto txt = corpus.text_embedding(records[r]);
    auto row = out.row(r);
    std::copy(img.begin(), img.end(), row.begin());
    std::copy(txt.begin(), txt.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return out;
}

double alignment_score(const EmbeddingBlock& block, std::size_t i) {
  if (i >= block.n) {
    throw IndexError("embedding row " + std::to_string(i) + " >= " + std::to_string(block.n));
  }
  return cosine_similarity(block.image.row(i), block.text.row(i));
}

}  // namespace tads

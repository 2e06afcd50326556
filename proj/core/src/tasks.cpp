#include "tads/tasks.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tads/checksum.hpp"
#include "tads/error.hpp"

namespace tads {
namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InvalidConfig(where + ": missing key '" + key + "'");
  return *it;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw InvalidConfig(where + "." + key + ": unknown key");
  }
}

DenseMatrix renormalized(DenseMatrix m, const std::string& what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    if (l2_norm(row) == 0.0) throw NormError(what + ": prototype row " + std::to_string(r) + " is zero");
    normalize_in_place(row);
  }
  return m;
}

}  // namespace

std::string_view task_kind_name(TaskKind kind) noexcept {
  return kind == TaskKind::kRetrieval ? "retrieval" : "zeroshot_classification";
}

std::optional<TaskKind> task_kind_from_name(std::string_view name) noexcept {
  if (name == "zeroshot_classification") return TaskKind::kZeroShotClassification;
  if (name == "retrieval") return TaskKind::kRetrieval;
  return std::nullopt;
}

std::vector<double> TaskSuite::weights() const {
  std::vector<double> w;
  w.reserve(supports.size());
  for (const auto& s : supports) w.push_back(s.weight);
  return w;
}

void validate_task_weights(std::span<const double> weights) {
  if (weights.empty()) throw InvalidConfig("at least one task is required");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidConfig("task weights must be finite and >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidConfig("task weights sum to " + std::to_string(sum) + ", expected 1");
  }
}

TaskSuite load_task_suite(const std::filesystem::path& manifest_path) {
  json doc;
  try {
    doc = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  const std::string where = manifest_path.string();
  if (!doc.is_object()) throw InvalidConfig(where + ": expected an object");
  reject_unknown(doc, {"tasks"}, "tasks");
  const json& tasks = require(doc, "tasks", where);
  if (!tasks.is_array() || tasks.empty()) throw InvalidConfig(where + ": 'tasks' must be a non-empty array");
  const auto base = manifest_path.parent_path();

  TaskSuite suite;
  std::set<std::string> seen;
  bool any_weight = false;
  bool all_weight = true;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const json& spec = tasks[t];
    const std::string tw = "tasks[" + std::to_string(t) + "]";
    if (!spec.is_object()) throw InvalidConfig(tw + ": expected an object");
    reject_unknown(spec, {"id", "kind", "weight", "prototypes", "validation", "validation_index"}, tw);

    TaskSupportSet support;
    TaskEvaluator eval;
    try {
      support.task_id = require(spec, "id", tw).get<std::string>();
      const auto kind = task_kind_from_name(require(spec, "kind", tw).get<std::string>());
      if (!kind) throw InvalidConfig(tw + ".kind: expected zeroshot_classification or retrieval");
      support.kind = *kind;
      if (spec.contains("weight")) {
        support.weight = spec["weight"].get<double>();
        any_weight = true;
      } else {
        all_weight = false;
      }
      support.prototypes = renormalized(
          read_text_block(resolve(base, require(spec, "prototypes", tw).get<std::string>())),
          support.task_id);
      if (support.prototypes.rows() == 0) throw InvalidConfig(tw + ": prototype set is empty");

      eval.task_id = support.task_id;
      eval.kind = support.kind;
      eval.class_prototypes = support.prototypes;
      const auto block = read_embeddings(resolve(base, require(spec, "validation", tw).get<std::string>()));
      eval.image = block.image;
      eval.text = block.text;

      const auto index_path = resolve(base, require(spec, "validation_index", tw).get<std::string>());
      std::istringstream lines(read_file(index_path));
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(lines, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json row;
        try {
          row = json::parse(line);
          eval.ids.push_back(row.at("id").get<std::string>());
          if (eval.kind == TaskKind::kZeroShotClassification) {
            const auto label = row.at("label").get<std::int64_t>();
            if (label < 0 || static_cast<std::size_t>(label) >= support.prototypes.rows()) {
              throw InvalidConfig(index_path.string() + ":" + std::to_string(line_no) +
                                  ": label out of range");
            }
            eval.labels.push_back(static_cast<std::size_t>(label));
          }
        } catch (const json::exception& e) {
          throw ParseError(index_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
      if (eval.ids.size() != block.n) {
        throw CorpusMismatch(index_path.string() + ": " + std::to_string(eval.ids.size()) +
                             " index rows for " + std::to_string(block.n) + " embedding rows");
      }
      if (block.d != support.prototypes.cols()) {
        throw ShapeError(tw + ": validation dim differs from prototype dim");
      }
    } catch (const json::exception& e) {
      throw InvalidConfig(tw + ": " + e.what());
    }
    if (!seen.insert(support.task_id).second) throw InvalidConfig(tw + ": duplicate task id '" + support.task_id + "'");
    suite.supports.push_back(std::move(support));
    suite.evaluators.push_back(std::move(eval));
  }
  if (!any_weight) {
    for (auto& s : suite.supports) s.weight = 1.0 / static_cast<double>(suite.supports.size());
  } else if (!all_weight) {
    throw InvalidConfig(where + ": either every task or no task sets a weight");
  }
  validate_task_weights(suite.weights());
  return suite;
}

void write_task_suite(const std::filesystem::path& manifest_path, const TaskSuite& suite) {
  if (suite.supports.size() != suite.evaluators.size()) throw ShapeError("one evaluator per task required");
  const auto base = manifest_path.parent_path();
  json tasks = json::array();
  for (std::size_t t = 0; t < suite.size(); ++t) {
    const auto& s = suite.supports[t];
    const auto& e = suite.evaluators[t];
    const std::string stem = s.task_id;
    write_text_block(base / (stem + ".protos.tdsemb"), s.prototypes);
    write_embeddings(base / (stem + ".val.tdsemb"), EmbeddingBlock{e.image.rows(), e.image.cols(), e.image, e.text});
    std::string index;
    for (std::size_t i = 0; i < e.ids.size(); ++i) {
      json row = {{"id", e.ids[i]}};
      if (e.kind == TaskKind::kZeroShotClassification) row["label"] = e.labels.at(i);
      index += row.dump() + "\n";
    }
    write_file_atomic(base / (stem + ".val.jsonl"), index);
    tasks.push_back({{"id", s.task_id},
                     {"kind", std::string(task_kind_name(s.kind))},
                     {"weight", s.weight},
                     {"prototypes", stem + ".protos.tdsemb"},
                     {"validation", stem + ".val.tdsemb"},
                     {"validation_index", stem + ".val.jsonl"}});
  }
  write_file_atomic(manifest_path, json{{"tasks", tasks}}.dump(2) + "\n");
}

void check_disjoint(const TaskSuite& suite, std::span<const SampleRecord> pool) {
  std::set<std::string_view> ids;
  for (const auto& r : pool) ids.insert(r.id);
  for (const auto& e : suite.evaluators) {
    for (const auto& id : e.ids) {
      if (ids.count(id)) {
        throw InvalidConfig("task '" + e.task_id + "': validation id '" + id + "' is also in the pool");
      }
    }
  }
}

}  // namespace tads

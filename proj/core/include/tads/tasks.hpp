#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tads/corpus.hpp"
#include "tads/matrix.hpp"

namespace tads {

enum class TaskKind { kZeroShotClassification, kRetrieval };

std::string_view task_kind_name(TaskKind kind) noexcept;
std::optional<TaskKind> task_kind_from_name(std::string_view name) noexcept;

// Prototype embeddings describing one downstream task. Rows are unit norm.
struct TaskSupportSet {
  std::string task_id;
  DenseMatrix prototypes;
  double weight = 1.0;
  TaskKind kind = TaskKind::kZeroShotClassification;
};

// Held-out validation data for one task.
//
// Zero-shot classification scores each validation image against the task's
// prototypes, one prototype per class; labels index prototype rows.
// Retrieval pairs validation image i with validation text i.
struct TaskEvaluator {
  std::string task_id;
  TaskKind kind = TaskKind::kZeroShotClassification;
  DenseMatrix class_prototypes;
  std::vector<std::string> ids;
  DenseMatrix image;
  DenseMatrix text;
  std::vector<std::size_t> labels;  // classification only
};

struct TaskSuite {
  std::vector<TaskSupportSet> supports;
  std::vector<TaskEvaluator> evaluators;

  std::size_t size() const noexcept { return supports.size(); }
  std::vector<double> weights() const;
};

// Task manifest (JSON):
//
//   {"tasks": [{"id": "t1", "kind": "zeroshot_classification", "weight": 0.5,
//               "prototypes": "t1.protos.tdsemb",
//               "validation": "t1.val.tdsemb",
//               "validation_index": "t1.val.jsonl"}]}
//
// Paths are relative to the manifest. The validation index holds one JSON
// object per validation row: {"id": ...} plus "label" for classification.
// Missing weights default to 1/K; weights must sum to 1 within 1e-9.
// Prototypes are re-normalized on load.
TaskSuite load_task_suite(const std::filesystem::path& manifest_path);
void write_task_suite(const std::filesystem::path& manifest_path, const TaskSuite& suite);

// Throws InvalidConfig if any validation id also names a pool record.
void check_disjoint(const TaskSuite& suite, std::span<const SampleRecord> pool);

void validate_task_weights(std::span<const double> weights);

}  // namespace tads

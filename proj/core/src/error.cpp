#include "tads/error.hpp"

#include <utility>

namespace tads {

std::string_view error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kNumericalDomain: return "NumericalDomain";
    case ErrorKind::kIndex: return "IndexError";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kNorm: return "NormError";
    case ErrorKind::kCorpusMismatch: return "CorpusMismatch";
    case ErrorKind::kDegenerateInput: return "DegenerateInput";
    case ErrorKind::kEmptySubset: return "EmptySubset";
    case ErrorKind::kDependency: return "DependencyError";
    case ErrorKind::kIo: return "IoError";
  }
  return "Error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
      kind_(kind) {}

DependencyError::DependencyError(std::string stage)
    : Error(ErrorKind::kDependency,
            "upstream stage '" + stage + "' has not completed"),
      stage_(std::move(stage)) {}

}  // namespace tads

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tads {

enum class ErrorKind {
  kInvalidConfig,
  kShape,
  kNumericalDomain,
  kIndex,
  kParse,
  kNorm,
  kCorpusMismatch,
  kDegenerateInput,
  kEmptySubset,
  kDependency,
  kIo,
};

std::string_view error_kind_name(ErrorKind kind) noexcept;

// Base of every error the engine raises. The kind selects the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define TADS_DEFINE_ERROR(Name, Kind)                                  \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

TADS_DEFINE_ERROR(InvalidConfig, ErrorKind::kInvalidConfig)
TADS_DEFINE_ERROR(ShapeError, ErrorKind::kShape)
TADS_DEFINE_ERROR(NumericalDomain, ErrorKind::kNumericalDomain)
TADS_DEFINE_ERROR(IndexError, ErrorKind::kIndex)
TADS_DEFINE_ERROR(ParseError, ErrorKind::kParse)
TADS_DEFINE_ERROR(NormError, ErrorKind::kNorm)
TADS_DEFINE_ERROR(CorpusMismatch, ErrorKind::kCorpusMismatch)
TADS_DEFINE_ERROR(DegenerateInput, ErrorKind::kDegenerateInput)
TADS_DEFINE_ERROR(EmptySubset, ErrorKind::kEmptySubset)
TADS_DEFINE_ERROR(IoError, ErrorKind::kIo)

#undef TADS_DEFINE_ERROR

// Raised when a stage runs before one of its upstream stages.
class DependencyError : public Error {
 public:
  explicit DependencyError(std::string stage);
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace tads

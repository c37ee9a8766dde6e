#pragma once

#include <stdexcept>
#include <string>

namespace yolopoint {

enum class ErrorCategory {
  Shape,
  Dimension,
  Validation,
  DegenerateGeometry,
  DegeneratePoint,
  Contract,
  UndefinedMetric,
  DegenerateFrame,
  Ingestion,
  Checkpoint,
  Divergence,
  Usage,
};

const char* category_name(ErrorCategory c);

// Base of every error thrown by the library. The category is carried so the
// CLI can print it and pick an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define YOLOPOINT_DEFINE_ERROR(Name, Cat)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorCategory::Cat, what) {} \
  };

YOLOPOINT_DEFINE_ERROR(ShapeError, Shape)
YOLOPOINT_DEFINE_ERROR(DimensionError, Dimension)
YOLOPOINT_DEFINE_ERROR(ValidationError, Validation)
YOLOPOINT_DEFINE_ERROR(DegenerateGeometryError, DegenerateGeometry)
YOLOPOINT_DEFINE_ERROR(DegeneratePointError, DegeneratePoint)
YOLOPOINT_DEFINE_ERROR(ContractError, Contract)
YOLOPOINT_DEFINE_ERROR(UndefinedMetricError, UndefinedMetric)
YOLOPOINT_DEFINE_ERROR(DegenerateFrameError, DegenerateFrame)
YOLOPOINT_DEFINE_ERROR(IngestionError, Ingestion)
YOLOPOINT_DEFINE_ERROR(CheckpointError, Checkpoint)
YOLOPOINT_DEFINE_ERROR(DivergenceError, Divergence)
YOLOPOINT_DEFINE_ERROR(UsageError, Usage)

#undef YOLOPOINT_DEFINE_ERROR

}  // namespace yolopoint

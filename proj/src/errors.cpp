#include "yolopoint/errors.hpp"

namespace yolopoint {

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Shape: return "shape error";
    case ErrorCategory::Dimension: return "dimension error";
    case ErrorCategory::Validation: return "validation error";
    case ErrorCategory::DegenerateGeometry: return "degenerate-geometry error";
    case ErrorCategory::DegeneratePoint: return "degenerate-point error";
    case ErrorCategory::Contract: return "contract error";
    case ErrorCategory::UndefinedMetric: return "undefined-metric error";
    case ErrorCategory::DegenerateFrame: return "degenerate-frame error";
    case ErrorCategory::Ingestion: return "ingestion error";
    case ErrorCategory::Checkpoint: return "checkpoint error";
    case ErrorCategory::Divergence: return "divergence error";
    case ErrorCategory::Usage: return "usage error";
  }
  return "error";
}

}  // namespace yolopoint

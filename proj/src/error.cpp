#include "nlinv/error.hpp"

namespace nlinv {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::DegenerateData: return "degenerate-data";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::TrainingDiverged: return "training-diverged";
    case ErrorKind::Format: return "format";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace nlinv

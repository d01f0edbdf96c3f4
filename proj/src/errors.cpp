#include "qxq/errors.hpp"

namespace qxq {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format: return "format";
    case ErrorKind::Range: return "range";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::State: return "state";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Io: return "io";
    case ErrorKind::Load: return "load";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace qxq

#pragma once

#include <stdexcept>
#include <string>

namespace echolab {

enum class ErrorKind {
  validation,
  parse,
  divergence,
  accuracy,
  instability,
  contour_unsafe,
  grid_mismatch,
  grid_coverage,
  bound_violation,
  incomplete_layer,
  stability_guard,
  insufficient_window,
  io,
  usage,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::parse: return "parse";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::accuracy: return "accuracy";
    case ErrorKind::instability: return "instability";
    case ErrorKind::contour_unsafe: return "contour_unsafe";
    case ErrorKind::grid_mismatch: return "grid_mismatch";
    case ErrorKind::grid_coverage: return "grid_coverage";
    case ErrorKind::bound_violation: return "bound_violation";
    case ErrorKind::incomplete_layer: return "incomplete_layer";
    case ErrorKind::stability_guard: return "stability_guard";
    case ErrorKind::insufficient_window: return "insufficient_window";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Config field or key the error refers to, empty if none.
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

}  // namespace echolab

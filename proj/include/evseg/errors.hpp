#pragma once

#include <stdexcept>
#include <string>

namespace evseg {

// Raster/field dimension mismatch between operands.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Mixing fields with different slice durations.
struct UnitError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Object region masks overlap (non-transparent objects must be disjoint).
struct MaskOverlapError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Fewer samples than a solver needs.
struct InsufficientSamples : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// RANSAC could not find a consensus model; callers skip the slice.
struct EstimationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An operation was invoked against its stated contract
// (e.g. building a mask from a rejected threshold decision).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed file content. `kind` discriminates the failure so tests and
// callers can tell a bad header from a short payload.
struct ParseError : std::runtime_error {
  enum class Kind {
    io,
    bad_magic,
    bad_version,
    bad_kind,
    bad_dtype,
    truncated,
    trailing_data,
    bad_value,
  };
  Kind kind;
  ParseError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Config file problems: unknown key, bad type, out-of-range value.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace evseg

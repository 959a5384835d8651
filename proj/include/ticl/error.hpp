#pragma once

#include <stdexcept>
#include <string>

namespace ticl {

/// Base class for every error thrown by the library. The CLI maps these to
/// exit code 1 and prints the message verbatim.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor extents do not line up (matmul inner dims, broadcast shapes, ...).
struct DimensionError : Error {
  using Error::Error;
};

/// An operation precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

/// Input exceeds a hard model cap (rows, attributes, classes). The message
/// names the divide-and-conquer strategy that lifts the cap.
struct CapacityError : Error {
  using Error::Error;
};

/// A non-finite value showed up where the contract requires finite ones.
struct NumericError : Error {
  using Error::Error;
};

/// Malformed CSV / metadata / weights file.
struct FormatError : Error {
  using Error::Error;
};

/// Dataset splitting could not satisfy its postconditions.
struct SplitError : Error {
  using Error::Error;
};

/// Synthetic task generation failed after the allowed resampling attempts.
struct TaskGenError : Error {
  using Error::Error;
};

/// Code matrix construction failed (duplicate rows after max retries).
struct CodecError : Error {
  using Error::Error;
};

/// A statistic was asked to run over a slice with failed cells.
struct StatisticError : Error {
  using Error::Error;
};

/// Linear system solve failed (singular matrix).
struct SolverError : Error {
  using Error::Error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

inline void check_dims(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace ticl

#pragma once

#include <stdexcept>
#include <string>

namespace snnd {

// Base for everything thrown on purpose. Each subclass maps to one CLI exit
// code, so keep the taxonomy small and pick the class by who has to fix the
// problem (caller code, config author, data producer).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes or dimensions that do not conform.
struct DimError : Error {
  using Error::Error;
};

// A function argument outside its documented domain (temperature <= 0, ...).
struct ParamError : Error {
  using Error::Error;
};

// Semantically invalid content: labels out of range, rows that are not a
// probability distribution, empty datasets.
struct DataError : Error {
  using Error::Error;
};

// Byte-level or text-level violations of a file format. Messages carry the
// offset or line that failed so producers can locate the problem.
struct FormatError : Error {
  using Error::Error;
};

// Bad run configuration: unknown keys, out-of-range values, incompatible
// combinations.
struct ConfigError : Error {
  using Error::Error;
};

// The caller invoked an API or CLI in an unsupported way.
struct UsageError : Error {
  using Error::Error;
};

// NaN/Inf or divergence detected during computation.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace snnd

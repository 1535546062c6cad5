#pragma once

#include <stdexcept>
#include <string>

namespace kgbo {

// Base for every failure the library reports. The subclasses map onto the
// service's HTTP status codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input: manifests, reports, configs, CSV files, unknown conditions.
struct SchemaError : Error {
  using Error::Error;
};

// A request conflicts with campaign state (duplicate condition, wrong phase).
struct ConflictError : Error {
  using Error::Error;
};

// Non-finite or out-of-range numeric value.
struct ValueError : Error {
  using Error::Error;
};

// Remote knowledge/predictor service failures (transport or response schema).
struct ProviderError : Error {
  using Error::Error;
};

// Every condition of the space has been observed or the round budget is spent.
struct ExhaustedError : Error {
  using Error::Error;
};

// Persisted state failed checksum, parse, or version checks.
struct CorruptStateError : Error {
  using Error::Error;
};

// Numerical failure that no amount of jitter could absorb.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace kgbo

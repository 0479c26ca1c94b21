#pragma once

#include <stdexcept>
#include <string>

namespace convit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimensionality mismatch between operands.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration value (hyperparameters, presets, geometry).
struct ConfigError : Error {
  using Error::Error;
};

// API contract violation (e.g. backward() on a non-scalar).
struct ContractError : Error {
  using Error::Error;
};

// Bounding box degenerate or outside the usable region.
struct BoxError : Error {
  using Error::Error;
};

// File system / stream failure.
struct IoError : Error {
  using Error::Error;
};

// Malformed file content (manifest, checkpoint, netpbm, JSON).
struct ParseError : Error {
  using Error::Error;
};

// Non-finite values where finiteness is required (training divergence).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace convit

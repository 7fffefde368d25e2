#pragma once

#include <stdexcept>
#include <string>

namespace dg {

// Base class for all library failures. Subclasses distinguish the contract
// that was violated so callers (and the CLI exit-code mapping) can tell
// usage problems from bad data.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch (volume dims, patch grids, tensor shapes).
struct GeometryError : Error {
  using Error::Error;
};

// Invalid values in otherwise well-formed inputs (non-finite voxels,
// missing labels, single-class training sets, ...).
struct DataError : Error {
  using Error::Error;
};

// Violations of an on-disk file format.
struct FormatError : Error {
  using Error::Error;
};

// Out-of-range or inconsistent parameters.
struct ParameterError : Error {
  using Error::Error;
};

// Violations of the cross-validation fold protocol.
struct ProtocolError : Error {
  using Error::Error;
};

// Non-finite intermediate values during numeric computation.
struct NumericError : Error {
  using Error::Error;
};

// Ill-posed metric evaluation (empty class, missing column, ...).
struct MetricError : Error {
  using Error::Error;
};

// Filesystem problems (missing file, short write).
struct IoError : Error {
  using Error::Error;
};

}  // namespace dg

#pragma once

#include <stdexcept>
#include <string>

namespace pdls {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument values (out-of-range scores, bad ranges, unknown names).
class InvalidInputError : public Error {
public:
  using Error::Error;
};

/// Tensor/layer dimension mismatches.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Inconsistent or malformed datasets, manifests and reports.
class DataError : public Error {
public:
  using Error::Error;
};

/// Training set lacks the label diversity required by the task.
class DegenerateLabelsError : public Error {
public:
  using Error::Error;
};

/// Final-label inference requested on a model without calibrated thresholds.
class MissingThresholdsError : public Error {
public:
  using Error::Error;
};

/// Consensus procedure needs the fourth/fifth review but none was supplied.
class IncompleteReviewError : public Error {
public:
  using Error::Error;
};

/// Model/embedding file failed magic, version or checksum validation.
class CorruptModelError : public Error {
public:
  using Error::Error;
};

/// Bad command line or config file: unknown keys, missing required flags,
/// malformed values. Maps to CLI exit code 1; everything above maps to 2.
class UsageError : public Error {
public:
  using Error::Error;
};

} // namespace pdls

#pragma once

#include <stdexcept>
#include <string>

namespace lesionforge {

/// Base class for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Grid geometry disagreement (dims/spacing) between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A stated precondition was violated (subset relations, value ranges, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// File or format problem while reading/writing volumes, manifests, records.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Dataset-level problem: inconsistent manifest entry, empty bank, ...
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad run configuration (CLI arguments, config values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A spatial transform left the lesion mask empty; caller should redraw.
class DegenerateTransformError : public Error {
 public:
  using Error::Error;
};

/// A placement produced an empty cropped support; caller should resample.
class PlacementError : public Error {
 public:
  using Error::Error;
};

/// Fast-marching could not seed a slice (mask covers the whole slice).
class SeedError : public Error {
 public:
  SeedError(const std::string& msg, int slice_index)
      : Error(msg), slice_index_(slice_index) {}
  int slice_index() const { return slice_index_; }

 private:
  int slice_index_;
};

}  // namespace lesionforge

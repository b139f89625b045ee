#pragma once

#include <stdexcept>
#include <string>

namespace cimage {

struct FileMissingError : std::runtime_error {
  explicit FileMissingError(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

struct InsufficientNonEdgesError : std::runtime_error {
  explicit InsufficientNonEdgesError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyTestSplitError : std::runtime_error {
  explicit EmptyTestSplitError(const std::string& what) : std::runtime_error(what) {}
};

struct InsufficientLabeledError : std::runtime_error {
  explicit InsufficientLabeledError(const std::string& what) : std::runtime_error(what) {}
};

struct DegeneratePartitionError : std::runtime_error {
  explicit DegeneratePartitionError(const std::string& what) : std::runtime_error(what) {}
};

// which context came out empty: "F1" or "F2"
struct EmptyContextError : std::runtime_error {
  std::string which;
  explicit EmptyContextError(std::string which_)
      : std::runtime_error("empty context " + which_), which(std::move(which_)) {}
};

struct SingularSystemError : std::runtime_error {
  explicit SingularSystemError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace cimage

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace stas {

// Input errors are caller mistakes (bad arguments, malformed files); runtime
// errors are aborts during an otherwise valid computation.
enum class ErrorKind { input, runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  virtual const char* name() const noexcept { return "error"; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::input, what) {}
  const char* name() const noexcept override { return "invalid_argument"; }
};

class DivisibilityError : public Error {
 public:
  explicit DivisibilityError(const std::string& what) : Error(ErrorKind::input, what) {}
  const char* name() const noexcept override { return "divisibility"; }
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what) : Error(ErrorKind::input, what) {}
  const char* name() const noexcept override { return "shape_mismatch"; }
};

class NonFiniteValue : public Error {
 public:
  explicit NonFiniteValue(const std::string& what) : Error(ErrorKind::input, what) {}
  const char* name() const noexcept override { return "non_finite"; }
};

class EmptyProfile : public Error {
 public:
  explicit EmptyProfile(const std::string& what) : Error(ErrorKind::input, what) {}
  const char* name() const noexcept override { return "empty_profile"; }
};

class UndefinedSimilarity : public Error {
 public:
  UndefinedSimilarity(const std::string& what, std::size_t pair)
      : Error(ErrorKind::input, what), pair_(pair) {}
  const char* name() const noexcept override { return "undefined_similarity"; }
  std::size_t pair() const noexcept { return pair_; }

 private:
  std::size_t pair_;
};

class MissingTopology : public Error {
 public:
  explicit MissingTopology(const std::string& what) : Error(ErrorKind::input, what) {}
  const char* name() const noexcept override { return "missing_topology"; }
};

class InconsistentMetadata : public Error {
 public:
  explicit InconsistentMetadata(const std::string& what) : Error(ErrorKind::input, what) {}
  const char* name() const noexcept override { return "inconsistent_metadata"; }
};

/// Raised by the sampler when an intermediate latent or prediction stops being finite.
class NumericalAbort : public Error {
 public:
  NumericalAbort(const std::string& what, std::size_t step)
      : Error(ErrorKind::runtime, what), step_(step) {}
  const char* name() const noexcept override { return "numerical_abort"; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::runtime, what) {}
  const char* name() const noexcept override { return "io"; }
};

}  // namespace stas

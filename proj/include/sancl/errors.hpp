// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sancl {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside an operation's domain (empty matrix, empty token list, NaN).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Vector too close to zero to normalize.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Hyperparameter ordering or range violated (alpha/beta, kappa, gamma).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Record content breaks a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A JSONL record could not be parsed against its schema.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A record points at an id that does not exist.
class ReferentialError : public Error {
 public:
  using Error::Error;
};

/// Binary file header and payload disagree, or payload is not finite.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Annotation spans that do not fit the review they annotate.
class AnnotationError : public Error {
 public:
  using Error::Error;
};

/// Configuration file or flag problems; the message carries the key path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint incompatible with the requested model (version or shape).
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Finite-difference check could not run (loss not reproducible).
class GradCheckError : public Error {
 public:
  using Error::Error;
};

}  // namespace sancl

#pragma once

#include <stdexcept>
#include <string>

namespace hilomix {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Value outside the mathematical domain of an operation (log of x <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input for which the operation is undefined, e.g. a zero-norm row in a
/// cosine similarity.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a precondition of the API.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Input data failed validation (CSV contents, labels, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A name in the input could not be resolved to a node.
class UnresolvedNodeError : public Error {
 public:
  using Error::Error;
};

/// Configuration is infeasible or malformed.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training or fitting produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given input (e.g. AUC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hilomix

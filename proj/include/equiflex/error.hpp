#pragma once

#include <stdexcept>
#include <string>

namespace equiflex {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON, CSV, conic text dump).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a model invariant; the message names the element.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Misuse of a program builder (duplicate names, inverted bounds, sealed program).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A solve that must succeed turned out infeasible.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Iteration or node limit reached before a proven answer.
class SolverLimitError : public Error {
 public:
  using Error::Error;
};

}  // namespace equiflex

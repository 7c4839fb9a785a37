#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace spinrelax {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameters : public Error {
 public:
  using Error::Error;
};

/// The rate generator has a stationary space of dimension > 1.
class AmbiguousSteadyState : public Error {
 public:
  using Error::Error;
};

/// Grid too coarse for the requested dead time.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

/// Character vector whose multiplicities are not non-negative integers.
class NotARepresentation : public Error {
 public:
  using Error::Error;
};

class InvalidScenario : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A fit that stopped without meeting its convergence criteria. Carries the
/// best parameters found so far.
template <class Result>
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, Result best)
      : Error(what), best_(std::move(best)) {}
  const Result& best() const noexcept { return best_; }

 private:
  Result best_;
};

}  // namespace spinrelax

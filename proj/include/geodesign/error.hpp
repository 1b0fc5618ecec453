#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace geodesign {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A covariance matrix could not be factorized. Carries the pair of
/// locations that are closest together, which is almost always the cause.
class SingularCovariance : public Error {
 public:
  SingularCovariance(const std::string& what, std::size_t first, std::size_t second)
      : Error(what), first_(first), second_(second) {}

  [[nodiscard]] std::pair<std::size_t, std::size_t> offending_pair() const {
    return {first_, second_};
  }

 private:
  std::size_t first_;
  std::size_t second_;
};

/// Constrained design generation ran out of attempts.
class FeasibilityError : public Error {
 public:
  FeasibilityError(const std::string& what, std::size_t best_achieved)
      : Error(what), best_achieved_(best_achieved) {}

  [[nodiscard]] std::size_t best_achieved() const { return best_achieved_; }

 private:
  std::size_t best_achieved_;
};

}  // namespace geodesign

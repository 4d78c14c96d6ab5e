#pragma once

#include <stdexcept>
#include <string>

namespace freeprob {

/// Invalid input data (malformed measure, bad parameter, violated precondition).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to reach its tolerance.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}
  [[nodiscard]] double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace freeprob

#ifndef HISTOTEX_ERRORS_HPP_
#define HISTOTEX_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace histotex {

/// Tensor or matrix dimensions that do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Unknown tags, inconsistent masks, invalid settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Closed-form construction asked for a target that has no real solution.
class InfeasibleTarget : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace histotex

#endif  // HISTOTEX_ERRORS_HPP_

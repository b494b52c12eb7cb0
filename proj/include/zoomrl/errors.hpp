#pragma once

#include <stdexcept>
#include <string>

namespace zoomrl {

/// Point or action outside the declared bounds of a space.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A grid-based oracle cannot certify the requested quantity at this resolution/dimension.
class PrecisionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Internal invariant broke (e.g. no relevant ball for a state). Not recoverable.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid experiment configuration; `what()` starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace zoomrl

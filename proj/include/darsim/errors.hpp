#pragma once

#include <stdexcept>
#include <string>

namespace darsim {

// Base class for all darsim errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A link load would exceed its capacity.
class CapacityViolation : public Error {
 public:
  using Error::Error;
};

// A call record is internally inconsistent (candidate equals an endpoint,
// duplicate endpoints, wrong candidate count, ...).
class BadCall : public Error {
 public:
  using Error::Error;
};

// Departure requested for a call id that is not active.
class UnknownCall : public Error {
 public:
  using Error::Error;
};

// A simulation configuration violates an invariant.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An analytic operation was called outside its domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// The capacitated process exceeded the superprocess on some link.
// Signals an engine bug, not a statistical event.
class DominationViolation : public Error {
 public:
  using Error::Error;
};

// Configuration document could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Configuration parsed but failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Attempt to merge metrics from incompatible runs.
class IncompatibleReports : public Error {
 public:
  using Error::Error;
};

}  // namespace darsim

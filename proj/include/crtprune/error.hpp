#pragma once

#include <stdexcept>
#include <string>

namespace crtprune {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// An argument lies outside the set where the requested quantity is defined.
class DomainError : public Error {
public:
  using Error::Error;
};

class IntegrationError : public Error {
public:
  using Error::Error;
};

class ConvergenceError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

// Numeric Laplace inversion failed its self-consistency check.
class InversionError : public Error {
public:
  using Error::Error;
};

// A sampled tree exceeded the configured node budget.
class SizeError : public Error {
public:
  using Error::Error;
};

class DegenerateError : public Error {
public:
  using Error::Error;
};

// Importance weights collapsed below the effective-sample-size threshold.
class DegenerateWeights : public Error {
public:
  using Error::Error;
};

class EmptySample : public Error {
public:
  using Error::Error;
};

}  // namespace crtprune

#pragma once

#include <stdexcept>
#include <string>

namespace schro {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition or input contract was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// No admissible radius exists at the smallest scanned radius.
class RhoBelowResolution : public Error {
 public:
  using Error::Error;
};

/// An adaptive quadrature did not reach its tolerance.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double achieved)
      : Error(what), achieved_(achieved) {}
  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

/// Spectral truncation left more than the allowed residual.
class CutoffError : public Error {
 public:
  CutoffError(const std::string& what, double required_cutoff)
      : Error(what), required_cutoff_(required_cutoff) {}
  double required_cutoff() const noexcept { return required_cutoff_; }

 private:
  double required_cutoff_;
};

class EigenSolverError : public Error {
 public:
  using Error::Error;
};

/// Malformed or schema-violating experiment configuration. The message names the line or field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace schro

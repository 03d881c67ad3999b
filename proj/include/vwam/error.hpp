#pragma once

#include <stdexcept>
#include <string>

namespace vwam {

// Root of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by a computation, or a numerically singular solve.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// Feature layout used to build an objective differs from the one being fed.
class FingerprintMismatch : public Error {
 public:
  using Error::Error;
};

// Contrast vector with zero variance or zero norm.
class DegenerateObjective : public Error {
 public:
  using Error::Error;
};

}  // namespace vwam

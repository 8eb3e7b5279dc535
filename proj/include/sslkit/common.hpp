#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace sslkit {

inline constexpr const char* kVersion = "0.1.0";

using Vec3 = Eigen::Vector3d;

// Error taxonomy. Every failure surfaces as one of these; nothing is
// reported through return codes inside the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or degenerate geometry (point outside room, coplanar anchors, ...).
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Dimension / length mismatches between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Random placement could not satisfy the separation constraints.
class SamplingError : public Error {
 public:
  using Error::Error;
};

// File container violations: bad magic, version, truncation, checksum.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Degenerate signal content (all-zero channel, silent recording).
class SignalError : public Error {
 public:
  using Error::Error;
};

// Not enough data for an estimator (e.g. fewer than two Welch segments),
// or misaligned feature lists.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid user-facing configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Measurements inconsistent with any solution (trilateration).
class NoSolutionError : public Error {
 public:
  NoSolutionError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_ = 0.0;
};

}  // namespace sslkit

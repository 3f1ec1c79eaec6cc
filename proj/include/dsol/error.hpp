#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dsol {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BehindCameraError : public Error {
 public:
  using Error::Error;
};

class InvalidDepthError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class TrackingLostError : public Error {
 public:
  using Error::Error;
};

class DegenerateKeyframeError : public Error {
 public:
  DegenerateKeyframeError(const std::string& what, int num_points)
      : Error(what), num_points_(num_points) {}
  int num_points() const { return num_points_; }

 private:
  int num_points_;
};

/// Reduced system singular after gauge fixing; null_direction spans the offending
/// subspace (unit norm, frame-variable ordering).
class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, std::vector<double> null_direction)
      : Error(what), null_direction_(std::move(null_direction)) {}
  const std::vector<double>& null_direction() const { return null_direction_; }

 private:
  std::vector<double> null_direction_;
};

/// Internal invariant violated (asymmetric prior, non-finite state, ...).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsol

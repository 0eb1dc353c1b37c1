#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace rfggd {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A model was evaluated outside the region where it is defined
/// (non-finite barrier values, coincident leader and follower, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Iteration cap hit, singular working-set system or a KKT check that failed.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// The reduced KKT system of an optimal QP solution cannot be factorized, so
/// the solution map has no usable derivative at this point.
class SingularKkt : public Error {
 public:
  using Error::Error;
};

/// Rejected run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace rfggd

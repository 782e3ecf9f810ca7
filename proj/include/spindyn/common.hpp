#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

namespace spindyn {

using cdouble = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index = Eigen::Index;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

enum class ErrorKind {
  kInvalidSpecies,
  kInvalidModel,
  kModelTooLarge,
  kNumericalContract,
  kSegment,
  kAmbiguousSteadyState,
  kConfiguration,
  kSyntax,
  kUndeclaredVariable,
  kDuplicateSweep,
  kUnknownLabel,
  kDomain,
  kUndefinedPolarization,
  kIo,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind and the module that
// raised it, so the CLI can map it onto an exit code and a structured message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(message), kind_(kind), module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

  // Configuration and input problems, as opposed to numerical failures.
  bool is_input_error() const noexcept;

 private:
  ErrorKind kind_;
  std::string module_;
};

}  // namespace spindyn

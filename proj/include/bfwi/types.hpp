#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace bfwi {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using CSpMat = Eigen::SparseMatrix<Complex>;

/// A point (x, z) in km; z is depth.
struct Point {
  double x = 0.0;
  double z = 0.0;
};

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised when A(m, omega) cannot be factorised.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// Serial execution is the reference path; Parallel uses OpenMP and must
/// reproduce the serial result bit for bit.
enum class ExecPolicy { Serial, Parallel };

inline double omega_from_hz(double f_hz) { return 2.0 * 3.14159265358979323846 * f_hz; }

}  // namespace bfwi

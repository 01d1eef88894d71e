#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace rotraman {

using cdouble = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<cdouble>;

// imaginary unit; named to avoid the <complex.h> macro I
inline constexpr cdouble iu{0.0, 1.0};

// Thrown when a run leaves its validated numerical regime (leakage past the
// truncation guard, trace drift, non-convergence). The CLI maps it to exit 3.
class NumericalAbort : public std::runtime_error {
 public:
  explicit NumericalAbort(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rotraman

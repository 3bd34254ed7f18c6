#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ptgrad {

using cx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

// Error taxonomy maps 1:1 onto the CLI exit codes (config 2, numerical 3, io 4).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// S x S operator on the system Hilbert space. Frequencies are in units of
// omega_c, hbar = 1.
struct QOperator {
  Mat data;

  QOperator() = default;
  explicit QOperator(Mat m) : data(std::move(m)) {
    if (data.rows() != data.cols())
      throw config_error("QOperator: matrix must be square");
  }

  int dim() const { return static_cast<int>(data.rows()); }

  // ||A - A^dag|| <= tol * ||A||, Frobenius norms.
  bool hermitian(double tol = 1e-12) const {
    double n = data.norm();
    if (n == 0.0) return true;
    return (data - data.adjoint()).norm() <= tol * n;
  }
};

// Vectorized density matrix, vec(rho)[i*S+j] = rho(i,j) (row index slow).
// Under this stacking (A (x) B) vec(X) = vec(A X B^T), which is the identity
// every superoperator formula below relies on.
struct DensityVec {
  Vec data;

  DensityVec() = default;
  explicit DensityVec(Vec v) : data(std::move(v)) {
    int s = static_cast<int>(std::lround(std::sqrt(double(data.size()))));
    if (static_cast<long>(s) * s != data.size())
      throw config_error("DensityVec: length must be a perfect square");
  }

  int sdim() const {
    return static_cast<int>(std::lround(std::sqrt(double(data.size()))));
  }
  int ldim() const { return static_cast<int>(data.size()); }
};

// Superoperators are plain L x L matrices acting on DensityVec::data, L = S^2.
using SuperOp = Mat;

// Piecewise-constant control grid: values(k, m) is channel m on step k.
struct ControlSchedule {
  RMat values;  // T x M
  double dt = 0.0;
  std::vector<std::string> labels;          // size M, optional
  std::vector<double> lower, upper;         // per-channel box bounds, empty = unbounded

  int steps() const { return static_cast<int>(values.rows()); }
  int channels() const { return static_cast<int>(values.cols()); }

  void validate() const {
    if (!values.allFinite())
      throw config_error("ControlSchedule: non-finite control value");
    if (!lower.empty() && static_cast<int>(lower.size()) != channels())
      throw config_error("ControlSchedule: lower bound arity mismatch");
    if (!upper.empty() && static_cast<int>(upper.size()) != channels())
      throw config_error("ControlSchedule: upper bound arity mismatch");
  }
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw config_error(msg);
}

}  // namespace ptgrad

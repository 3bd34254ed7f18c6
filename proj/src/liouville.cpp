#include "ptgrad/liouville.hpp"

#include <iostream>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace ptgrad {

static const cx I{0.0, 1.0};

DensityVec vectorize(const QOperator& rho) {
  int s = rho.dim();
  Vec v(s * s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) v(i * s + j) = rho.data(i, j);
  return DensityVec(std::move(v));
}

QOperator unvectorize(const DensityVec& v) {
  int s = v.sdim();
  Mat m(s, s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) m(i, j) = v.data(i * s + j);
  return QOperator(std::move(m));
}

SuperOp hamiltonian_superop(const QOperator& h) {
  if (!h.hermitian(1e-12))
    std::cerr << "ptgrad: warning: hamiltonian_superop called with "
                 "non-Hermitian operator\n";
  int s = h.dim();
  Mat id = Mat::Identity(s, s);
  return -I * (Eigen::kroneckerProduct(h.data, id) -
               Eigen::kroneckerProduct(id, h.data.transpose()))
                  .eval();
}

SuperOp commutator_superop(const QOperator& s) {
  int n = s.dim();
  Mat id = Mat::Identity(n, n);
  return Eigen::kroneckerProduct(s.data, id) -
         Eigen::kroneckerProduct(id, s.data.transpose());
}

SuperOp anticommutator_superop(const QOperator& s) {
  int n = s.dim();
  Mat id = Mat::Identity(n, n);
  return Eigen::kroneckerProduct(s.data, id) +
         Eigen::kroneckerProduct(id, s.data.transpose());
}

SuperOp lindblad_superop(const std::vector<QOperator>& jump_ops,
                         const std::vector<double>& rates) {
  require(jump_ops.size() == rates.size(),
          "lindblad_superop: one rate per jump operator");
  int s = jump_ops.empty() ? 1 : jump_ops.front().dim();
  int l = s * s;
  Mat gen = Mat::Zero(l, l);
  Mat id = Mat::Identity(s, s);
  for (std::size_t i = 0; i < jump_ops.size(); ++i) {
    if (rates[i] < 0.0) throw config_error("lindblad_superop: negative rate");
    const Mat& j = jump_ops[i].data;
    require(j.rows() == s, "lindblad_superop: mixed operator dimensions");
    Mat jj = j.adjoint() * j;
    // J rho J^dag = (J (x) conj(J)) vec(rho) under vec(rho)[i*S+j] = rho(i,j)
    gen += rates[i] *
           (Eigen::kroneckerProduct(j, j.conjugate()) -
            0.5 * Eigen::kroneckerProduct(jj, id) -
            0.5 * Eigen::kroneckerProduct(id, jj.transpose()))
               .eval();
  }
  return gen;
}

SuperOp step_propagator(const SuperOp& gen, double dt) {
  if (!gen.allFinite())
    throw numerical_error("step_propagator: non-finite generator entries");
  return (gen * dt).exp();
}

std::vector<SuperOp> system_propagators(const HBuilder& h_builder,
                                        const ControlSchedule& schedule,
                                        double dt) {
  schedule.validate();
  int t = schedule.steps(), m = schedule.channels();
  std::vector<SuperOp> props;
  props.reserve(t);
  for (int k = 0; k < t; ++k) {
    std::vector<double> u(m);
    for (int c = 0; c < m; ++c) u[c] = schedule.values(k, c);
    Mat h = h_builder(u);
    require(h.rows() == h.cols(), "system_propagators: non-square Hamiltonian");
    props.push_back(step_propagator(hamiltonian_superop(QOperator(h)), dt));
  }
  return props;
}

Mat pauli_x() {
  Mat m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

Mat pauli_y() {
  Mat m(2, 2);
  m << 0, -I, I, 0;
  return m;
}

Mat pauli_z() {
  Mat m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

DensityVec qubit_state(int level) {
  Mat rho = Mat::Zero(2, 2);
  rho(level, level) = 1.0;
  return vectorize(QOperator(rho));
}

DensityVec plus_x_state(int sign) {
  Mat rho(2, 2);
  double s = sign >= 0 ? 0.5 : -0.5;
  rho << 0.5, s, s, 0.5;
  return vectorize(QOperator(rho));
}

DensityVec maximally_mixed(int sdim) {
  return vectorize(QOperator(Mat::Identity(sdim, sdim) / double(sdim)));
}

cx expectation_cx(const Mat& op, const DensityVec& rho) {
  Mat r = unvectorize(rho).data;
  return (op * r).trace();
}

double expectation(const Mat& op, const DensityVec& rho) {
  return expectation_cx(op, rho).real();
}

}  // namespace ptgrad

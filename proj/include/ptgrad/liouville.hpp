#pragma once

#include <functional>
#include <vector>

#include "ptgrad/types.hpp"

namespace ptgrad {

DensityVec vectorize(const QOperator& rho);
QOperator unvectorize(const DensityVec& v);

// Generator of drho/dt = -i[H, rho]:  L = -i(H (x) I - I (x) H^T).
// Non-Hermitian H is accepted with a warning on stderr.
SuperOp hamiltonian_superop(const QOperator& h);

// [S, .] and {S, .} as superoperators: S (x) I -+ I (x) S^T.
SuperOp commutator_superop(const QOperator& s);
SuperOp anticommutator_superop(const QOperator& s);

// GKSL dissipator sum_i rate_i (J rho J^dag - 1/2 {J^dag J, rho}).
SuperOp lindblad_superop(const std::vector<QOperator>& jump_ops,
                         const std::vector<double>& rates);

// exp(gen * dt) by scaling-and-squaring Pade.
SuperOp step_propagator(const SuperOp& gen, double dt);

// Maps one row of control values to the system Hamiltonian.
using HBuilder = std::function<Mat(const std::vector<double>&)>;

// One propagator exp(L_S(u_k) dt) per schedule row.
std::vector<SuperOp> system_propagators(const HBuilder& h_builder,
                                        const ControlSchedule& schedule,
                                        double dt);

// Shared fixtures: Pauli matrices and common states (S = 2).
Mat pauli_x();
Mat pauli_y();
Mat pauli_z();
DensityVec qubit_state(int level);       // |level><level|
DensityVec plus_x_state(int sign = +1);  // |+-><+-| along x
DensityVec maximally_mixed(int sdim);

double expectation(const Mat& op, const DensityVec& rho);  // Re tr(op rho)
cx expectation_cx(const Mat& op, const DensityVec& rho);

}  // namespace ptgrad

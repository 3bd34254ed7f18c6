#pragma once

#include <vector>

#include "ptgrad/bath.hpp"
#include "ptgrad/liouville.hpp"
#include "ptgrad/ptmpo.hpp"
#include "ptgrad/types.hpp"

namespace ptgrad {

// Damped bosonic modes coupled to the system through S (x) sum g_i (b_i^+ + b_i).
struct AuxiliaryModel {
  struct Mode {
    double g = 0.0;       // coupling strength
    double omega0 = 0.0;  // mode frequency
    double kappa = 0.0;   // decay rate
    int d = 1;            // Fock truncation
  };
  std::vector<Mode> modes;

  int fock_dim() const;       // product of d_i
  int aux_liouville() const;  // A = product of d_i^2
  void validate() const;
};

// Single mode matched so its vacuum correlation g^2 exp(-i w0 t - kappa|t|/2)
// equals the lorentzian bath correlation: g = lambda, same w0 and kappa.
AuxiliaryModel from_lorentzian(const SpectralDensity& j, int d);

// One joint step exp((L_A + L_SA) dt) reshaped to a dense PT node with
// chi = A on both bonds. L_A carries the mode Hamiltonian and damping,
// L_SA the system-mode coupling; the system Hamiltonian stays outside.
PtNode augmented_step_tensor(const AuxiliaryModel& model, const QOperator& s_op,
                             double dt);

// T copies of the step tensor; the first node absorbs the vacuum initial
// mode state, the last absorbs the mode trace, interior caps are the mode
// trace vector.
ProcessTensor augmented_pt(const AuxiliaryModel& model, const QOperator& s_op,
                           double dt, int t_steps);

// Population of the highest Fock level of any mode in an extended state
// sigma (L x A). Leakage there means the truncation d is too small.
double fock_edge_population(const Mat& sigma, int sdim,
                            const AuxiliaryModel& model);

// Direct propagation of the joint state (algebraically the same contraction
// as the PT route). Throws numerical_error when the Fock edge population
// exceeds edge_tol. Returns T+1 reduced states, initial first.
std::vector<DensityVec> augmented_dynamics(const AuxiliaryModel& model,
                                           const QOperator& s_op,
                                           const std::vector<SuperOp>& sys_props,
                                           const DensityVec& rho0, double dt,
                                           double edge_tol = 1e-6);

}  // namespace ptgrad

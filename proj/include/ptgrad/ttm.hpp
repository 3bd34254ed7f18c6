#pragma once

#include <string>
#include <vector>

#include "ptgrad/ptmpo.hpp"
#include "ptgrad/types.hpp"

namespace ptgrad {

// The fixed per-step system propagator the maps were generated with, kept so
// downstream consumers can refuse a mismatched system step: transfer tensors
// encode the memory kernel for one system Hamiltonian only.
struct TrainingProvenance {
  std::string source;
  SuperOp system_step;
};

// Dynamical maps E_k: rho_0 -> rho_k for k = 1..K, all trace-preserving
// within 1e-8 (checked by validate).
struct DynamicalMapSeq {
  std::vector<SuperOp> maps;
  double dt = 0;
  TrainingProvenance provenance;

  int count() const { return static_cast<int>(maps.size()); }
  void validate() const;
};

// Stationary transfer tensors T_1..T_{T_C} with
// rho_{k+1} = sum_j T_{k+1-j} rho_j over the memory window.
struct TransferTensorSet {
  std::vector<SuperOp> tensors;
  int cutoff = 0;
  double dt = 0;
  TrainingProvenance provenance;

  void validate() const;
};

// Assembles E_k column-by-column by contracting the PT forward from the
// Liouville basis vectors, applying fixed_prop at every step.
DynamicalMapSeq maps_from_pt(const ProcessTensor& pt, const SuperOp& fixed_prop);

// T_k = E_k - sum_{m=1}^{k-1} T_m E_{k-m}, k = 1..t_c. Requires t_c <= K.
TransferTensorSet extract(const DynamicalMapSeq& maps, int t_c);

// rho_{k+1} = sum_{j=max(0,k-T_C+1)}^{k} T_{k+1-j} rho_j; returns
// rho_0..rho_steps. Per-step cost is linear in T_C.
std::vector<DensityVec> propagate(const TransferTensorSet& tts,
                                  const DensityVec& rho0, int steps);

// Hard error when system_step is not the propagator the tensors were trained
// with; call before reusing a tensor set under a new system Hamiltonian.
void require_trained_step(const TransferTensorSet& tts,
                          const SuperOp& system_step, double tol = 1e-10);

// Reverse-order transpose contraction through the same memory window:
// returns lambda_0 = d(Re w.rho_N)/d(rho_0) for the bilinear pairing
// w.rho = sum_i w_i rho_i, demonstrating that the adjoint shares the
// propagation's O(steps * T_C) cost.
Vec adjoint_rho0_gradient(const TransferTensorSet& tts, const Vec& terminal_weight,
                          int steps);

// CSV columns: k, frobenius_norm. LF line endings.
void write_transfer_norms_csv(const std::string& path,
                              const TransferTensorSet& tts);

}  // namespace ptgrad

#pragma once

#include <cstdint>
#include <vector>

#include "ptgrad/liouville.hpp"
#include "ptgrad/ptmpo.hpp"
#include "ptgrad/types.hpp"

namespace ptgrad {

// One trajectory of the two auxiliary fields, piecewise constant per step.
struct NoiseRealization {
  std::vector<cx> xi, nu;  // length T each
  int index = 0;           // trajectory index, fixes the RNG stream
};

struct NoiseEnsemble {
  std::vector<NoiseRealization> realizations;
  std::uint64_t seed = 0;
  double dt = 0.0;
  int t_steps = 0;

  int count() const { return static_cast<int>(realizations.size()); }
  void validate() const;
};

// Joint complex-Gaussian fields with second moments
//   <xi_k xi_l> = Re C((k-l) dt),
//   <xi_k nu_l> = 2i theta(k-l) Im C((k-l) dt),  theta(0) = 1/2,
//   <nu_k nu_l> = 0,
// realized as xi = H s + D(u - iv), nu = g (u + iv) with s,u,v i.i.d. real
// normals: H H^T = Re-C Gram matrix (eigenvalue square root), D = K/(2g)
// strictly causal. c_grid[m] = C(m dt), m = 0..T-1; trajectory i draws from
// the (seed, i) stream, so the ensemble is reproducible and embarrassingly
// parallel.
NoiseEnsemble sample_noise(const std::vector<cx>& c_grid, int n_traj,
                           double dt, int t_steps, std::uint64_t seed);

// Per-step system-bath factors U_k = exp(dt (i xi_k [S,.] + i/2 nu_k {S,.})).
std::vector<SuperOp> trajectory_propagators(const NoiseRealization& noise,
                                            const QOperator& s_op, double dt);

// Empirical-average process tensor: interior bonds carry the trajectory
// index (chi = n_traj, bond-diagonal nodes); the first node absorbs the
// 1/n weights and the last absorbs the summation, so all caps are ones.
ProcessTensor stochastic_pt(const NoiseEnsemble& ensemble,
                            const QOperator& s_op, double dt);

// Ensemble-averaged reduced dynamics by direct per-trajectory propagation
// (T+1 states, initial first). Trajectories run concurrently; the average
// reduces in trajectory order. A trajectory whose Liouville norm exceeds
// norm_ceiling times the initial norm aborts with diagnostics.
std::vector<DensityVec> stochastic_dynamics(const NoiseEnsemble& ensemble,
                                            const QOperator& s_op,
                                            const std::vector<SuperOp>& sys_props,
                                            const DensityVec& rho0,
                                            double norm_ceiling = 1e3);

// Batch-mean estimate of Re tr(obs rho_T): contiguous trajectory batches,
// standard error from the scatter of batch means.
struct BatchEstimate {
  double mean = 0.0;
  double se = 0.0;
};
BatchEstimate batch_observable(const NoiseEnsemble& ensemble,
                               const QOperator& s_op,
                               const std::vector<SuperOp>& sys_props,
                               const DensityVec& rho0, const Mat& obs,
                               int n_batches = 100, double norm_ceiling = 1e3);

}  // namespace ptgrad

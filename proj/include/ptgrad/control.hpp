#pragma once

#include <string>
#include <vector>

#include "ptgrad/liouville.hpp"
#include "ptgrad/ptmpo.hpp"
#include "ptgrad/types.hpp"

namespace ptgrad {

// Costate lambda_k paired bilinearly with the forward state sigma_k:
// <lambda, sigma> = sum_{m,x} lambda(m,x) sigma(m,x), no conjugation.
// Shape L x chi_k, matching states[k] from contract_forward.
struct Costate {
  Mat data;
  int step = 0;  // bond index k, 0..T
};

// Infidelity Z = 1 - Re <<target|rho>> with <<a|b>> = sum_i conj(a_i) b_i.
double terminal_cost(const DensityVec& rho_t, const DensityVec& target);

// Terminal costate lambda_T = -conj(target), broadcast to the chi_T = 1
// boundary bond. The minus sign folds dZ = Re <lambda_T, d sigma_T>.
Costate terminal_costate(const DensityVec& target);

// Sweeps lambda_T back to lambda_0 through w_k = lambda_k . node_k and
// lambda_{k-1} = U_k^T w_k (transpose, bilinear pairing). Returns T+1
// costates indexed by bond, [0] first.
std::vector<Costate> backpropagate(const ProcessTensor& pt,
                                   const std::vector<SuperOp>& props,
                                   const Costate& lambda_t);

// Per-step gradient G_q with dZ = Re sum_q sum_{m,v} G_q(m,v) dU_q(v,m),
// i.e. G_q(m,v) is the sensitivity to the propagator entry U_q(v,m).
// grads[q-1] corresponds to U_q; q runs 1..T.
std::vector<Mat> gradient_wrt_propagators(const std::vector<Mat>& states,
                                          const std::vector<Costate>& costates,
                                          const ProcessTensor& pt);

// Chain rule through U_q(u) = exp(L_S(u_q) dt) by central finite
// differences on each control entry: step h = fd_step * max(1, |u|).
// Returns a T x M matrix of dZ/du_{q,m}.
RMat gradient_wrt_controls(const std::vector<Mat>& prop_grads,
                           const HBuilder& h_builder,
                           const ControlSchedule& schedule,
                           double fd_step = 1e-5);

struct OptimizeOptions {
  double lr_scale = 0.05;  // learning rate = lr_scale * control scale
  double beta1 = 0.9;
  double beta2 = 0.999;
  double grad_tol = 1e-8;
  double cost_tol = 1e-12;
  double fd_step = 1e-5;
  int abort_after_increases = 20;
};

struct HistoryRow {
  int iteration = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct OptimizeResult {
  ControlSchedule schedule;  // best schedule found
  double cost = 0.0;         // its terminal cost
  std::vector<HistoryRow> history;
};

// Adam descent on the schedule under box projection. The environment
// (pt) is fixed; only the system propagators change between iterates.
// Throws numerical_error after abort_after_increases consecutive cost
// increases.
OptimizeResult optimize(const ProcessTensor& pt, const HBuilder& h_builder,
                        const ControlSchedule& schedule0,
                        const DensityVec& target, const DensityVec& rho0,
                        int max_iters = 200, const OptimizeOptions& options = {});

// History as CSV (iteration,cost,grad_norm,wall_ms), LF line endings.
void write_history_csv(const std::string& path,
                       const std::vector<HistoryRow>& history);

}  // namespace ptgrad

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ptgrad/bath.hpp"
#include "ptgrad/types.hpp"

namespace ptgrad {

// Polaron-ansatz state for the spin-boson model: one complex displacement per
// discretized bath mode. The initial condition is always x = 0 (separable
// |-> (x) |vacuum>).
struct PolaronState {
  std::vector<cx> x;
  ModeDiscretization modes;

  int count() const { return static_cast<int>(x.size()); }
  void validate() const;
};

PolaronState initial_polaron(const ModeDiscretization& modes);

// dx_k/dt = i x_k (omega_q e^{-2 sum |x|^2} + omega_k) + (i/2) g_k.
// The shared exponential factor is computed once per call.
std::vector<cx> eom_rhs(const PolaronState& state, double omega_q);

// Classical fixed-step RK4 with omega_q piecewise constant per step, starting
// from x = 0. Returns t_steps + 1 states. Throws numerical_error with the
// step index if the state leaves the finite range (step size too large).
std::vector<PolaronState> integrate(const ModeDiscretization& modes,
                                    const std::vector<double>& omega_q_schedule,
                                    double dt, int t_steps);

// <sigma_x> = -e^{-2 sum |x_k|^2}; always in [-1, 0).
double magnetization(const PolaronState& state);

// Terminal cost as a function of the final magnetization, with its analytic
// derivative so the adjoint stays exact.
struct MagnetizationCost {
  std::function<double(double)> value;
  std::function<double(double)> slope;
};

// Discrete adjoint of the RK4 step map over the (Re x, Im x) real
// parametrization; returns dZ/d(omega_q_n) for each of the T steps. The
// Jacobian of the EOM is diagonal plus rank one, so one adjoint step costs
// O(N) with a single shared scalar.
std::vector<double> adjoint_gradient(
    const std::vector<PolaronState>& trajectory,
    const std::vector<double>& omega_q_schedule,
    const MagnetizationCost& terminal_cost_on_magnetization, double dt);

// CSV columns: t, Re x_1..N, Im x_1..N, magnetization. LF line endings.
void write_trajectory_csv(const std::string& path,
                          const std::vector<PolaronState>& trajectory,
                          double dt);

}  // namespace ptgrad

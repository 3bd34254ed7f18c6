#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "ptgrad/types.hpp"

namespace ptgrad {

// J(omega) >= 0 on omega > 0. ohmic_exp: J = 2 alpha omega exp(-omega/omega_c).
// lorentzian: J = lambda^2 (kappa/2pi) / ((omega-omega0)^2 + (kappa/2)^2),
// defined on the full real line so that the zero-temperature correlation is
// exactly lambda^2 exp(-i omega0 t - kappa |t|/2).
struct SpectralDensity {
  enum class Kind { OhmicExp, Lorentzian, Tabulated };
  Kind kind = Kind::OhmicExp;
  double alpha = 0, omega_c = 0;            // ohmic_exp
  double lambda = 0, omega0 = 0, kappa = 0; // lorentzian
  std::vector<std::pair<double, double>> table;  // tabulated (omega, J)

  static SpectralDensity ohmic_exp(double alpha, double omega_c);
  static SpectralDensity lorentzian(double lambda, double omega0, double kappa);
  static SpectralDensity tabulated(std::vector<std::pair<double, double>> t);

  double value(double omega) const;
};

// C(t) ~ sum_j alpha_j exp(i gamma_j t), C*(t) ~ sum_j alpha~_j exp(i gamma_j t),
// shared exponents, Im gamma_j > 0.
struct BathCorrelation {
  struct Term {
    cx alpha, alpha_tilde, gamma;
  };
  std::vector<Term> terms;
  double residual_rms = 0.0;  // RMS of the C reconstruction at the fit samples

  int count() const { return static_cast<int>(terms.size()); }
  cx eval(double t) const;       // reconstructed C(t)
  cx eval_conj(double t) const;  // reconstructed C*(t)
};

struct ModeDiscretization {
  std::vector<std::pair<double, double>> modes;  // (g_k, omega_k)
  int count() const { return static_cast<int>(modes.size()); }
  auto begin() const { return modes.begin(); }
  auto end() const { return modes.end(); }
};

// C(t) = int_0^inf J(w) [coth(w/2T) cos(wt) - i sin(wt)] dw; at T = 0 this is
// int J(w) exp(-iwt) dw. The lorentzian kind integrates over the full real
// line (see SpectralDensity) and supports T = 0 only.
cx correlation(const SpectralDensity& j, double t, double temperature = 0.0);

struct FitOptions {
  double residual_ceiling = std::numeric_limits<double>::infinity();
  int restarts = 6;    // first trial is the deterministic pencil init
  int max_iters = 250;
  std::uint64_t seed = 11;
};

// Variable-projection fit of M decaying exponentials to uniformly gridded
// samples of C(t). Candidate exponent sets are conjugation-closed: mirrored
// pairs (eta, -eta*) and imaginary-axis singles, plus one free pole when M is
// odd. alpha~_j is fitted against C*(t) with the shared exponents.
BathCorrelation fit_exponentials(
    const std::vector<std::pair<double, cx>>& samples, int m,
    const FitOptions& options = {});

// Linear grid omega_k = (k - 1/2) dw, dw = omega_max / n, g_k = sqrt(J dw).
ModeDiscretization discretize(const SpectralDensity& j, int n,
                              double omega_max);

// Two-column CSV (omega, J), header row optional, strictly increasing omega.
SpectralDensity load_tabulated_csv(const std::string& path);

}  // namespace ptgrad

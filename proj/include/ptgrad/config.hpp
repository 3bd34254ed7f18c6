#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptgrad/bath.hpp"
#include "ptgrad/liouville.hpp"
#include "ptgrad/ptmpo.hpp"
#include "ptgrad/types.hpp"

namespace ptgrad {

// Parsed run configuration. Frequencies are in units of omega_c and times in
// 1/omega_c (the ohmic cutoff is pinned to 1 internally); the documented key
// list lives in the README, and any key outside it is rejected.

struct ModelConfig {
  double omega_q = 1.0;
  std::string hamiltonian = "sigma_x";  // sigma_x | sigma_y | sigma_z | none
  std::string coupling = "sigma_z";
  double coupling_scale = 0.5;
  std::string rho0 = "minus_x";  // ground|excited|plus_x|minus_x|mixed
  std::string target;            // same names; empty = absent
};

struct BathConfig {
  std::string type = "none";  // none | ohmic_exp | lorentzian
  double alpha = 0.0;                            // ohmic_exp
  double lambda = 0.0, omega0 = 0.0, kappa = 0.0;  // lorentzian
  double temperature = 0.0;                      // zero supported
};

struct MethodConfig {
  std::string type;  // heom | stochastic | augmented | tdvp | ttm
  int m_exp = 0;     // heom: exponential terms fitted to an ohmic bath
  int depth = 0;     // heom hierarchy depth
  int n_traj = 0;    // stochastic
  int d = 0;         // augmented Fock truncation
  int n_modes = 0;   // tdvp
  double omega_max = 0.0;  // tdvp discretization window
  int t_c = 0;       // ttm memory cutoff
};

struct GridConfig {
  double dt = 0.0;
  int t_steps = 0;
};

struct OptimizeConfig {
  bool present = false;
  std::vector<std::string> channels;  // Pauli names; H += 0.5 u_m P_m
  std::vector<double> init;           // per-channel start value, default 0
  std::vector<double> lower, upper;   // box bounds, empty = unbounded
  int max_iters = 200;
  double lr_scale = 0.05;
};

struct RunConfig {
  ModelConfig model;
  BathConfig bath;
  MethodConfig method;
  GridConfig grid;
  double eps_rel = -1.0;  // < 0: no compression section
  OptimizeConfig optimize;
  std::vector<std::string> observables;  // default sigma_x, sigma_y, sigma_z
  std::string out_dir = ".";
  std::uint64_t seed = 0;

  void validate() const;  // cross-field rules; parse_* call this already
};

// compare: one shared model/bath/grid, two or more method sections.
struct CompareConfig {
  ModelConfig model;
  BathConfig bath;
  GridConfig grid;
  double eps_rel = -1.0;
  std::vector<MethodConfig> methods;
  std::string reference;  // method name; empty = first
  std::string out_dir = ".";
  std::uint64_t seed = 0;

  void validate() const;
};

// bench: synthetic scaling study, no physics sections.
struct BenchConfig {
  std::vector<int> chi;      // PT bond dimensions to sweep
  std::vector<int> ttm_t_c;  // TTM memory cutoffs to sweep
  int t_steps = 20;
  int reps = 5;
  std::string out_dir = ".";
  std::uint64_t seed = 0;

  void validate() const;
};

// Parse + schema-validate; every error is a config_error naming the key.
RunConfig parse_run_config(const std::string& json_text);
CompareConfig parse_compare_config(const std::string& json_text);
BenchConfig parse_bench_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);  // io_error on read failure
CompareConfig load_compare_config(const std::string& path);
BenchConfig load_bench_config(const std::string& path);

// Model realization helpers shared by the commands.
Mat pauli_by_name(const std::string& name);  // sigma_x | sigma_y | sigma_z
QOperator coupling_operator(const ModelConfig& m);
Mat static_hamiltonian(const ModelConfig& m);  // (omega_q/2) P, or zero
std::vector<SuperOp> fixed_props(const ModelConfig& m, const GridConfig& g);
DensityVec state_by_name(const std::string& name);
HBuilder control_h_builder(const ModelConfig& m,
                           const std::vector<std::string>& channels);
SpectralDensity spectral_density(const BathConfig& b);  // not for "none"

// Exponential representation of the bath correlation for the hierarchy:
// lorentzian baths use the exact conjugate pair, ohmic baths are fitted with
// method.m_exp terms on the dynamics grid (at most 256 samples).
BathCorrelation correlation_for_heom(const BathConfig& b, const MethodConfig& m,
                                     const GridConfig& g, std::uint64_t seed);
// C(m dt), m = 0..t_steps-1, for the stochastic sampler.
std::vector<cx> correlation_grid(const BathConfig& b, const GridConfig& g);

// Subcommand bodies; CLI maps config_error/numerical_error/io_error to the
// exit codes 2/3/4. pt_path may be empty only where documented (zero-coupling
// configs run against the exact decoupled environment).
void cmd_build_pt(const RunConfig& cfg, const std::string& out_dir);
void cmd_dynamics(const RunConfig& cfg, const std::string& pt_path,
                  const std::string& out_dir);
void cmd_optimize(const RunConfig& cfg, const std::string& pt_path,
                  const std::string& out_dir);
void cmd_compare(const CompareConfig& cfg, const std::string& out_dir);
void cmd_bench(const BenchConfig& cfg, const std::string& out_dir);

// Scaling-study machinery, shared with the acceptance suite.
ProcessTensor synthetic_pt(int chi, int t_steps, int sdim, std::uint64_t seed);
// Least-squares slope of log(seconds) against log(size).
double fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

struct BenchRow {
  std::string phase;
  int size = 0;
  double seconds = 0.0;
};
// Median-of-reps wall times for forward / backward / gradient / recompress
// over the chi list, plus ttm propagation over the t_c list (per-step time).
std::vector<BenchRow> run_bench(const BenchConfig& cfg);
// Slope per phase from the rows of one phase.
std::vector<std::pair<std::string, double>> bench_slopes(
    const std::vector<BenchRow>& rows);

}  // namespace ptgrad

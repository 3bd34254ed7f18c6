// Acceptance suite: nine end-to-end criteria, one PASS/FAIL line each.
// Every tolerance is pinned next to its check; regression baselines are
// frozen constants from the first converged run. Exit code is the number
// of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "ptgrad/augmented.hpp"
#include "ptgrad/config.hpp"
#include "ptgrad/control.hpp"
#include "ptgrad/heom.hpp"
#include "ptgrad/liouville.hpp"
#include "ptgrad/ptmpo.hpp"
#include "ptgrad/stochastic.hpp"
#include "ptgrad/tdvp.hpp"
#include "ptgrad/ttm.hpp"

using namespace ptgrad;

namespace {

int failures = 0;

double now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

void line(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("criterion %d %-4s %-34s %s\n", id, ok ? "PASS" : "FAIL", name,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class F>
void guarded(int id, const char* name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    line(id, name, false, fmt("exception: %s", e.what()));
  }
}

QOperator half_sigma_z() { return QOperator(Mat(0.5 * pauli_z())); }

std::vector<SuperOp> drive_props(double wq, double dt, int t) {
  SuperOp u = step_propagator(
      hamiltonian_superop(QOperator(Mat(0.5 * wq * pauli_x()))), dt);
  return std::vector<SuperOp>(t, u);
}

BathCorrelation lorentzian_corr(double l, double w0, double k) {
  BathCorrelation corr;
  corr.terms.push_back({cx(l * l, 0), cx(0, 0), cx(-w0, k / 2)});
  corr.terms.push_back({cx(0, 0), cx(l * l, 0), cx(w0, k / 2)});
  return corr;
}

BathCorrelation ohmic_fit(double alpha, double dt, int t_steps, int m_exp) {
  BathConfig b;
  b.type = "ohmic_exp";
  b.alpha = alpha;
  MethodConfig mc;
  mc.type = "heom";
  mc.m_exp = m_exp;
  GridConfig g;
  g.dt = dt;
  g.t_steps = t_steps;
  return correlation_for_heom(b, mc, g, 11);
}

double sx(const DensityVec& rho) { return expectation(pauli_x(), rho); }

// ---------------------------------------------------------------------------
// 1. Independent-boson oracle at t = 3: <sx> = -(1+9)^(-0.1), via the
//    hierarchy process tensor and the variational mode chain.
void c1() {
  const double exact = -std::pow(10.0, -0.1);
  double t0 = now();
  ProcessTensor pt =
      heom_pt(build_generator(ohmic_fit(0.1, 0.05, 60, 4), half_sigma_z(), 4),
              0.05, 60);
  auto traj = reduced_trajectory(pt, std::vector<SuperOp>(
                                         60, SuperOp::Identity(4, 4)),
                                 plus_x_state(-1));
  const double err_h = std::abs(sx(traj.back()) - exact);
  const double time_h = now() - t0;

  t0 = now();
  ModeDiscretization fine =
      discretize(SpectralDensity::ohmic_exp(0.1, 1.0), 300, 10.0);
  auto tj300 = integrate(fine, std::vector<double>(300, 0.0), 0.01, 300);
  const double err_300 = std::abs(magnetization(tj300.back()) - exact);
  const double time_300 = now() - t0;

  t0 = now();
  ModeDiscretization coarse =
      discretize(SpectralDensity::ohmic_exp(0.1, 1.0), 30, 10.0);
  auto tj30 = integrate(coarse, std::vector<double>(60, 0.0), 0.05, 60);
  const double err_30 = std::abs(magnetization(tj30.back()) - exact);
  const double time_30 = now() - t0;

  const bool ok = err_h <= 2e-3 && err_300 <= 2e-3 && err_30 <= 2e-2 &&
                  time_h < 60 && time_300 < 60 && time_30 < 60;
  line(1, "independent-boson oracle", ok,
       fmt("hier %.1e (%.1fs)  chain300 %.1e (%.1fs)  chain30 %.1e (%.1fs)",
           err_h, time_h, err_300, time_300, err_30, time_30));
}

// ---------------------------------------------------------------------------
// 2. Adjoint gradients vs scalar central finite differences, for the
//    tensor-network control path and the variational chain.
void c2() {
  double t0 = now();
  BathCorrelation corr;
  corr.terms.push_back({cx(0.3, 0.1), cx(0.25, -0.05), cx(-0.8, 0.6)});
  corr.terms.push_back({cx(0.05, -0.02), cx(0.04, 0.01), cx(0.5, 0.3)});
  const int t = 20;
  const double dt = 0.1;
  ProcessTensor pt = heom_pt(build_generator(corr, half_sigma_z(), 4), dt, t);
  auto hb = [](const std::vector<double>& u) {
    return Mat(0.5 * u[0] * pauli_x() + 0.5 * u[1] * pauli_z());
  };
  ControlSchedule sch;
  sch.values = RMat(t, 2);
  for (int q = 0; q < t; ++q) {
    sch.values(q, 0) = 0.7 + 0.2 * std::sin(0.4 * q);
    sch.values(q, 1) = -0.3 + 0.1 * std::cos(0.3 * q);
  }
  sch.dt = dt;
  DensityVec rho0 = qubit_state(0), target = qubit_state(1);
  auto cost_of = [&](const ControlSchedule& sc) {
    auto props = system_propagators(hb, sc, dt);
    return terminal_cost(contract_forward(pt, props, rho0).final, target);
  };
  auto props = system_propagators(hb, sch, dt);
  auto fwd = contract_forward(pt, props, rho0);
  auto lams = backpropagate(pt, props, terminal_costate(target));
  RMat adj = gradient_wrt_controls(
      gradient_wrt_propagators(fwd.states, lams, pt), hb, sch);
  const double h = 1e-5;
  double num = 0, den = 0;
  for (int q = 0; q < t; ++q)
    for (int m = 0; m < 2; ++m) {
      ControlSchedule up = sch, dn = sch;
      up.values(q, m) += h;
      dn.values(q, m) -= h;
      const double fd = (cost_of(up) - cost_of(dn)) / (2 * h);
      num += (adj(q, m) - fd) * (adj(q, m) - fd);
      den += fd * fd;
    }
  const double rel_pt = std::sqrt(num / den);

  ModeDiscretization modes =
      discretize(SpectralDensity::ohmic_exp(0.1, 1.0), 30, 10.0);
  const int tt = 200;
  const double tdt = 0.05;
  std::vector<double> schedule(tt);
  for (int q = 0; q < tt; ++q) schedule[q] = 0.8 + 0.3 * std::sin(0.05 * q);
  MagnetizationCost cost{[](double m) { return m; },
                         [](double) { return 1.0; }};
  auto traj = integrate(modes, schedule, tdt, tt);
  auto grad = adjoint_gradient(traj, schedule, cost, tdt);
  const double hh = 1e-6;
  num = den = 0;
  for (int q = 0; q < tt; ++q) {
    std::vector<double> up = schedule, dn = schedule;
    up[q] += hh;
    dn[q] -= hh;
    const double fd =
        (magnetization(integrate(modes, up, tdt, tt).back()) -
         magnetization(integrate(modes, dn, tdt, tt).back())) /
        (2 * hh);
    num += (grad[q] - fd) * (grad[q] - fd);
    den += fd * fd;
  }
  const double rel_tdvp = std::sqrt(num / den);
  const double elapsed = now() - t0;

  const bool ok = rel_pt <= 1e-4 && rel_tdvp <= 1e-6 && elapsed < 120;
  line(2, "adjoint gradients vs central FD", ok,
       fmt("tensor %.1e  chain %.1e  (%.1fs)", rel_pt, rel_tdvp, elapsed));
}

// ---------------------------------------------------------------------------
// 3. Matched lorentzian bath: the exact two-term hierarchy, the truncated
//    auxiliary mode, and the noise-sampled tensor must coincide.
void c3() {
  double t0 = now();
  const double lam = 0.2, w0 = 1.0, kap = 0.4, dt = 0.05;
  const int t = 100;
  auto props = drive_props(1.0, dt, t);
  DensityVec rho0 = plus_x_state(-1);

  ProcessTensor hpt = heom_pt(
      build_generator(lorentzian_corr(lam, w0, kap), half_sigma_z(), 8), dt, t);
  DensityVec hfin = contract_forward(hpt, props, rho0).final;

  AuxiliaryModel am =
      from_lorentzian(SpectralDensity::lorentzian(lam, w0, kap), 8);
  ProcessTensor apt = augmented_pt(am, half_sigma_z(), dt, t);
  DensityVec afin = contract_forward(apt, props, rho0).final;
  const double dev = (hfin.data - afin.data).cwiseAbs().maxCoeff();

  SpectralDensity j = SpectralDensity::lorentzian(lam, w0, kap);
  std::vector<cx> grid(t);
  for (int k = 0; k < t; ++k) grid[k] = correlation(j, k * dt, 0.0);
  NoiseEnsemble ens = sample_noise(grid, 10000, dt, t, 101);
  BatchEstimate be = batch_observable(ens, half_sigma_z(), props, rho0,
                                      pauli_x());
  const double gap = std::abs(be.mean - sx(hfin));
  const double elapsed = now() - t0;

  const bool ok = dev <= 1e-3 && gap <= 3 * be.se && elapsed < 600;
  line(3, "matched lorentzian cross-method", ok,
       fmt("hier-aux %.1e  noise gap %.1e vs 3se %.1e  (%.1fs)", dev, gap,
           3 * be.se, elapsed));
}

// ---------------------------------------------------------------------------
// 4. Zero coupling: every builder reduces to closed-system propagation.
void c4() {
  const double dt = 0.1;
  const int t = 30;
  QOperator s_zero{Mat(Mat::Zero(2, 2))};
  auto props = drive_props(1.0, dt, t);
  DensityVec rho0 = qubit_state(0);
  std::vector<DensityVec> closed{rho0};
  for (int k = 0; k < t; ++k)
    closed.push_back(DensityVec{Vec(props[k] * closed.back().data)});

  auto worst_vs_closed = [&](const ProcessTensor& pt) {
    auto traj = reduced_trajectory(pt, props, rho0);
    double worst = 0;
    for (int k = 0; k <= t; ++k)
      worst = std::max(
          worst, (traj[k].data - closed[k].data).cwiseAbs().maxCoeff());
    return worst;
  };

  BathCorrelation corr;
  corr.terms.push_back({cx(0.3, 0.1), cx(0.25, -0.05), cx(-0.8, 0.6)});
  const double dev_h = worst_vs_closed(heom_pt(
      build_generator(corr, s_zero, 3), dt, t));

  SpectralDensity j = SpectralDensity::lorentzian(0.2, 1.0, 0.4);
  std::vector<cx> grid(t);
  for (int k = 0; k < t; ++k) grid[k] = correlation(j, k * dt, 0.0);
  const double dev_s = worst_vs_closed(
      stochastic_pt(sample_noise(grid, 64, dt, t, 7), s_zero, dt));

  const double dev_a =
      worst_vs_closed(augmented_pt(from_lorentzian(j, 6), s_zero, dt, t));

  // silent chain: all couplings vanish, so <sx> stays at its initial -1,
  // which is also the closed value (the drive commutes with sx)
  ModeDiscretization silent =
      discretize(SpectralDensity::ohmic_exp(0.1, 1.0), 20, 10.0);
  for (auto& m : silent.modes) m.first = 0.0;
  auto tj = integrate(silent, std::vector<double>(t, 1.0), dt, t);
  double dev_t = 0;
  for (const auto& st : tj)
    dev_t = std::max(dev_t, std::abs(magnetization(st) + 1.0));

  const bool ok =
      dev_h <= 1e-10 && dev_s <= 1e-10 && dev_a <= 1e-10 && dev_t <= 1e-10;
  line(4, "zero-coupling identity", ok,
       fmt("hier %.1e  noise %.1e  aux %.1e  chain %.1e", dev_h, dev_s, dev_a,
           dev_t));
}

// ---------------------------------------------------------------------------
// 5. Scaling slopes on synthetic tensors. The cubic fit uses the large-chi
//    tail (>= 64), where dense factorizations dominate the recompression;
//    the window fit uses T_C >= 32, where the window sum dominates the
//    per-step bookkeeping.
void c5() {
  double t0 = now();
  BenchConfig bc;
  bc.chi = {16, 32, 64, 128, 256};
  bc.ttm_t_c = {32, 64, 128, 256};
  bc.t_steps = 20;
  bc.reps = 5;
  bc.seed = 5;
  std::vector<BenchRow> rows = run_bench(bc);

  auto slope_of = [&](const std::string& phase, int min_size) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows)
      if (r.phase == phase && r.size >= min_size)
        pts.emplace_back(double(r.size), r.seconds);
    return fit_loglog_slope(pts);
  };
  const double fwd = slope_of("forward", 0);
  const double bwd = slope_of("backward", 0);
  const double rec = slope_of("recompress", 64);
  const double ttm = slope_of("ttm", 0);
  const double elapsed = now() - t0;

  const bool ok = std::abs(fwd - 2.0) <= 0.3 && std::abs(bwd - 2.0) <= 0.3 &&
                  std::abs(rec - 3.0) <= 0.4 && std::abs(ttm - 1.0) <= 0.3 &&
                  elapsed < 900;
  line(5, "scaling slopes", ok,
       fmt("fwd %.2f  bwd %.2f  recompress %.2f  window %.2f  (%.0fs)", fwd,
           bwd, rec, ttm, elapsed));
}

// ---------------------------------------------------------------------------
// 6. Compression reduces the leading and trailing interior bonds of a
//    uniform hierarchy tensor below the bulk, at negligible dynamical cost.
void c6() {
  BathCorrelation corr;
  corr.terms.push_back({0.5 * cx(0.3, 0.1), 0.5 * cx(0.25, -0.05),
                        cx(-0.8, 4.0)});
  corr.terms.push_back({0.5 * cx(0.05, -0.02), 0.5 * cx(0.04, 0.01),
                        cx(0.5, 6.4)});
  corr.terms.push_back({0.5 * cx(0.02, 0.015), 0.5 * cx(0.015, -0.01),
                        cx(-0.3, 10.0)});
  const double dt = 0.05;
  const int t = 40;
  ProcessTensor pt = heom_pt(build_generator(corr, half_sigma_z(), 4), dt, t);
  auto props = drive_props(1.0, dt, t);
  DensityVec rho0 = plus_x_state(-1);
  auto full = reduced_trajectory(pt, props, rho0);

  ProcessTensor rpt = recompress(pt, 1e-7);
  std::vector<int> prof = bond_profile(rpt);
  const int first = prof[1], last = prof[prof.size() - 2];
  int bulk = 0;
  for (std::size_t k = 2; k + 2 < prof.size(); ++k)
    bulk = std::max(bulk, prof[k]);

  auto comp = reduced_trajectory(rpt, props, rho0);
  double dev = 0;
  for (int k = 0; k <= t; ++k)
    dev = std::max(dev, (full[k].data - comp[k].data).norm());

  const bool ok = first < bulk && last < bulk && dev <= 1e-5;
  line(6, "compression edge profile", ok,
       fmt("edges %d/%d vs bulk %d  traj dev %.1e", first, last, bulk, dev));
}

// ---------------------------------------------------------------------------
// 7. Optimization: exact population inversion in the closed system, and a
//    recorded improvement over the free evolution in the open system.
void c7() {
  double t0 = now();
  const int t = 20;
  const double dt = 0.1;
  ControlSchedule s0;
  s0.values = RMat::Constant(t, 1, 0.5);
  s0.dt = dt;
  s0.lower = {0.0};
  s0.upper = {5.0};
  auto hb_closed = [](const std::vector<double>& u) {
    return Mat(0.5 * u[0] * pauli_x());
  };
  OptimizeResult closed = optimize(identity_pt(2, t, dt), hb_closed, s0,
                                   qubit_state(1), qubit_state(0), 200);

  ProcessTensor pt =
      heom_pt(build_generator(ohmic_fit(0.1, dt, t, 3), half_sigma_z(), 4),
              dt, t);
  auto hb_open = [](const std::vector<double>& u) {
    return Mat(0.5 * (1.0 + u[0]) * pauli_x());
  };
  ControlSchedule z;
  z.values = RMat::Zero(t, 1);
  z.dt = dt;
  z.lower = {-4.0};
  z.upper = {4.0};
  DensityVec rho0 = qubit_state(0), target = qubit_state(1);
  const double z0 = terminal_cost(
      contract_forward(pt, system_propagators(hb_open, z, dt), rho0).final,
      target);
  OptimizeResult open = optimize(pt, hb_open, z, target, rho0, 200);
  const double elapsed = now() - t0;

  // frozen baseline from the first converged run: z0 = 0.320930, final
  // infidelity 0.004531 (98.6% below free evolution)
  const bool ok = closed.cost < 1e-6 && closed.history.size() <= 200 &&
                  open.cost <= 0.5 * z0 && open.history.size() <= 200 &&
                  open.cost <= 5e-3 && elapsed < 600;
  line(7, "optimization targets", ok,
       fmt("closed %.1e  open %.4f -> %.4f  (%.1fs)", closed.cost, z0,
           open.cost, elapsed));
}

// ---------------------------------------------------------------------------
// 8. Transfer tensors: memoryless input collapses to one tensor, the full
//    window reconstructs exactly, and truncation error decays with T_C.
void c8() {
  const double dt = 0.1;
  Mat lower = Mat::Zero(2, 2);
  lower(1, 0) = cx(0.4, 0);
  SuperOp markov = step_propagator(
      SuperOp(lindblad_superop({QOperator(lower)}, {1.0}) +
              hamiltonian_superop(QOperator(Mat(0.5 * pauli_x())))),
      dt);
  DynamicalMapSeq semi;
  semi.dt = dt;
  semi.provenance.source = "semigroup";
  semi.provenance.system_step = SuperOp::Identity(4, 4);
  SuperOp acc = SuperOp::Identity(4, 4);
  for (int k = 0; k < 8; ++k) {
    acc = markov * acc;
    semi.maps.push_back(acc);
  }
  TransferTensorSet mt = extract(semi, 8);
  double tail = 0;
  for (std::size_t k = 1; k < mt.tensors.size(); ++k)
    tail = std::max(tail, mt.tensors[k].norm());

  BathCorrelation corr;
  corr.terms.push_back({cx(1.8, 0.6), cx(1.5, -0.3), cx(-0.8, 5.0)});
  corr.terms.push_back({cx(0.3, -0.12), cx(0.24, 0.06), cx(0.5, 8.0)});
  const double fdt = 0.12;
  const int k_train = 40;
  ProcessTensor pt =
      heom_pt(build_generator(corr, half_sigma_z(), 3), fdt, k_train);
  SuperOp u = step_propagator(
      hamiltonian_superop(QOperator(Mat(0.5 * pauli_x()))), fdt);
  DynamicalMapSeq maps = maps_from_pt(pt, u);

  DensityVec rho0 = plus_x_state(+1);
  TransferTensorSet full = extract(maps, k_train);
  auto recon = propagate(full, rho0, k_train);
  double exact_dev = 0;
  for (int k = 1; k <= k_train; ++k)
    exact_dev = std::max(
        exact_dev,
        (recon[k].data - Vec(maps.maps[k - 1] * rho0.data)).cwiseAbs()
            .maxCoeff());

  const int horizon = 160;
  auto ref = propagate(full, rho0, horizon);
  double prev = 1e300;
  bool monotone = true;
  std::vector<double> devs;
  for (int tc : {6, 12, 23, 40}) {
    auto tr = propagate(extract(maps, tc), rho0, horizon);
    double dev = 0;
    for (int k = 0; k <= horizon; ++k)
      dev = std::max(dev,
                     (tr[k].data - ref[k].data).cwiseAbs().maxCoeff());
    devs.push_back(dev);
    if (dev > prev + 1e-12) monotone = false;
    prev = dev;
  }

  const bool ok = tail <= 1e-12 && exact_dev <= 1e-12 && monotone;
  line(8, "transfer-tensor properties", ok,
       fmt("markov tail %.1e  full window %.1e  trunc %.1e>=%.1e>=%.1e>=%.1e",
           tail, exact_dev, devs[0], devs[1], devs[2], devs[3]));
}

// ---------------------------------------------------------------------------
// 9. Resonant spin-boson cross-check: hierarchy vs variational chain agree
//    absolutely at short times and in sign throughout; both curves are
//    frozen as regression baselines.
void c9() {
  const double dt = 0.05;
  const int t = 100;
  ProcessTensor pt =
      heom_pt(build_generator(ohmic_fit(0.1, dt, t, 4), half_sigma_z(), 6),
              dt, t);
  auto traj = reduced_trajectory(pt, drive_props(1.0, dt, t), plus_x_state(-1));
  ModeDiscretization modes =
      discretize(SpectralDensity::ohmic_exp(0.1, 1.0), 30, 10.0);
  auto vtraj = integrate(modes, std::vector<double>(t, 1.0), dt, t);

  double worst1 = 0;
  bool sign_ok = true;
  for (int k = 0; k <= t; ++k) {
    const double hx = sx(traj[k]);
    const double vx = magnetization(vtraj[k]);
    if (k * dt <= 1.0 + 1e-12) worst1 = std::max(worst1, std::abs(hx - vx));
    if (hx * vx < 0) sign_ok = false;
  }

  // frozen baselines (first converged run, every 10th step)
  const double base_h[11] = {-1.0,          -0.979960129, -0.952877893,
                             -0.944611054,  -0.949654041, -0.958706406,
                             -0.966597086,  -0.971399230, -0.973149595,
                             -0.972777721,  -0.971340902};
  const double base_v[11] = {-1.0,          -0.979862141, -0.951542648,
                             -0.940092312,  -0.942017127, -0.949604097,
                             -0.957666989,  -0.963573097, -0.966501654,
                             -0.966762006,  -0.965218378};
  double drift = 0;
  for (int i = 0; i <= 10; ++i) {
    drift = std::max(drift, std::abs(sx(traj[10 * i]) - base_h[i]));
    drift = std::max(drift,
                     std::abs(magnetization(vtraj[10 * i]) - base_v[i]));
  }

  const bool ok = worst1 <= 0.05 && sign_ok && drift <= 1e-6;
  line(9, "resonant spin-boson cross-check", ok,
       fmt("short-time dev %.1e  signs %s  baseline drift %.1e", worst1,
           sign_ok ? "match" : "DIFFER", drift));
}

}  // namespace

int main() {
  guarded(1, "independent-boson oracle", c1);
  guarded(2, "adjoint gradients vs central FD", c2);
  guarded(3, "matched lorentzian cross-method", c3);
  guarded(4, "zero-coupling identity", c4);
  guarded(5, "scaling slopes", c5);
  guarded(6, "compression edge profile", c6);
  guarded(7, "optimization targets", c7);
  guarded(8, "transfer-tensor properties", c8);
  guarded(9, "resonant spin-boson cross-check", c9);
  if (failures)
    std::printf("%d criterion(s) failed\n", failures);
  else
    std::printf("all criteria passed\n");
  return failures;
}

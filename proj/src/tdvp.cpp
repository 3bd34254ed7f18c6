#include "ptgrad/tdvp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace ptgrad {

namespace {

// Real parametrization of the EOM: y = (a, b) with x = a + ib.
// E = exp(-2 sum (a^2 + b^2)), f_k = omega_q E + omega_k,
// da_k/dt = -b_k f_k,  db_k/dt = a_k f_k + g_k / 2.
struct Rhs {
  std::vector<double> fa, fb;
  double e;
};

Rhs rhs_real(const ModeDiscretization& modes, const std::vector<double>& a,
             const std::vector<double>& b, double omega_q) {
  const int n = static_cast<int>(a.size());
  double s = 0;
  for (int k = 0; k < n; ++k) s += a[k] * a[k] + b[k] * b[k];
  const double e = std::exp(-2.0 * s);
  Rhs out;
  out.e = e;
  out.fa.resize(n);
  out.fb.resize(n);
  for (int k = 0; k < n; ++k) {
    const double f = omega_q * e + modes.modes[k].second;
    out.fa[k] = -b[k] * f;
    out.fb[k] = a[k] * f + 0.5 * modes.modes[k].first;
  }
  return out;
}

// Vector-Jacobian product (J^T v) at (a, b): the Jacobian is the block
// skew form [[0, -diag f], [diag f, 0]] plus the rank-one correction
// (-b; a) * (-4 omega_q E) (a; b)^T, so the product needs one shared scalar
// w = sum (va_k b_k - vb_k a_k).
void add_vjp(const ModeDiscretization& modes, const std::vector<double>& a,
             const std::vector<double>& b, double omega_q,
             const std::vector<double>& va, const std::vector<double>& vb,
             std::vector<double>& outa, std::vector<double>& outb) {
  const int n = static_cast<int>(a.size());
  double s = 0;
  for (int k = 0; k < n; ++k) s += a[k] * a[k] + b[k] * b[k];
  const double e = std::exp(-2.0 * s);
  double w = 0;
  for (int k = 0; k < n; ++k) w += va[k] * b[k] - vb[k] * a[k];
  const double c = 4.0 * omega_q * e * w;
  for (int k = 0; k < n; ++k) {
    const double f = omega_q * e + modes.modes[k].second;
    outa[k] += f * vb[k] + c * a[k];
    outb[k] += -f * va[k] + c * b[k];
  }
}

// <dF/d(omega_q), v> = E * sum (-b_k va_k + a_k vb_k).
double omega_sensitivity(const std::vector<double>& a,
                         const std::vector<double>& b,
                         const std::vector<double>& va,
                         const std::vector<double>& vb) {
  const int n = static_cast<int>(a.size());
  double s = 0, w = 0;
  for (int k = 0; k < n; ++k) {
    s += a[k] * a[k] + b[k] * b[k];
    w += -b[k] * va[k] + a[k] * vb[k];
  }
  return std::exp(-2.0 * s) * w;
}

struct Stage {
  std::vector<double> a, b;
};

void axpy(Stage& out, const Stage& base, double h, const Rhs& k) {
  const int n = static_cast<int>(base.a.size());
  for (int i = 0; i < n; ++i) {
    out.a[i] = base.a[i] + h * k.fa[i];
    out.b[i] = base.b[i] + h * k.fb[i];
  }
}

struct StepStages {
  Stage s1, s2, s3, s4;
  Rhs k1, k2, k3, k4;
};

StepStages rk4_stages(const ModeDiscretization& modes, const Stage& y,
                      double omega_q, double dt) {
  StepStages st;
  st.s1 = y;
  st.k1 = rhs_real(modes, st.s1.a, st.s1.b, omega_q);
  st.s2 = y;
  axpy(st.s2, y, 0.5 * dt, st.k1);
  st.k2 = rhs_real(modes, st.s2.a, st.s2.b, omega_q);
  st.s3 = y;
  axpy(st.s3, y, 0.5 * dt, st.k2);
  st.k3 = rhs_real(modes, st.s3.a, st.s3.b, omega_q);
  st.s4 = y;
  axpy(st.s4, y, dt, st.k3);
  st.k4 = rhs_real(modes, st.s4.a, st.s4.b, omega_q);
  return st;
}

void rk4_advance(Stage& y, const StepStages& st, double dt) {
  const int n = static_cast<int>(y.a.size());
  for (int i = 0; i < n; ++i) {
    y.a[i] += dt / 6.0 *
              (st.k1.fa[i] + 2 * st.k2.fa[i] + 2 * st.k3.fa[i] + st.k4.fa[i]);
    y.b[i] += dt / 6.0 *
              (st.k1.fb[i] + 2 * st.k2.fb[i] + 2 * st.k3.fb[i] + st.k4.fb[i]);
  }
}

Stage to_stage(const PolaronState& state) {
  Stage y;
  y.a.resize(state.x.size());
  y.b.resize(state.x.size());
  for (std::size_t k = 0; k < state.x.size(); ++k) {
    y.a[k] = state.x[k].real();
    y.b[k] = state.x[k].imag();
  }
  return y;
}

bool finite_stage(const Stage& y) {
  for (double v : y.a)
    if (!std::isfinite(v)) return false;
  for (double v : y.b)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

void PolaronState::validate() const {
  require(x.size() == modes.modes.size(),
          "PolaronState: displacement count must match the mode count");
  for (const cx& v : x)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw numerical_error("PolaronState: non-finite displacement");
}

PolaronState initial_polaron(const ModeDiscretization& modes) {
  PolaronState s;
  s.modes = modes;
  s.x.assign(modes.modes.size(), cx(0, 0));
  return s;
}

std::vector<cx> eom_rhs(const PolaronState& state, double omega_q) {
  state.validate();
  require(!state.x.empty(), "eom_rhs: modes must be nonempty");
  Stage y = to_stage(state);
  Rhs r = rhs_real(state.modes, y.a, y.b, omega_q);
  std::vector<cx> out(state.x.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = cx(r.fa[k], r.fb[k]);
  return out;
}

std::vector<PolaronState> integrate(const ModeDiscretization& modes,
                                    const std::vector<double>& omega_q_schedule,
                                    double dt, int t_steps) {
  require(dt > 0, "integrate: dt must be > 0");
  require(t_steps >= 0, "integrate: t_steps must be >= 0");
  require(static_cast<int>(omega_q_schedule.size()) == t_steps,
          "integrate: schedule length must equal t_steps");
  require(!modes.modes.empty(), "integrate: modes must be nonempty");

  std::vector<PolaronState> out;
  out.reserve(t_steps + 1);
  PolaronState cur = initial_polaron(modes);
  out.push_back(cur);
  Stage y = to_stage(cur);
  for (int step = 0; step < t_steps; ++step) {
    StepStages st = rk4_stages(modes, y, omega_q_schedule[step], dt);
    rk4_advance(y, st, dt);
    if (!finite_stage(y))
      throw numerical_error("integrate: non-finite polaron state at step " +
                            std::to_string(step + 1) +
                            "; reduce the step size");
    for (std::size_t k = 0; k < cur.x.size(); ++k) cur.x[k] = cx(y.a[k], y.b[k]);
    out.push_back(cur);
  }
  return out;
}

double magnetization(const PolaronState& state) {
  state.validate();
  double s = 0;
  for (const cx& v : state.x) s += std::norm(v);
  return -std::exp(-2.0 * s);
}

std::vector<double> adjoint_gradient(
    const std::vector<PolaronState>& trajectory,
    const std::vector<double>& omega_q_schedule,
    const MagnetizationCost& terminal_cost_on_magnetization, double dt) {
  require(!trajectory.empty(), "adjoint_gradient: empty trajectory");
  require(trajectory.size() == omega_q_schedule.size() + 1,
          "adjoint_gradient: trajectory and schedule lengths do not match");
  require(dt > 0, "adjoint_gradient: dt must be > 0");
  require(static_cast<bool>(terminal_cost_on_magnetization.value) &&
              static_cast<bool>(terminal_cost_on_magnetization.slope),
          "adjoint_gradient: cost must provide value and slope");
  const int t = static_cast<int>(omega_q_schedule.size());
  const int n = trajectory.front().count();
  for (const PolaronState& s : trajectory) {
    s.validate();
    require(s.count() == n, "adjoint_gradient: inconsistent mode count");
  }

  // lambda_T = (dZ/dm) dm/dy with m = -E: dm/da_k = 4 a_k E, dm/db_k = 4 b_k E
  Stage yt = to_stage(trajectory.back());
  double s2 = 0;
  for (int k = 0; k < n; ++k) s2 += yt.a[k] * yt.a[k] + yt.b[k] * yt.b[k];
  const double et = std::exp(-2.0 * s2);
  const double dz = terminal_cost_on_magnetization.slope(magnetization(trajectory.back()));
  std::vector<double> la(n), lb(n);
  for (int k = 0; k < n; ++k) {
    la[k] = dz * 4.0 * yt.a[k] * et;
    lb[k] = dz * 4.0 * yt.b[k] * et;
  }

  const ModeDiscretization& modes = trajectory.front().modes;
  std::vector<double> grad(t, 0.0);
  std::vector<double> k1a(n), k1b(n), k2a(n), k2b(n), k3a(n), k3b(n), k4a(n),
      k4b(n), tmpa(n), tmpb(n);
  for (int step = t - 1; step >= 0; --step) {
    const double wq = omega_q_schedule[step];
    Stage y = to_stage(trajectory[step]);
    StepStages st = rk4_stages(modes, y, wq, dt);

    // reverse of y' = y + dt/6 (k1 + 2 k2 + 2 k3 + k4)
    for (int k = 0; k < n; ++k) {
      k1a[k] = dt / 6.0 * la[k];
      k1b[k] = dt / 6.0 * lb[k];
      k2a[k] = dt / 3.0 * la[k];
      k2b[k] = dt / 3.0 * lb[k];
      k3a[k] = dt / 3.0 * la[k];
      k3b[k] = dt / 3.0 * lb[k];
      k4a[k] = dt / 6.0 * la[k];
      k4b[k] = dt / 6.0 * lb[k];
    }
    double gq = 0;

    // k4 = F(s4), s4 = y + dt k3
    std::fill(tmpa.begin(), tmpa.end(), 0.0);
    std::fill(tmpb.begin(), tmpb.end(), 0.0);
    add_vjp(modes, st.s4.a, st.s4.b, wq, k4a, k4b, tmpa, tmpb);
    gq += omega_sensitivity(st.s4.a, st.s4.b, k4a, k4b);
    for (int k = 0; k < n; ++k) {
      la[k] += tmpa[k];
      lb[k] += tmpb[k];
      k3a[k] += dt * tmpa[k];
      k3b[k] += dt * tmpb[k];
    }

    // k3 = F(s3), s3 = y + dt/2 k2
    std::fill(tmpa.begin(), tmpa.end(), 0.0);
    std::fill(tmpb.begin(), tmpb.end(), 0.0);
    add_vjp(modes, st.s3.a, st.s3.b, wq, k3a, k3b, tmpa, tmpb);
    gq += omega_sensitivity(st.s3.a, st.s3.b, k3a, k3b);
    for (int k = 0; k < n; ++k) {
      la[k] += tmpa[k];
      lb[k] += tmpb[k];
      k2a[k] += 0.5 * dt * tmpa[k];
      k2b[k] += 0.5 * dt * tmpb[k];
    }

    // k2 = F(s2), s2 = y + dt/2 k1
    std::fill(tmpa.begin(), tmpa.end(), 0.0);
    std::fill(tmpb.begin(), tmpb.end(), 0.0);
    add_vjp(modes, st.s2.a, st.s2.b, wq, k2a, k2b, tmpa, tmpb);
    gq += omega_sensitivity(st.s2.a, st.s2.b, k2a, k2b);
    for (int k = 0; k < n; ++k) {
      la[k] += tmpa[k];
      lb[k] += tmpb[k];
      k1a[k] += 0.5 * dt * tmpa[k];
      k1b[k] += 0.5 * dt * tmpb[k];
    }

    // k1 = F(s1), s1 = y
    add_vjp(modes, st.s1.a, st.s1.b, wq, k1a, k1b, la, lb);
    gq += omega_sensitivity(st.s1.a, st.s1.b, k1a, k1b);

    grad[step] = gq;
  }
  return grad;
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<PolaronState>& trajectory,
                          double dt) {
  require(!trajectory.empty(), "write_trajectory_csv: empty trajectory");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("write_trajectory_csv: cannot open " + path);
  const int n = trajectory.front().count();
  out << "t";
  for (int k = 1; k <= n; ++k) out << ",re_x_" << k;
  for (int k = 1; k <= n; ++k) out << ",im_x_" << k;
  out << ",magnetization\n";
  char buf[32];
  for (std::size_t step = 0; step < trajectory.size(); ++step) {
    std::snprintf(buf, sizeof buf, "%.17g", step * dt);
    out << buf;
    for (int k = 0; k < n; ++k) {
      std::snprintf(buf, sizeof buf, ",%.17g", trajectory[step].x[k].real());
      out << buf;
    }
    for (int k = 0; k < n; ++k) {
      std::snprintf(buf, sizeof buf, ",%.17g", trajectory[step].x[k].imag());
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g\n", magnetization(trajectory[step]));
    out << buf;
  }
  if (!out) throw io_error("write_trajectory_csv: write failed for " + path);
}

}  // namespace ptgrad

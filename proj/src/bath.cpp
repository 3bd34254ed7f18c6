#include "ptgrad/bath.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ptgrad/rng.hpp"

namespace ptgrad {

SpectralDensity SpectralDensity::ohmic_exp(double alpha, double omega_c) {
  require(alpha > 0 && omega_c > 0, "ohmic_exp: alpha and omega_c must be > 0");
  SpectralDensity j;
  j.kind = Kind::OhmicExp;
  j.alpha = alpha;
  j.omega_c = omega_c;
  return j;
}

SpectralDensity SpectralDensity::lorentzian(double lambda, double omega0,
                                            double kappa) {
  require(kappa > 0, "lorentzian: kappa must be > 0");
  require(lambda >= 0, "lorentzian: lambda must be >= 0");
  SpectralDensity j;
  j.kind = Kind::Lorentzian;
  j.lambda = lambda;
  j.omega0 = omega0;
  j.kappa = kappa;
  return j;
}

SpectralDensity SpectralDensity::tabulated(
    std::vector<std::pair<double, double>> t) {
  require(!t.empty(), "tabulated: empty table");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0 && t[i].first <= t[i - 1].first)
      throw config_error("tabulated: omega must be strictly increasing");
    if (t[i].second < 0)
      throw config_error("tabulated: J(omega) must be >= 0");
  }
  SpectralDensity j;
  j.kind = Kind::Tabulated;
  j.table = std::move(t);
  return j;
}

double SpectralDensity::value(double omega) const {
  switch (kind) {
    case Kind::OhmicExp:
      return omega > 0 ? 2.0 * alpha * omega * std::exp(-omega / omega_c) : 0.0;
    case Kind::Lorentzian: {
      double d = omega - omega0;
      return lambda * lambda * (kappa / (2.0 * M_PI)) /
             (d * d + 0.25 * kappa * kappa);
    }
    case Kind::Tabulated: {
      if (omega <= table.front().first) return table.front().second;
      if (omega >= table.back().first) return table.back().second;
      auto it = std::lower_bound(
          table.begin(), table.end(), omega,
          [](const std::pair<double, double>& p, double w) { return p.first < w; });
      auto hi = *it, lo = *(it - 1);
      double f = (omega - lo.first) / (hi.first - lo.first);
      return lo.second + f * (hi.second - lo.second);
    }
  }
  return 0.0;
}

cx BathCorrelation::eval(double t) const {
  cx out = 0;
  for (const auto& tm : terms) out += tm.alpha * std::exp(cx(0, 1) * tm.gamma * t);
  return out;
}

cx BathCorrelation::eval_conj(double t) const {
  cx out = 0;
  for (const auto& tm : terms)
    out += tm.alpha_tilde * std::exp(cx(0, 1) * tm.gamma * t);
  return out;
}

namespace {

// omega * coth(omega / 2T), finite at omega -> 0 (value 2T).
double omega_coth(double omega, double temperature) {
  double x = omega / (2.0 * temperature);
  if (std::abs(x) < 1e-8) return 2.0 * temperature;
  return omega / std::tanh(x);
}

template <class F>
cx integrate(F&& f, double lo, double hi, unsigned depth = 15,
             double tol = 1e-9) {
  using boost::math::quadrature::gauss_kronrod;
  double err_re = 0, err_im = 0;
  double re = gauss_kronrod<double, 61>::integrate(
      [&](double w) { return f(w).real(); }, lo, hi, depth, tol, &err_re);
  double im = gauss_kronrod<double, 61>::integrate(
      [&](double w) { return f(w).imag(); }, lo, hi, depth, tol, &err_im);
  return {re, im};
}

}  // namespace

cx correlation(const SpectralDensity& j, double t, double temperature) {
  require(std::isfinite(t), "correlation: t must be finite");
  require(temperature >= 0, "correlation: temperature must be >= 0");
  const double T = temperature;

  if (j.kind == SpectralDensity::Kind::Lorentzian) {
    if (T > 0)
      throw numerical_error(
          "correlation: lorentzian kind integrates over the full real line, "
          "where coth(omega/2T) is singular; only T = 0 is supported");
    // Work in u = omega - omega0 where the peak is symmetric about 0.
    // Slowly oscillating integrals go through the infinite-interval
    // transform directly. Otherwise integrate a window [-w, w] in panels of
    // at most ~3 oscillation periods (so the rule never sees unresolved
    // oscillation) and add two integration-by-parts boundary terms for each
    // 1/u^2 tail; the remainder is bounded by 2|Js'(w)|/t^2 < 5e-9.
    const double c = j.lambda * j.lambda * j.kappa / (2.0 * M_PI);
    const double q = 0.5 * j.kappa;
    auto js = [&](double u) { return c / (u * u + q * q); };
    auto g = [&](double u) { return js(u) * std::exp(cx(0, -u * t)); };
    const double at = std::abs(t);
    cx shifted;
    if (at < 0.02) {
      const double inf = std::numeric_limits<double>::infinity();
      shifted = integrate(g, -inf, inf);
    } else {
      const double w = std::max(300.0, 60.0 / at);
      int n = std::max(1, static_cast<int>(std::ceil(2.0 * w * at / 20.0)));
      shifted = cx(0, 0);
      for (int k = 0; k < n; ++k) {
        double a = -w + 2.0 * w * k / n;
        double b = -w + 2.0 * w * (k + 1) / n;
        shifted += integrate(g, a, b, 5, 1e-12);
      }
      double d = w * w + q * q;
      double jsp = -2.0 * c * w / (d * d);
      shifted -= 2.0 * (js(w) * std::sin(w * t) / t +
                        jsp * std::cos(w * t) / (t * t));
    }
    return std::exp(cx(0, -j.omega0 * t)) * shifted;
  }

  if (j.kind == SpectralDensity::Kind::Tabulated && T > 0 &&
      j.table.front().first <= 0 && j.table.front().second > 0)
    throw numerical_error(
        "correlation: divergent integrand, tabulated J does not vanish at "
        "omega = 0 while coth(omega/2T) has a pole there");

  double hi = std::numeric_limits<double>::infinity();
  double lo = 0.0;
  if (j.kind == SpectralDensity::Kind::Tabulated) {
    lo = std::max(0.0, j.table.front().first);
    hi = j.table.back().first;
  }

  if (T == 0)
    return integrate(
        [&](double w) { return j.value(w) * std::exp(cx(0, -w * t)); }, lo, hi);

  return integrate(
      [&](double w) {
        // J(w) [coth(w/2T) cos - i sin]; the J ~ w prefactor keeps the
        // product finite at w -> 0 (written as (J/w) * w coth).
        double jw = j.value(w);
        double c = w > 0 ? jw / w * omega_coth(w, T) : 0.0;
        return cx(c * std::cos(w * t), -jw * std::sin(w * t));
      },
      lo, hi);
}

// ---------------------------------------------------------------------------
// fit_exponentials

namespace {

// Matrix-pencil (ESPRIT-style) pole estimates from uniform samples:
// Hankel matrix SVD, shift-invariance eigenvalues z, gamma = -i ln(z) / h.
std::vector<cx> pencil_poles(const std::vector<double>& ts,
                             const std::vector<cx>& cs, int m) {
  if (m <= 0) return {};
  const int k = static_cast<int>(cs.size());
  const int p = k / 3;
  const double h = ts[1] - ts[0];
  Mat y(k - p, p + 1);
  for (int i = 0; i < k - p; ++i)
    for (int jj = 0; jj <= p; ++jj) y(i, jj) = cs[i + jj];
  Mat y1 = y.leftCols(p), y2 = y.rightCols(p);
  Eigen::JacobiSVD<Mat> svd(y1, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  int mm = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > s(0) * 1e-12) ++mm;
  mm = std::min(m, mm);
  if (mm == 0) return {};
  Mat core = s.head(mm).cwiseInverse().asDiagonal() *
             svd.matrixU().leftCols(mm).adjoint() * y2 *
             svd.matrixV().leftCols(mm);
  Eigen::ComplexEigenSolver<Mat> eig(core);
  std::vector<cx> g;
  for (int i = 0; i < mm; ++i) {
    cx z = eig.eigenvalues()(i);
    cx gi = cx(0, -1) * std::log(z) / h;
    if (gi.imag() <= 0) gi = cx(gi.real(), std::max(1e-6, std::abs(gi.imag())));
    g.push_back(gi);
  }
  std::sort(g.begin(), g.end(),
            [](cx a, cx b) { return a.imag() > b.imag(); });
  return g;
}

struct PartitionFit {
  double cost = std::numeric_limits<double>::infinity();  // ||Phi a - C||^2
  std::vector<cx> gammas, amps;
  bool ok = false;
};

// Exponents for a partition parameter vector v:
// pairs   eta_r = v[r] + i exp(v[p+r]), emitted as (eta, -eta*)
// axis    gamma = i exp(v[2p+r])
// free    gamma = v[2p+s] + i exp(v[2p+s+1])   (at most one, odd M)
std::vector<cx> partition_gammas(const RVec& v, int p, int s, int f) {
  std::vector<cx> g;
  g.reserve(2 * p + s + f);
  for (int r = 0; r < p; ++r) g.emplace_back(v(r), std::exp(v(p + r)));
  for (int r = 0; r < p; ++r) g.emplace_back(-v(r), std::exp(v(p + r)));
  for (int r = 0; r < s; ++r) g.emplace_back(0.0, std::exp(v(2 * p + r)));
  if (f) g.emplace_back(v(2 * p + s), std::exp(v(2 * p + s + 1)));
  return g;
}

struct ResidualEval {
  Vec residual;  // Phi a - C at the samples
  Vec amps;
  std::vector<cx> gammas;
  double cost;
};

ResidualEval eval_partition(const RVec& v, int p, int s, int f,
                            const std::vector<double>& ts, const Vec& cs) {
  ResidualEval out;
  out.gammas = partition_gammas(v, p, s, f);
  const int n = static_cast<int>(ts.size());
  const int m = static_cast<int>(out.gammas.size());
  Mat phi(n, m);
  for (int i = 0; i < n; ++i)
    for (int jj = 0; jj < m; ++jj)
      phi(i, jj) = std::exp(cx(0, 1) * out.gammas[jj] * ts[i]);
  Eigen::JacobiSVD<Mat> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vec a = svd.solve(cs);
  out.residual = phi * a - cs;
  out.amps.resize(m);
  for (int jj = 0; jj < m; ++jj) out.amps(jj) = a(jj);
  out.cost = out.residual.squaredNorm();
  return out;
}

// Levenberg-Marquardt on the variable-projection residual with a
// forward-difference Jacobian; ported from the validated reference fit.
PartitionFit fit_partition(const std::vector<double>& ts, const Vec& cs, int p,
                           int s, int f, const std::vector<cx>& init_eta,
                           const std::vector<double>& init_kap,
                           const std::vector<cx>& init_free,
                           const FitOptions& opt, GaussianStream& rng) {
  const int n = static_cast<int>(ts.size());
  const int dim = 2 * p + s + 2 * f;
  const double amp_guard = 1e3 * std::abs(cs(0));
  PartitionFit best;

  for (int trial = 0; trial < opt.restarts; ++trial) {
    RVec v(dim);
    for (int r = 0; r < p; ++r) {
      cx e = init_eta[r];
      if (trial) {
        e = e * (1.0 + 0.3 * rng.normal()) + cx(0, 0.2 * rng.uniform(0, 1));
      }
      if (e.imag() <= 1e-8) e = cx(e.real(), 1e-2);
      v(r) = e.real();
      v(p + r) = std::log(e.imag());
    }
    for (int r = 0; r < s; ++r) {
      double kap = init_kap[r];
      if (trial) kap *= std::exp(0.5 * rng.normal());
      v(2 * p + r) = std::log(std::max(kap, 1e-8));
    }
    if (f) {
      cx fr = init_free[0];
      if (trial) fr *= (1.0 + 0.3 * rng.normal());
      v(2 * p + s) = fr.real();
      v(2 * p + s + 1) = std::log(std::max(fr.imag(), 1e-8));
    }

    double lam = 1e-3;
    ResidualEval cur = eval_partition(v, p, s, f, ts, cs);
    for (int it = 0; it < opt.max_iters; ++it) {
      // forward-difference Jacobian, stacked real/imag parts
      RMat jac(2 * n, dim);
      for (int jj = 0; jj < dim; ++jj) {
        RVec vp = v;
        vp(jj) += 1e-7;
        ResidualEval re = eval_partition(vp, p, s, f, ts, cs);
        for (int i = 0; i < n; ++i) {
          cx d = (re.residual(i) - cur.residual(i)) / 1e-7;
          jac(i, jj) = d.real();
          jac(n + i, jj) = d.imag();
        }
      }
      RVec rr(2 * n);
      for (int i = 0; i < n; ++i) {
        rr(i) = cur.residual(i).real();
        rr(n + i) = cur.residual(i).imag();
      }
      RMat jtj = jac.transpose() * jac;
      RVec jtr = jac.transpose() * rr;

      bool accepted = false;
      RVec step = RVec::Zero(dim);
      for (int attempt = 0; attempt < 25; ++attempt) {
        RMat lhs = jtj + lam * RMat::Identity(dim, dim);
        step = lhs.ldlt().solve(-jtr);
        if (!step.allFinite()) {
          lam *= 10;
          continue;
        }
        ResidualEval next = eval_partition(v + step, p, s, f, ts, cs);
        if (next.cost < cur.cost) {
          v += step;
          cur = std::move(next);
          lam = std::max(lam / 3.0, 1e-12);
          accepted = true;
          break;
        }
        lam *= 10;
      }
      if (!accepted || step.norm() < 1e-13) break;
    }

    double max_amp = 0;
    for (int jj = 0; jj < cur.amps.size(); ++jj)
      max_amp = std::max(max_amp, std::abs(cur.amps(jj)));
    if (max_amp > amp_guard) continue;  // degenerate basis columns

    if (!best.ok || cur.cost < best.cost) {
      best.ok = true;
      best.cost = cur.cost;
      best.gammas = cur.gammas;
      best.amps.assign(cur.amps.data(), cur.amps.data() + cur.amps.size());
    }
  }
  return best;
}

}  // namespace

BathCorrelation fit_exponentials(
    const std::vector<std::pair<double, cx>>& samples, int m,
    const FitOptions& options) {
  require(m >= 1, "fit_exponentials: M must be >= 1");
  require(static_cast<int>(samples.size()) >= 4 * m,
          "fit_exponentials: need at least 4M samples");
  const int n = static_cast<int>(samples.size());
  std::vector<double> ts(n);
  Vec cs(n);
  for (int i = 0; i < n; ++i) {
    ts[i] = samples[i].first;
    cs(i) = samples[i].second;
  }
  const double h0 = ts[1] - ts[0];
  require(h0 > 0, "fit_exponentials: samples must be on an increasing grid");
  for (int i = 1; i < n; ++i)
    require(std::abs((ts[i] - ts[i - 1]) - h0) <= 1e-9 * std::abs(h0),
            "fit_exponentials: samples must be on a uniform grid");

  GaussianStream rng(options.seed);
  struct Candidate {
    double cost;
    std::vector<cx> gammas, amps;
  };
  std::optional<Candidate> best;

  // Partitions: p mirrored pairs plus axis singles; one free pole iff M odd.
  for (int p = 0; p <= m / 2; ++p) {
    int rem = m - 2 * p;
    int f = (m % 2 == 0) ? 0 : 1;
    int s = rem - f;
    if (s < 0) continue;

    std::vector<cx> poles = pencil_poles(ts, std::vector<cx>(cs.data(), cs.data() + n),
                                         p + s + f);
    // assign pencil poles: largest |Re| to pairs, remainder to axis/free
    std::sort(poles.begin(), poles.end(),
              [](cx a, cx b) { return std::abs(a.real()) > std::abs(b.real()); });
    std::vector<cx> init_eta, init_free;
    std::vector<double> init_kap;
    for (int r = 0; r < p; ++r)
      init_eta.push_back(r < static_cast<int>(poles.size()) ? poles[r]
                                                            : cx(1.0, 0.5));
    for (int r = 0; r < s; ++r) {
      std::size_t idx = p + r;
      double kap = idx < poles.size() ? std::abs(poles[idx].imag()) : 1.0;
      init_kap.push_back(std::max(kap, 1e-2));
    }
    if (f) {
      std::size_t idx = p + s;
      init_free.push_back(idx < poles.size() ? poles[idx] : cx(1.0, 0.5));
    }

    PartitionFit got =
        fit_partition(ts, cs, p, s, f, init_eta, init_kap, init_free, options, rng);
    if (got.ok && (!best || got.cost < best->cost))
      best = Candidate{got.cost, got.gammas, got.amps};
  }

  if (!best)
    throw numerical_error(
        "fit_exponentials: no admissible candidate (all partitions degenerate)");

  // alpha~ from C*(t) with the shared exponents
  Mat phi(n, m);
  for (int i = 0; i < n; ++i)
    for (int jj = 0; jj < m; ++jj)
      phi(i, jj) = std::exp(cx(0, 1) * best->gammas[jj] * ts[i]);
  Eigen::JacobiSVD<Mat> svd(phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vec at = svd.solve(cs.conjugate());

  BathCorrelation corr;
  corr.residual_rms = std::sqrt(best->cost / n);
  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    cx ga = best->gammas[a], gb = best->gammas[b];
    if (ga.real() != gb.real()) return ga.real() < gb.real();
    return ga.imag() < gb.imag();
  });
  for (int i : order) {
    if (best->gammas[i].imag() <= 0)
      throw numerical_error("fit_exponentials: exponent violates Im gamma > 0");
    corr.terms.push_back({best->amps[i], at(i), best->gammas[i]});
  }

  if (corr.residual_rms > options.residual_ceiling) {
    std::ostringstream msg;
    msg << "fit_exponentials: residual RMS " << corr.residual_rms
        << " exceeds configured ceiling " << options.residual_ceiling;
    throw numerical_error(msg.str());
  }
  return corr;
}

ModeDiscretization discretize(const SpectralDensity& j, int n,
                              double omega_max) {
  require(n >= 1, "discretize: N must be >= 1");
  require(omega_max > 0, "discretize: omega_max must be > 0");
  ModeDiscretization out;
  double dw = omega_max / n;
  out.modes.reserve(n);
  for (int k = 1; k <= n; ++k) {
    double w = (k - 0.5) * dw;
    out.modes.emplace_back(std::sqrt(std::max(0.0, j.value(w)) * dw), w);
  }
  return out;
}

SpectralDensity load_tabulated_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("load_tabulated_csv: cannot open " + path);
  std::vector<std::pair<double, double>> table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double w, jw;
    if (!(row >> w >> jw)) {
      if (first) {
        first = false;  // header row
        continue;
      }
      throw io_error("load_tabulated_csv: malformed row: " + line);
    }
    first = false;
    table.emplace_back(w, jw);
  }
  if (table.empty()) throw io_error("load_tabulated_csv: no data rows");
  return SpectralDensity::tabulated(std::move(table));
}

}  // namespace ptgrad

#include "ptgrad/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "ptgrad/rng.hpp"

namespace ptgrad {

namespace {

SuperOp field_factor(const SuperOp& comm, const SuperOp& anti, cx xi, cx nu,
                     double dt) {
  SuperOp m = dt * (cx(0, 1) * xi * comm + cx(0, 0.5) * nu * anti);
  return m.exp();
}

struct TrajectoryFault {
  int traj = -1;
  int step = 0;
  double norm = 0.0;
};

void record_fault(TrajectoryFault& fault, int traj, int step, double norm) {
#pragma omp critical(ptgrad_stochastic_fault)
  if (fault.traj < 0 || traj < fault.traj) fault = {traj, step, norm};
}

[[noreturn]] void throw_fault(const TrajectoryFault& fault, double ceiling) {
  throw numerical_error(
      "stochastic trajectory " + std::to_string(fault.traj) +
      " exceeded the norm ceiling at step " + std::to_string(fault.step) +
      ": |rho| = " + std::to_string(fault.norm) + " > " +
      std::to_string(ceiling) + "; reduce dt or the propagation horizon");
}

}  // namespace

void NoiseEnsemble::validate() const {
  require(!realizations.empty(), "NoiseEnsemble: empty ensemble");
  require(t_steps >= 1, "NoiseEnsemble: t_steps must be >= 1");
  require(dt > 0, "NoiseEnsemble: dt must be positive");
  for (const NoiseRealization& r : realizations) {
    require(static_cast<int>(r.xi.size()) == t_steps &&
                static_cast<int>(r.nu.size()) == t_steps,
            "NoiseEnsemble: realization length mismatch");
    for (int k = 0; k < t_steps; ++k)
      require(std::isfinite(r.xi[k].real()) && std::isfinite(r.xi[k].imag()) &&
                  std::isfinite(r.nu[k].real()) && std::isfinite(r.nu[k].imag()),
              "NoiseEnsemble: non-finite field value");
  }
}

NoiseEnsemble sample_noise(const std::vector<cx>& c_grid, int n_traj,
                           double dt, int t_steps, std::uint64_t seed) {
  require(n_traj >= 1, "sample_noise: n_traj must be >= 1");
  require(t_steps >= 1, "sample_noise: t_steps must be >= 1");
  require(dt > 0, "sample_noise: dt must be positive");
  require(static_cast<int>(c_grid.size()) >= t_steps,
          "sample_noise: correlation grid shorter than t_steps");
  for (int m = 0; m < t_steps; ++m)
    require(std::isfinite(c_grid[m].real()) && std::isfinite(c_grid[m].imag()),
            "sample_noise: non-finite correlation value");

  const int t = t_steps;
  RMat r_gram(t, t);
  Mat k_cross = Mat::Zero(t, t);
  for (int k = 0; k < t; ++k)
    for (int l = 0; l < t; ++l) {
      r_gram(k, l) = c_grid[std::abs(k - l)].real();
      if (k > l)
        k_cross(k, l) = cx(0, 2) * c_grid[k - l].imag();
      else if (k == l)
        k_cross(k, l) = cx(0, 1) * c_grid[0].imag();  // theta(0) = 1/2
    }

  // H H^T = R by spectral square root; R is PSD up to roundoff because it
  // is a restriction of a genuine covariance.
  Eigen::SelfAdjointEigenSolver<RMat> eig(r_gram);
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const double lam_max = std::max(lam.maxCoeff(), 0.0);
  const double lam_min = lam.minCoeff();
  if (lam_min < -1e-8 * std::max(lam_max, 1.0))
    throw numerical_error(
        "sample_noise: correlation Gram matrix is not positive semidefinite "
        "(min eigenvalue " + std::to_string(lam_min) + ", residual " +
        std::to_string(-lam_min / std::max(lam_max, 1.0)) + " relative)");
  Eigen::VectorXd sq = lam.cwiseMax(0.0).cwiseSqrt();
  RMat h_factor = eig.eigenvectors() * sq.asDiagonal();

  double row_norm = 0.0;
  for (int k = 0; k < t; ++k) row_norm = std::max(row_norm, k_cross.row(k).norm());
  const double g = std::sqrt(row_norm / 2.0);
  Mat d_factor = Mat::Zero(t, t);
  if (g > 0) d_factor = k_cross / (2.0 * g);

  NoiseEnsemble ens;
  ens.seed = seed;
  ens.dt = dt;
  ens.t_steps = t;
  ens.realizations.resize(n_traj);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_traj; ++i) {
    GaussianStream rng(seed, static_cast<std::uint64_t>(i));
    Eigen::VectorXd s(t), u(t), v(t);
    for (int k = 0; k < t; ++k) s(k) = rng.normal();
    for (int k = 0; k < t; ++k) u(k) = rng.normal();
    for (int k = 0; k < t; ++k) v(k) = rng.normal();
    Vec uv = u.cast<cx>() - cx(0, 1) * v.cast<cx>();
    Vec xi = (h_factor * s).cast<cx>() + d_factor * uv;
    Vec nu = g * (u.cast<cx>() + cx(0, 1) * v.cast<cx>());
    NoiseRealization& out = ens.realizations[i];
    out.index = i;
    out.xi.assign(xi.data(), xi.data() + t);
    out.nu.assign(nu.data(), nu.data() + t);
  }
  return ens;
}

std::vector<SuperOp> trajectory_propagators(const NoiseRealization& noise,
                                            const QOperator& s_op, double dt) {
  require(noise.xi.size() == noise.nu.size(),
          "trajectory_propagators: field length mismatch");
  require(dt > 0, "trajectory_propagators: dt must be positive");
  SuperOp comm = commutator_superop(s_op);
  SuperOp anti = anticommutator_superop(s_op);
  std::vector<SuperOp> props;
  props.reserve(noise.xi.size());
  for (std::size_t k = 0; k < noise.xi.size(); ++k)
    props.push_back(field_factor(comm, anti, noise.xi[k], noise.nu[k], dt));
  return props;
}

ProcessTensor stochastic_pt(const NoiseEnsemble& ensemble,
                            const QOperator& s_op, double dt) {
  ensemble.validate();
  require(std::abs(ensemble.dt - dt) <= 1e-12 * std::max(1.0, dt),
          "stochastic_pt: dt differs from the ensemble grid");
  const int n = ensemble.count();
  const int t = ensemble.t_steps;
  const int sdim = static_cast<int>(ensemble.realizations.empty()
                                        ? 0
                                        : s_op.data.rows());
  const int l = sdim * sdim;
  SuperOp comm = commutator_superop(s_op);
  SuperOp anti = anticommutator_superop(s_op);

  std::vector<PtNodeBuffer> bufs;
  bufs.reserve(t);
  if (t == 1) {
    bufs.push_back(PtNodeBuffer::dense(1, 1, l));
  } else {
    bufs.push_back(PtNodeBuffer::dense(n, 1, l));
    for (int k = 1; k < t - 1; ++k)
      bufs.push_back(PtNodeBuffer::bond_diagonal(n, l));
    bufs.push_back(PtNodeBuffer::dense(1, n, l));
  }

  if (t == 1) {
    // Single node is both weight and summation: the uniform average itself.
    for (int x = 0; x < n; ++x) {
      const NoiseRealization& r = ensemble.realizations[x];
      SuperOp u = field_factor(comm, anti, r.xi[0], r.nu[0], dt);
      for (int m = 0; m < l; ++m)
        for (int v = 0; v < l; ++v)
          bufs[0].dense_at(0, 0, m, v) += u(m, v) / double(n);
    }
  } else {
#pragma omp parallel for schedule(static)
    for (int x = 0; x < n; ++x) {
      const NoiseRealization& r = ensemble.realizations[x];
      for (int k = 0; k < t; ++k) {
        SuperOp u = field_factor(comm, anti, r.xi[k], r.nu[k], dt);
        if (k == 0)
          for (int m = 0; m < l; ++m)
            for (int v = 0; v < l; ++v)
              bufs[0].dense_at(x, 0, m, v) = u(m, v) / double(n);
        else if (k == t - 1)
          for (int m = 0; m < l; ++m)
            for (int v = 0; v < l; ++v) bufs[k].dense_at(0, x, m, v) = u(m, v);
        else
          for (int m = 0; m < l; ++m)
            for (int v = 0; v < l; ++v) bufs[k].diag_at(x, m, v) = u(m, v);
      }
    }
  }

  ProcessTensor pt;
  pt.system_dim = sdim;
  pt.dt = dt;
  pt.metadata = "stochastic n=" + std::to_string(n) +
                " seed=" + std::to_string(ensemble.seed);
  for (auto& buf : bufs) pt.nodes.push_back(std::move(buf).freeze());
  pt.bond_caps.push_back(Vec::Ones(1));
  for (int k = 1; k < t; ++k) pt.bond_caps.push_back(Vec::Ones(n));
  pt.bond_caps.push_back(Vec::Ones(1));
  pt.validate();
  return pt;
}

std::vector<DensityVec> stochastic_dynamics(const NoiseEnsemble& ensemble,
                                            const QOperator& s_op,
                                            const std::vector<SuperOp>& sys_props,
                                            const DensityVec& rho0,
                                            double norm_ceiling) {
  ensemble.validate();
  const int n = ensemble.count();
  const int t = ensemble.t_steps;
  const int l = static_cast<int>(rho0.data.size());
  require(static_cast<int>(sys_props.size()) == t,
          "stochastic_dynamics: need one system propagator per step");
  require(norm_ceiling > 1, "stochastic_dynamics: norm ceiling must exceed 1");
  SuperOp comm = commutator_superop(s_op);
  SuperOp anti = anticommutator_superop(s_op);
  require(comm.rows() == l, "stochastic_dynamics: dimension mismatch");
  const double ceiling = norm_ceiling * std::max(rho0.data.norm(), 1e-300);

  // Per-trajectory paths in fixed-size blocks: concurrent propagation,
  // strictly ordered reduction (bitwise reproducible at any thread count).
  const int block = 256;
  Mat sums = Mat::Zero(l, t + 1);
  std::vector<Mat> paths(std::min(block, n));
  TrajectoryFault fault;
  for (int base = 0; base < n; base += block) {
    const int count = std::min(block, n - base);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < count; ++j) {
      const NoiseRealization& r = ensemble.realizations[base + j];
      Mat path(l, t + 1);
      Vec rho = rho0.data;
      path.col(0) = rho;
      for (int k = 0; k < t; ++k) {
        rho = field_factor(comm, anti, r.xi[k], r.nu[k], ensemble.dt) *
              (sys_props[k] * rho);
        path.col(k + 1) = rho;
        const double norm = rho.norm();
        if (!(norm <= ceiling)) {
          record_fault(fault, base + j, k + 1, norm);
          break;
        }
      }
      paths[j] = std::move(path);
    }
    if (fault.traj >= 0) throw_fault(fault, ceiling);
    for (int j = 0; j < count; ++j) sums += paths[j];
  }

  std::vector<DensityVec> out;
  out.reserve(t + 1);
  for (int k = 0; k <= t; ++k)
    out.push_back(DensityVec{Vec(sums.col(k) / double(n))});
  return out;
}

BatchEstimate batch_observable(const NoiseEnsemble& ensemble,
                               const QOperator& s_op,
                               const std::vector<SuperOp>& sys_props,
                               const DensityVec& rho0, const Mat& obs,
                               int n_batches, double norm_ceiling) {
  ensemble.validate();
  const int n = ensemble.count();
  const int t = ensemble.t_steps;
  require(n_batches >= 2, "batch_observable: need at least two batches");
  require(n >= n_batches, "batch_observable: fewer trajectories than batches");
  require(static_cast<int>(sys_props.size()) == t,
          "batch_observable: need one system propagator per step");
  SuperOp comm = commutator_superop(s_op);
  SuperOp anti = anticommutator_superop(s_op);
  const double ceiling = norm_ceiling * std::max(rho0.data.norm(), 1e-300);

  std::vector<double> vals(n);
  TrajectoryFault fault;
#pragma omp parallel for schedule(static)
  for (int x = 0; x < n; ++x) {
    const NoiseRealization& r = ensemble.realizations[x];
    Vec rho = rho0.data;
    for (int k = 0; k < t; ++k) {
      rho = field_factor(comm, anti, r.xi[k], r.nu[k], ensemble.dt) *
            (sys_props[k] * rho);
      const double norm = rho.norm();
      if (!(norm <= ceiling)) {
        record_fault(fault, x, k + 1, norm);
        break;
      }
    }
    vals[x] = expectation(obs, DensityVec{rho});
  }
  if (fault.traj >= 0) throw_fault(fault, ceiling);

  const int b = n_batches;
  std::vector<double> means(b, 0.0);
  for (int i = 0; i < b; ++i) {
    const int lo = static_cast<int>(std::int64_t(n) * i / b);
    const int hi = static_cast<int>(std::int64_t(n) * (i + 1) / b);
    double acc = 0.0;
    for (int x = lo; x < hi; ++x) acc += vals[x];
    means[i] = acc / double(hi - lo);
  }
  BatchEstimate est;
  for (double m : means) est.mean += m;
  est.mean /= b;
  double var = 0.0;
  for (double m : means) var += (m - est.mean) * (m - est.mean);
  est.se = std::sqrt(var / (double(b) * double(b - 1)));
  return est;
}

}  // namespace ptgrad

#include "ptgrad/ttm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "ptgrad/liouville.hpp"

namespace ptgrad {

namespace {

// Trace preservation in vectorized form: E^T vec(I) = vec(I).
double trace_defect(const SuperOp& e) {
  const int l = static_cast<int>(e.rows());
  const int s = static_cast<int>(std::lround(std::sqrt(double(l))));
  Vec tr = Vec::Zero(l);
  for (int i = 0; i < s; ++i) tr(i * s + i) = cx(1, 0);
  return (e.transpose() * tr - tr).cwiseAbs().maxCoeff();
}

void check_square_consistent(const std::vector<SuperOp>& ops, const char* who) {
  require(!ops.empty(), "transfer tensors: empty operator list");
  const long l = ops.front().rows();
  const int s = static_cast<int>(std::lround(std::sqrt(double(l))));
  require(long(s) * s == l, "transfer tensors: dimension is not a perfect square");
  for (const SuperOp& op : ops) {
    if (op.rows() != l || op.cols() != l)
      throw config_error(std::string(who) + ": inconsistent operator dimensions");
    if (!op.allFinite())
      throw numerical_error(std::string(who) + ": non-finite operator entries");
  }
}

}  // namespace

void DynamicalMapSeq::validate() const {
  check_square_consistent(maps, "DynamicalMapSeq");
  require(dt > 0, "DynamicalMapSeq: dt must be > 0");
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const double defect = trace_defect(maps[k]);
    if (defect > 1e-8)
      throw numerical_error("DynamicalMapSeq: map " + std::to_string(k + 1) +
                            " is not trace-preserving; defect " +
                            std::to_string(defect));
  }
}

void TransferTensorSet::validate() const {
  check_square_consistent(tensors, "TransferTensorSet");
  require(cutoff == static_cast<int>(tensors.size()),
          "TransferTensorSet: cutoff must equal the tensor count");
  require(dt > 0, "TransferTensorSet: dt must be > 0");
}

DynamicalMapSeq maps_from_pt(const ProcessTensor& pt, const SuperOp& fixed_prop) {
  pt.validate();
  const int l = pt.ldim();
  require(fixed_prop.rows() == l && fixed_prop.cols() == l,
          "maps_from_pt: propagator dimension does not match the PT");
  const int t = pt.steps();
  std::vector<SuperOp> maps(t, SuperOp::Zero(l, l));
  std::vector<SuperOp> props(t, fixed_prop);
  for (int c = 0; c < l; ++c) {
    Vec e = Vec::Zero(l);
    e(c) = cx(1, 0);
    DensityVec rho0;
    rho0.data = e;
    auto traj = reduced_trajectory(pt, props, rho0);
    for (int k = 1; k <= t; ++k) maps[k - 1].col(c) = traj[k].data;
  }
  DynamicalMapSeq out;
  out.maps = std::move(maps);
  out.dt = pt.dt;
  out.provenance.source = pt.metadata;
  out.provenance.system_step = fixed_prop;
  out.validate();
  return out;
}

TransferTensorSet extract(const DynamicalMapSeq& maps, int t_c) {
  maps.validate();
  require(t_c >= 1, "extract: cutoff must be >= 1");
  require(t_c <= maps.count(),
          "extract: cutoff exceeds the training horizon");
  std::vector<SuperOp> tensors;
  tensors.reserve(t_c);
  for (int k = 1; k <= t_c; ++k) {
    SuperOp t_k = maps.maps[k - 1];
    for (int m = 1; m < k; ++m) t_k -= tensors[m - 1] * maps.maps[k - m - 1];
    tensors.push_back(std::move(t_k));
  }
  TransferTensorSet out;
  out.tensors = std::move(tensors);
  out.cutoff = t_c;
  out.dt = maps.dt;
  out.provenance = maps.provenance;
  out.validate();
  return out;
}

std::vector<DensityVec> propagate(const TransferTensorSet& tts,
                                  const DensityVec& rho0, int steps) {
  tts.validate();
  require(steps >= 1, "propagate: steps must be >= 1");
  const long l = tts.tensors.front().rows();
  require(rho0.data.size() == l,
          "propagate: state dimension does not match the tensors");
  std::vector<DensityVec> out;
  out.reserve(steps + 1);
  out.push_back(rho0);
  for (int k = 0; k < steps; ++k) {
    Vec next = Vec::Zero(l);
    const int j_lo = std::max(0, k - tts.cutoff + 1);
    for (int j = j_lo; j <= k; ++j)
      next += tts.tensors[k - j] * out[j].data;
    DensityVec d;
    d.data = std::move(next);
    out.push_back(std::move(d));
  }
  return out;
}

void require_trained_step(const TransferTensorSet& tts,
                          const SuperOp& system_step, double tol) {
  tts.validate();
  const SuperOp& trained = tts.provenance.system_step;
  require(trained.size() > 0,
          "require_trained_step: the tensor set carries no training propagator");
  if (system_step.rows() != trained.rows() ||
      system_step.cols() != trained.cols() ||
      (system_step - trained).cwiseAbs().maxCoeff() >
          tol * std::max(1.0, trained.cwiseAbs().maxCoeff()))
    throw config_error(
        "transfer tensors were trained for a different system propagator; "
        "re-extract them for the new system Hamiltonian");
}

Vec adjoint_rho0_gradient(const TransferTensorSet& tts,
                          const Vec& terminal_weight, int steps) {
  tts.validate();
  require(steps >= 1, "adjoint_rho0_gradient: steps must be >= 1");
  const long l = tts.tensors.front().rows();
  require(terminal_weight.size() == l,
          "adjoint_rho0_gradient: weight dimension does not match the tensors");
  // lambda_j = sum_{m=1}^{min(T_C, steps-j)} T_m^T lambda_{j+m}
  std::vector<Vec> lambda(steps + 1, Vec::Zero(l));
  lambda[steps] = terminal_weight;
  for (int j = steps - 1; j >= 0; --j) {
    const int m_hi = std::min(tts.cutoff, steps - j);
    for (int m = 1; m <= m_hi; ++m)
      lambda[j] += tts.tensors[m - 1].transpose() * lambda[j + m];
  }
  return lambda[0];
}

void write_transfer_norms_csv(const std::string& path,
                              const TransferTensorSet& tts) {
  tts.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("write_transfer_norms_csv: cannot open " + path);
  out << "k,frobenius_norm\n";
  char buf[48];
  for (std::size_t k = 0; k < tts.tensors.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k + 1,
                  tts.tensors[k].norm());
    out << buf;
  }
  if (!out) throw io_error("write_transfer_norms_csv: write failed for " + path);
}

}  // namespace ptgrad

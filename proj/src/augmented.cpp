#include "ptgrad/augmented.hpp"

#include <cmath>
#include <string>

#include <unsupported/Eigen/KroneckerProduct>

#include "ptgrad/kernels.hpp"

namespace ptgrad {

namespace {

Mat lowering(int d) {
  Mat b = Mat::Zero(d, d);
  for (int i = 0; i + 1 < d; ++i) b(i, i + 1) = std::sqrt(double(i + 1));
  return b;
}

// Lowering operator of mode `which` embedded in the joint Fock space.
Mat embedded_lowering(const AuxiliaryModel& model, int which) {
  Mat op = Mat::Identity(1, 1);
  for (int i = 0; i < static_cast<int>(model.modes.size()); ++i) {
    Mat factor = (i == which) ? lowering(model.modes[i].d)
                              : Mat(Mat::Identity(model.modes[i].d,
                                                  model.modes[i].d));
    op = Eigen::kroneckerProduct(op, factor).eval();
  }
  return op;
}

// Joint-step superoperator exp((L_A + L_SA) dt) on the system (x) modes
// Liouville space, exponentiated jointly for accuracy.
SuperOp joint_step(const AuxiliaryModel& model, const QOperator& s_op,
                   double dt) {
  const int sdim = static_cast<int>(s_op.data.rows());
  const int fd = model.fock_dim();
  Mat eye_s = Mat::Identity(sdim, sdim);

  Mat coupling = Mat::Zero(fd, fd);
  Mat mode_h = Mat::Zero(fd, fd);
  std::vector<QOperator> jumps;
  std::vector<double> rates;
  for (int i = 0; i < static_cast<int>(model.modes.size()); ++i) {
    const auto& mode = model.modes[i];
    Mat b = embedded_lowering(model, i);
    coupling += mode.g * (b + b.adjoint());
    mode_h += mode.omega0 * (b.adjoint() * b);
    if (mode.kappa > 0) {
      jumps.emplace_back(Mat(Eigen::kroneckerProduct(eye_s, b)));
      rates.push_back(mode.kappa);
    }
  }
  Mat h_joint = Eigen::kroneckerProduct(eye_s, mode_h) +
                Eigen::kroneckerProduct(s_op.data, coupling);
  SuperOp gen = hamiltonian_superop(QOperator(h_joint));
  if (!jumps.empty()) gen += lindblad_superop(jumps, rates);
  return step_propagator(gen, dt);
}

// Reshape the joint superoperator into node layout: chi indices carry the
// mode Liouville pair, mu/nu the system pair; vec convention (row, col) ->
// row*dim + col throughout.
PtNode reshape_to_node(const SuperOp& u, int sdim, int fd) {
  const int l = sdim * sdim;
  const int a = fd * fd;
  const int n = sdim * fd;
  auto buf = PtNodeBuffer::dense(a, a, l);
  for (int ar = 0; ar < fd; ++ar)
    for (int ac = 0; ac < fd; ++ac)
      for (int br = 0; br < fd; ++br)
        for (int bc = 0; bc < fd; ++bc)
          for (int sr2 = 0; sr2 < sdim; ++sr2)
            for (int sc2 = 0; sc2 < sdim; ++sc2)
              for (int sr = 0; sr < sdim; ++sr)
                for (int sc = 0; sc < sdim; ++sc) {
                  const int row = (sr2 * fd + ar) * n + (sc2 * fd + ac);
                  const int col = (sr * fd + br) * n + (sc * fd + bc);
                  buf.dense_at(ar * fd + ac, br * fd + bc, sr2 * sdim + sc2,
                               sr * sdim + sc) = u(row, col);
                }
  return std::move(buf).freeze();
}

Vec mode_trace_vector(int fd) {
  Vec t = Vec::Zero(fd * fd);
  for (int ar = 0; ar < fd; ++ar) t(ar * fd + ar) = cx(1, 0);
  return t;
}

}  // namespace

int AuxiliaryModel::fock_dim() const {
  int d = 1;
  for (const Mode& m : modes) d *= m.d;
  return d;
}

int AuxiliaryModel::aux_liouville() const {
  const int d = fock_dim();
  return d * d;
}

void AuxiliaryModel::validate() const {
  require(!modes.empty(), "AuxiliaryModel: no modes");
  for (const Mode& m : modes) {
    require(m.d >= 1, "AuxiliaryModel: Fock truncation must be >= 1");
    require(m.kappa >= 0, "AuxiliaryModel: decay rate must be >= 0");
    require(std::isfinite(m.g) && std::isfinite(m.omega0) &&
                std::isfinite(m.kappa),
            "AuxiliaryModel: non-finite mode parameter");
  }
}

AuxiliaryModel from_lorentzian(const SpectralDensity& j, int d) {
  require(j.kind == SpectralDensity::Kind::Lorentzian,
          "from_lorentzian: spectral density is not lorentzian");
  require(d >= 1, "from_lorentzian: Fock truncation must be >= 1");
  AuxiliaryModel model;
  model.modes.push_back({j.lambda, j.omega0, j.kappa, d});
  return model;
}

PtNode augmented_step_tensor(const AuxiliaryModel& model, const QOperator& s_op,
                             double dt) {
  model.validate();
  require(dt > 0, "augmented_step_tensor: dt must be positive");
  const int sdim = static_cast<int>(s_op.data.rows());
  return reshape_to_node(joint_step(model, s_op, dt), sdim, model.fock_dim());
}

ProcessTensor augmented_pt(const AuxiliaryModel& model, const QOperator& s_op,
                           double dt, int t_steps) {
  require(t_steps >= 1, "augmented_pt: t_steps must be >= 1");
  PtNode full = augmented_step_tensor(model, s_op, dt);
  const int sdim = static_cast<int>(s_op.data.rows());
  const int l = sdim * sdim;
  const int fd = model.fock_dim();
  const int a = fd * fd;
  Vec trace_vec = mode_trace_vector(fd);

  ProcessTensor pt;
  pt.system_dim = sdim;
  pt.dt = dt;
  pt.metadata = "augmented modes=" + std::to_string(model.modes.size()) +
                " fock=" + std::to_string(fd);

  if (t_steps == 1) {
    auto buf = PtNodeBuffer::dense(1, 1, l);
    for (int m = 0; m < l; ++m)
      for (int v = 0; v < l; ++v)
        for (int ar = 0; ar < fd; ++ar)
          buf.dense_at(0, 0, m, v) += full.at(ar * fd + ar, 0, m, v);
    pt.nodes.push_back(std::move(buf).freeze());
  } else {
    auto first = PtNodeBuffer::dense(a, 1, l);
    for (int o = 0; o < a; ++o)
      for (int m = 0; m < l; ++m)
        for (int v = 0; v < l; ++v)
          first.dense_at(o, 0, m, v) = full.at(o, 0, m, v);  // vacuum pair = 0
    auto last = PtNodeBuffer::dense(1, a, l);
    for (int i = 0; i < a; ++i)
      for (int m = 0; m < l; ++m)
        for (int v = 0; v < l; ++v) {
          cx acc(0, 0);
          for (int ar = 0; ar < fd; ++ar) acc += full.at(ar * fd + ar, i, m, v);
          last.dense_at(0, i, m, v) = acc;
        }
    pt.nodes.push_back(std::move(first).freeze());
    if (t_steps > 2) {
      pt.nodes.resize(t_steps - 1, full);  // shared interior node
    }
    pt.nodes.push_back(std::move(last).freeze());
  }

  pt.bond_caps.push_back(Vec::Ones(1));
  for (int k = 1; k < t_steps; ++k) pt.bond_caps.push_back(trace_vec);
  pt.bond_caps.push_back(Vec::Ones(1));
  pt.validate();
  return pt;
}

double fock_edge_population(const Mat& sigma, int sdim,
                            const AuxiliaryModel& model) {
  const int fd = model.fock_dim();
  require(sigma.rows() == sdim * sdim && sigma.cols() == fd * fd,
          "fock_edge_population: extended state shape mismatch");
  const int n_modes = static_cast<int>(model.modes.size());
  double worst = 0.0;
  for (int i = 0; i < n_modes; ++i) {
    // Stride decoding of mode i's digit in the joint Fock index.
    int stride = 1;
    for (int j = i + 1; j < n_modes; ++j) stride *= model.modes[j].d;
    const int di = model.modes[i].d;
    double pop = 0.0;
    for (int a = 0; a < fd; ++a) {
      if ((a / stride) % di != di - 1) continue;
      for (int s = 0; s < sdim; ++s)
        pop += sigma(s * sdim + s, a * fd + a).real();
    }
    worst = std::max(worst, std::abs(pop));
  }
  return worst;
}

std::vector<DensityVec> augmented_dynamics(const AuxiliaryModel& model,
                                           const QOperator& s_op,
                                           const std::vector<SuperOp>& sys_props,
                                           const DensityVec& rho0, double dt,
                                           double edge_tol) {
  model.validate();
  const int sdim = static_cast<int>(s_op.data.rows());
  const int l = sdim * sdim;
  const int fd = model.fock_dim();
  const int a = fd * fd;
  require(rho0.data.size() == l, "augmented_dynamics: rho0 dimension mismatch");
  PtNode full = augmented_step_tensor(model, s_op, dt);
  Vec trace_vec = mode_trace_vector(fd);

  Mat sigma = Mat::Zero(l, a);
  sigma.col(0) = rho0.data;  // vacuum mode pair is index 0

  std::vector<DensityVec> out;
  out.reserve(sys_props.size() + 1);
  out.push_back(DensityVec{Vec(sigma * trace_vec)});
  for (std::size_t k = 0; k < sys_props.size(); ++k) {
    Mat phi = sys_props[k] * sigma;
    Mat next(l, a);
    kernels::forward_dense(full.data->data(), a, a, l, phi.data(),
                           next.data());
    sigma = std::move(next);
    if (!sigma.allFinite())
      throw numerical_error("augmented_dynamics: non-finite state after step " +
                            std::to_string(k + 1));
    const double edge = fock_edge_population(sigma, sdim, model);
    if (edge > edge_tol)
      throw numerical_error(
          "augmented_dynamics: Fock truncation edge population " +
          std::to_string(edge) + " exceeds " + std::to_string(edge_tol) +
          " at step " + std::to_string(k + 1) + "; increase d");
    out.push_back(DensityVec{Vec(sigma * trace_vec)});
  }
  return out;
}

}  // namespace ptgrad

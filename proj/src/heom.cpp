#include "ptgrad/heom.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "ptgrad/liouville.hpp"

namespace ptgrad {

namespace {

constexpr int kMaxAux = 4096;  // dense extended generators stop being viable

int find_index(const std::vector<std::vector<int>>& list,
               const std::vector<int>& n) {
  // graded-lex order; linear scan is fine at these sizes
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i] == n) return static_cast<int>(i);
  return -1;
}

}  // namespace

int HierarchySpace::raised(int id, int k) const {
  std::vector<int> n = index_list[id];
  int total = 0;
  for (int v : n) total += v;
  if (total + 1 > depth) return -1;
  n[k] += 1;
  return find_index(index_list, n);
}

int HierarchySpace::lowered(int id, int k) const {
  std::vector<int> n = index_list[id];
  if (n[k] == 0) return -1;
  n[k] -= 1;
  return find_index(index_list, n);
}

HierarchySpace make_hierarchy(int m, int depth) {
  require(m >= 0, "make_hierarchy: m must be >= 0");
  require(depth >= 0, "make_hierarchy: depth must be >= 0");
  HierarchySpace h;
  h.m = m;
  h.depth = depth;
  if (m == 0) {
    h.index_list.push_back({});
    return h;
  }
  std::vector<int> cur(m, 0);
  auto rec = [&](auto&& self, int slot, int remaining) -> void {
    if (slot == m - 1) {
      cur[slot] = remaining;
      h.index_list.push_back(cur);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      cur[slot] = v;
      self(self, slot + 1, remaining - v);
    }
  };
  for (int total = 0; total <= depth; ++total) rec(rec, 0, total);
  if (h.n_aux() > kMaxAux)
    throw config_error("make_hierarchy: hierarchy exceeds " +
                       std::to_string(kMaxAux) + " auxiliary indices");
  return h;
}

ExtendedGenerator build_generator(const BathCorrelation& corr,
                                  const QOperator& s_op, int depth) {
  require(depth >= 0, "build_generator: depth must be >= 0");
  for (const auto& term : corr.terms)
    require(term.gamma.imag() > 0,
            "build_generator: every exponent needs Im gamma > 0");
  const int m = corr.count();
  const int s = s_op.dim();
  const int l = s * s;

  ExtendedGenerator gen;
  gen.hierarchy = make_hierarchy(m, depth);
  gen.ldim = l;
  const int n_aux = gen.hierarchy.n_aux();
  const long big = long(n_aux) * l;
  gen.l_int = Mat::Zero(big, big);

  const Mat comm = commutator_superop(s_op);  // S x I - I x S^T
  const Mat s_left = Eigen::kroneckerProduct(s_op.data, Mat::Identity(s, s));
  const Mat s_right =
      Eigen::kroneckerProduct(Mat::Identity(s, s), s_op.data.transpose());

  for (int id = 0; id < n_aux; ++id) {
    const auto& n = gen.hierarchy.index_list[id];
    cx ng(0, 0);
    for (int k = 0; k < m; ++k) ng += double(n[k]) * corr.terms[k].gamma;
    gen.l_int.block(long(id) * l, long(id) * l, l, l) =
        cx(0, 1) * ng * Mat::Identity(l, l);
    for (int k = 0; k < m; ++k) {
      int up = gen.hierarchy.raised(id, k);
      if (up >= 0)
        gen.l_int.block(long(id) * l, long(up) * l, l, l) -= cx(0, 1) * comm;
      int down = gen.hierarchy.lowered(id, k);
      if (down >= 0)
        gen.l_int.block(long(id) * l, long(down) * l, l, l) -=
            cx(0, 1) * double(n[k]) *
            (corr.terms[k].alpha * s_left -
             corr.terms[k].alpha_tilde * s_right);
    }
  }
  return gen;
}

namespace {

Mat environment_step(const ExtendedGenerator& gen, double dt) {
  require(dt > 0, "heom: dt must be positive");
  Mat e = (gen.l_int * dt).exp();
  if (!e.allFinite()) {
    Eigen::ComplexEigenSolver<Mat> es(gen.l_int, false);
    double abscissa = es.eigenvalues().real().maxCoeff();
    throw numerical_error(
        "heom: exponential overflow (unstable truncation); spectral "
        "abscissa = " +
        std::to_string(abscissa));
  }
  return e;
}

}  // namespace

ProcessTensor heom_pt(const ExtendedGenerator& gen, double dt, int t_steps) {
  require(t_steps > 0, "heom_pt: need at least one step");
  const int l = gen.ldim;
  const int n_aux = gen.hierarchy.n_aux();
  Mat e = environment_step(gen, dt);

  auto slice = [&](int co, int row0, int ci, int col0) {
    PtNodeBuffer buf = PtNodeBuffer::dense(co, ci, l);
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < ci; ++i)
        for (int mu = 0; mu < l; ++mu)
          for (int v = 0; v < l; ++v)
            buf.dense_at(o, i, mu, v) =
                e(long(row0 + o) * l + mu, long(col0 + i) * l + v);
    return std::move(buf).freeze();
  };

  ProcessTensor pt;
  pt.system_dim = static_cast<int>(std::lround(std::sqrt(double(l))));
  pt.dt = dt;
  pt.metadata = "heom M=" + std::to_string(gen.hierarchy.m) +
                " depth=" + std::to_string(gen.hierarchy.depth);
  if (t_steps == 1) {
    pt.nodes.push_back(slice(1, 0, 1, 0));
  } else {
    pt.nodes.push_back(slice(n_aux, 0, 1, 0));  // initial cap: |n=0>
    PtNode interior = slice(n_aux, 0, n_aux, 0);
    for (int k = 1; k + 1 < t_steps; ++k) pt.nodes.push_back(interior);
    pt.nodes.push_back(slice(1, 0, n_aux, 0));  // final cap: <n=0|
  }
  pt.bond_caps.assign(t_steps + 1, Vec());
  pt.bond_caps.front() = Vec::Ones(1);
  pt.bond_caps.back() = Vec::Ones(1);
  for (int k = 1; k < t_steps; ++k) {
    Vec cap = Vec::Zero(n_aux);
    cap(0) = cx(1, 0);
    pt.bond_caps[k] = cap;
  }
  pt.validate();
  return pt;
}

std::vector<DensityVec> heom_solve(const ExtendedGenerator& gen,
                                   const std::vector<SuperOp>& props,
                                   const DensityVec& rho0, double dt) {
  const int l = gen.ldim;
  require(rho0.data.size() == l, "heom_solve: rho0 dimension mismatch");
  const int n_aux = gen.hierarchy.n_aux();
  Mat e = environment_step(gen, dt);

  Vec y = Vec::Zero(long(n_aux) * l);
  y.head(l) = rho0.data;
  std::vector<DensityVec> out;
  out.reserve(props.size() + 1);
  out.push_back(DensityVec{Vec(y.head(l))});
  for (std::size_t k = 0; k < props.size(); ++k) {
    require(props[k].rows() == l && props[k].cols() == l,
            "heom_solve: propagator dimension mismatch");
    for (int b = 0; b < n_aux; ++b)
      y.segment(long(b) * l, l) = props[k] * y.segment(long(b) * l, l);
    y = e * y;
    if (!y.allFinite())
      throw numerical_error("heom_solve: non-finite state after step " +
                            std::to_string(k + 1));
    out.push_back(DensityVec{Vec(y.head(l))});
  }
  return out;
}

}  // namespace ptgrad

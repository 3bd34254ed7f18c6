#include "ptgrad/ptmpo.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ptgrad/kernels.hpp"

namespace ptgrad {

namespace {

// densified bond-diagonal nodes and saved tensors above this are refused
constexpr std::size_t kDensifyLimit = std::size_t(1) << 25;  // 512 MiB of cx

std::size_t dense_index(int o, int m, int i, int v, int ci, int l) {
  return ((std::size_t(o) * l + m) * ci + i) * l + v;
}

}  // namespace

PtNode PtNode::dense(int chi_out, int chi_in, int ldim) {
  require(chi_out > 0 && chi_in > 0 && ldim > 0, "PtNode: bad dimensions");
  PtNode n;
  n.kind = Kind::Dense;
  n.chi_out = chi_out;
  n.chi_in = chi_in;
  n.ldim = ldim;
  n.data = std::make_shared<const std::vector<cx>>(
      std::size_t(chi_out) * chi_in * ldim * ldim);
  return n;
}

PtNode PtNode::bond_diagonal(int chi, int ldim) {
  require(chi > 0 && ldim > 0, "PtNode: bad dimensions");
  PtNode n;
  n.kind = Kind::BondDiagonal;
  n.chi_out = n.chi_in = chi;
  n.ldim = ldim;
  n.data = std::make_shared<const std::vector<cx>>(std::size_t(chi) * ldim *
                                                   ldim);
  return n;
}

cx PtNode::at(int o, int i, int m, int v) const {
  if (kind == Kind::BondDiagonal)
    return o == i ? (*data)[(std::size_t(o) * ldim + m) * ldim + v] : cx(0, 0);
  return (*data)[dense_index(o, m, i, v, chi_in, ldim)];
}

PtNodeBuffer PtNodeBuffer::dense(int chi_out, int chi_in, int ldim) {
  PtNodeBuffer b{PtNode::Kind::Dense, chi_out, chi_in, ldim, {}};
  b.data.assign(std::size_t(chi_out) * chi_in * ldim * ldim, cx(0, 0));
  return b;
}

PtNodeBuffer PtNodeBuffer::bond_diagonal(int chi, int ldim) {
  PtNodeBuffer b{PtNode::Kind::BondDiagonal, chi, chi, ldim, {}};
  b.data.assign(std::size_t(chi) * ldim * ldim, cx(0, 0));
  return b;
}

cx& PtNodeBuffer::dense_at(int o, int i, int m, int v) {
  return data[dense_index(o, m, i, v, chi_in, ldim)];
}

cx& PtNodeBuffer::diag_at(int x, int m, int v) {
  return data[(std::size_t(x) * ldim + m) * ldim + v];
}

PtNode PtNodeBuffer::freeze() && {
  PtNode n;
  n.kind = kind;
  n.chi_out = chi_out;
  n.chi_in = chi_in;
  n.ldim = ldim;
  n.data = std::make_shared<const std::vector<cx>>(std::move(data));
  return n;
}

void ProcessTensor::validate() const {
  require(system_dim > 0, "ProcessTensor: system_dim must be positive");
  require(dt > 0 || nodes.empty(), "ProcessTensor: dt must be positive");
  require(std::isfinite(dt), "ProcessTensor: dt must be finite");
  const int l = ldim();
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const PtNode& n = nodes[k];
    require(n.ldim == l, "ProcessTensor: node ldim mismatch");
    require(n.data != nullptr, "ProcessTensor: node without data");
    if (k == 0) require(n.chi_in == 1, "ProcessTensor: chi_in of node 0 != 1");
    if (k + 1 == nodes.size())
      require(n.chi_out == 1, "ProcessTensor: chi_out of last node != 1");
    if (k > 0)
      require(n.chi_in == nodes[k - 1].chi_out,
              "ProcessTensor: bond dimension chain broken");
  }
  if (!bond_caps.empty()) {
    require(bond_caps.size() == nodes.size() + 1,
            "ProcessTensor: wrong number of bond caps");
    for (std::size_t k = 0; k < bond_caps.size(); ++k) {
      int chi = k == 0 ? 1 : nodes[k - 1].chi_out;
      require(bond_caps[k].size() == chi,
              "ProcessTensor: bond cap size mismatch");
    }
  }
}

ProcessTensor identity_pt(int system_dim, int steps, double dt) {
  require(system_dim > 0, "identity_pt: system_dim must be positive");
  require(steps >= 0, "identity_pt: steps must be >= 0");
  const int l = system_dim * system_dim;
  ProcessTensor pt;
  pt.system_dim = system_dim;
  pt.dt = dt;
  pt.metadata = "identity";
  if (steps > 0) {
    auto buf = PtNodeBuffer::dense(1, 1, l);
    for (int m = 0; m < l; ++m) buf.dense_at(0, 0, m, m) = cx(1, 0);
    PtNode node = std::move(buf).freeze();
    pt.nodes.assign(steps, node);  // shared data, nodes are immutable
  }
  pt.bond_caps.assign(steps + 1, Vec::Ones(1));
  return pt;
}

ForwardResult contract_forward(const ProcessTensor& pt,
                               const std::vector<SuperOp>& props,
                               const DensityVec& rho0) {
  pt.validate();
  const int l = pt.ldim();
  require(static_cast<int>(props.size()) == pt.steps(),
          "contract_forward: need one propagator per step");
  require(rho0.data.size() == l, "contract_forward: rho0 dimension mismatch");

  ForwardResult res;
  res.states.reserve(pt.steps() + 1);
  Mat sigma = rho0.data;  // l x 1
  res.states.push_back(sigma);
  for (int k = 0; k < pt.steps(); ++k) {
    const PtNode& node = pt.nodes[k];
    require(props[k].rows() == l && props[k].cols() == l,
            "contract_forward: propagator dimension mismatch");
    Mat phi = props[k] * sigma;  // l x chi_in
    Mat next(l, node.chi_out);
    if (node.kind == PtNode::Kind::Dense)
      kernels::forward_dense(node.data->data(), node.chi_out, node.chi_in, l,
                             phi.data(), next.data());
    else
      kernels::forward_bonddiag(node.data->data(), node.chi_out, l,
                                phi.data(), next.data());
    if (!next.allFinite())
      throw numerical_error("contract_forward: non-finite state after step " +
                            std::to_string(k + 1));
    sigma = std::move(next);
    res.states.push_back(sigma);
  }
  res.final = DensityVec{Vec(sigma.col(0))};
  return res;
}

std::vector<DensityVec> reduced_trajectory(const ProcessTensor& pt,
                                           const std::vector<SuperOp>& props,
                                           const DensityVec& rho0) {
  require(!pt.bond_caps.empty(),
          "reduced_trajectory: process tensor has no bond caps");
  ForwardResult fwd = contract_forward(pt, props, rho0);
  std::vector<DensityVec> out;
  out.reserve(fwd.states.size());
  for (std::size_t k = 0; k < fwd.states.size(); ++k)
    out.push_back(DensityVec{Vec(fwd.states[k] * pt.bond_caps[k])});
  return out;
}

std::vector<int> bond_profile(const ProcessTensor& pt) {
  std::vector<int> chi;
  chi.reserve(pt.steps() + 1);
  chi.push_back(pt.steps() > 0 ? pt.nodes[0].chi_in : 1);
  for (const PtNode& n : pt.nodes) chi.push_back(n.chi_out);
  return chi;
}

namespace {

std::vector<cx> densify(const PtNode& n) {
  if (n.kind == PtNode::Kind::Dense) return *n.data;
  std::size_t total = std::size_t(n.chi_out) * n.chi_in * n.ldim * n.ldim;
  if (total > kDensifyLimit)
    throw numerical_error(
        "bond-diagonal node too large to densify (chi = " +
        std::to_string(n.chi_out) + "); recompress is unavailable here");
  std::vector<cx> out(total, cx(0, 0));
  for (int x = 0; x < n.chi_out; ++x)
    for (int m = 0; m < n.ldim; ++m)
      for (int v = 0; v < n.ldim; ++v)
        out[dense_index(x, m, x, v, n.chi_in, n.ldim)] =
            (*n.data)[(std::size_t(x) * n.ldim + m) * n.ldim + v];
  return out;
}

struct MutableNode {
  int chi_out, chi_in, l;
  std::vector<cx> data;  // dense internal layout
  cx& at(int o, int i, int m, int v) {
    return data[dense_index(o, m, i, v, chi_in, l)];
  }
};

PtNode freeze_node(MutableNode&& n) {
  PtNode out;
  out.kind = PtNode::Kind::Dense;
  out.chi_out = n.chi_out;
  out.chi_in = n.chi_in;
  out.ldim = n.l;
  out.data = std::make_shared<const std::vector<cx>>(std::move(n.data));
  return out;
}

}  // namespace

ProcessTensor recompress(const ProcessTensor& pt, double eps_rel,
                         double* max_discarded) {
  pt.validate();
  require(eps_rel >= 0 && eps_rel < 1, "recompress: eps_rel must be in [0,1)");
  if (max_discarded) *max_discarded = 0;

  const int l = pt.ldim();
  const int t = pt.steps();
  std::vector<MutableNode> nodes;
  nodes.reserve(t);
  for (const PtNode& n : pt.nodes)
    nodes.push_back(MutableNode{n.chi_out, n.chi_in, l, densify(n)});
  std::vector<Vec> caps = pt.bond_caps;

  // left-to-right QR orthogonalization: bond k+1 gets an isometric gauge
  for (int k = 0; k + 1 < t; ++k) {
    MutableNode& a = nodes[k];
    const long rows = long(a.chi_in) * l * l;
    Mat m(rows, a.chi_out);
    for (int o = 0; o < a.chi_out; ++o)
      for (int i = 0; i < a.chi_in; ++i)
        for (int mu = 0; mu < l; ++mu)
          for (int v = 0; v < l; ++v)
            m((long(i) * l + mu) * l + v, o) = a.at(o, i, mu, v);
    const int r = static_cast<int>(std::min<long>(rows, a.chi_out));
    Eigen::HouseholderQR<Mat> qr(m);
    Mat q = qr.householderQ() * Mat::Identity(rows, r);
    Mat rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();

    MutableNode na{r, a.chi_in, l, {}};
    na.data.resize(std::size_t(r) * a.chi_in * l * l);
    for (int s = 0; s < r; ++s)
      for (int i = 0; i < a.chi_in; ++i)
        for (int mu = 0; mu < l; ++mu)
          for (int v = 0; v < l; ++v)
            na.at(s, i, mu, v) = q((long(i) * l + mu) * l + v, s);
    MutableNode& b = nodes[k + 1];
    MutableNode nb{b.chi_out, r, l, {}};
    nb.data.assign(std::size_t(b.chi_out) * r * l * l, cx(0, 0));
    for (int o = 0; o < b.chi_out; ++o)
      for (int s = 0; s < r; ++s)
        for (int i = 0; i < b.chi_in; ++i) {
          cx w = rr(s, i);
          if (w == cx(0, 0)) continue;
          for (int mu = 0; mu < l; ++mu)
            for (int v = 0; v < l; ++v)
              nb.at(o, s, mu, v) += w * b.at(o, i, mu, v);
        }
    nodes[k] = std::move(na);
    nodes[k + 1] = std::move(nb);
    if (!caps.empty()) caps[k + 1] = rr * caps[k + 1];
  }

  // right-to-left SVD truncation of every interior bond
  for (int k = t - 2; k >= 0; --k) {
    MutableNode& b = nodes[k + 1];
    Mat m(b.chi_in, long(b.chi_out) * l * l);
    for (int i = 0; i < b.chi_in; ++i)
      for (int o = 0; o < b.chi_out; ++o)
        for (int mu = 0; mu < l; ++mu)
          for (int v = 0; v < l; ++v)
            m(i, (long(o) * l + mu) * l + v) = b.at(o, i, mu, v);
    Eigen::BDCSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
      throw numerical_error("recompress: SVD failed at node " +
                            std::to_string(k + 1));
    const auto& s = svd.singularValues();
    const double smax = s.size() > 0 ? s(0) : 0.0;
    int keep = 1;
    for (int j = 1; j < s.size(); ++j)
      if (smax > 0 && s(j) / smax >= eps_rel) keep = j + 1;
    if (eps_rel == 0) keep = static_cast<int>(s.size());
    double disc2 = 0;
    for (int j = keep; j < s.size(); ++j) disc2 += s(j) * s(j);
    if (max_discarded && smax > 0)
      *max_discarded = std::max(*max_discarded, std::sqrt(disc2) / smax);

    // keep node k+1 right-orthogonal (V^H) so the next bond's local SVD
    // still yields the exact Schmidt spectrum; the weights U*S move left
    Mat vh = svd.matrixV().leftCols(keep).adjoint();
    Mat us = svd.matrixU().leftCols(keep) * s.head(keep).asDiagonal();

    MutableNode nb{b.chi_out, keep, l, {}};
    nb.data.resize(std::size_t(b.chi_out) * keep * l * l);
    for (int o = 0; o < b.chi_out; ++o)
      for (int sI = 0; sI < keep; ++sI)
        for (int mu = 0; mu < l; ++mu)
          for (int v = 0; v < l; ++v)
            nb.at(o, sI, mu, v) = vh(sI, (long(o) * l + mu) * l + v);
    MutableNode& a = nodes[k];
    MutableNode na{keep, a.chi_in, l, {}};
    na.data.assign(std::size_t(keep) * a.chi_in * l * l, cx(0, 0));
    for (int sI = 0; sI < keep; ++sI)
      for (int i = 0; i < a.chi_in; ++i)
        for (int mu = 0; mu < l; ++mu)
          for (int v = 0; v < l; ++v) {
            cx acc(0, 0);
            for (int o = 0; o < a.chi_out; ++o)
              acc += a.at(o, i, mu, v) * us(o, sI);
            na.at(sI, i, mu, v) = acc;
          }
    nodes[k + 1] = std::move(nb);
    nodes[k] = std::move(na);
    if (!caps.empty()) {
      // cap pairs with the forward state on this bond, which now carries the
      // U*S weights; the consistent transform is the pseudo-inverse S^-1 U^H,
      // with directions of negligible weight zeroed instead of divided
      Vec c = svd.matrixU().leftCols(keep).adjoint() * caps[k + 1];
      for (int sI = 0; sI < keep; ++sI)
        c(sI) = s(sI) > smax * 1e-14 ? c(sI) / s(sI) : cx(0, 0);
      caps[k + 1] = c;
    }
  }

  ProcessTensor out;
  out.dt = pt.dt;
  out.system_dim = pt.system_dim;
  out.metadata = pt.metadata;
  out.bond_caps = std::move(caps);
  out.nodes.reserve(t);
  for (auto& n : nodes) out.nodes.push_back(freeze_node(std::move(n)));
  out.validate();
  return out;
}

namespace {

constexpr std::uint32_t kPtVersion = 1;
constexpr std::uint32_t kCapsVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw io_error(std::string("load_pt: truncated file reading ") + what);
  return v;
}

}  // namespace

void save_pt(const ProcessTensor& pt, const std::string& path) {
  pt.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("save_pt: cannot open " + path);
  out.write("PTMP", 4);
  write_pod(out, kPtVersion);
  write_pod(out, std::uint32_t(pt.steps()));
  write_pod(out, std::uint32_t(pt.system_dim));
  write_pod(out, pt.dt);
  const int l = pt.ldim();
  for (const PtNode& n : pt.nodes) {
    if (std::size_t(n.chi_out) * n.chi_in * l * l > kDensifyLimit)
      throw io_error("save_pt: node too large for the dense file format");
    write_pod(out, std::uint32_t(n.chi_out));
    write_pod(out, std::uint32_t(n.chi_in));
    for (int o = 0; o < n.chi_out; ++o)
      for (int i = 0; i < n.chi_in; ++i)
        for (int m = 0; m < l; ++m)
          for (int v = 0; v < l; ++v) write_pod(out, n.at(o, i, m, v));
  }
  if (!out) throw io_error("save_pt: write failed for " + path);
  out.close();

  std::ofstream side(path + ".caps", std::ios::binary);
  if (!side) throw io_error("save_pt: cannot open " + path + ".caps");
  side.write("PTCB", 4);
  write_pod(side, kCapsVersion);
  write_pod(side, std::uint32_t(pt.bond_caps.size()));
  for (const Vec& c : pt.bond_caps) {
    write_pod(side, std::uint32_t(c.size()));
    for (long i = 0; i < c.size(); ++i) write_pod(side, cx(c(i)));
  }
  write_pod(side, std::uint32_t(pt.metadata.size()));
  side.write(pt.metadata.data(), pt.metadata.size());
  if (!side) throw io_error("save_pt: write failed for " + path + ".caps");
}

ProcessTensor load_pt(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_pt: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PTMP", 4) != 0)
    throw io_error("load_pt: bad magic in " + path);
  auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kPtVersion)
    throw io_error("load_pt: format version mismatch (found " +
                   std::to_string(version) + ", expected " +
                   std::to_string(kPtVersion) + ")");
  auto t = read_pod<std::uint32_t>(in, "step count");
  auto s = read_pod<std::uint32_t>(in, "system dimension");
  auto dt = read_pod<double>(in, "dt");
  if (s == 0 || s > 1024) throw io_error("load_pt: implausible system size");

  ProcessTensor pt;
  pt.system_dim = static_cast<int>(s);
  pt.dt = dt;
  const int l = pt.ldim();
  int prev_chi = 1;
  for (std::uint32_t k = 0; k < t; ++k) {
    auto co = read_pod<std::uint32_t>(in, "chi_out");
    auto ci = read_pod<std::uint32_t>(in, "chi_in");
    if (static_cast<int>(ci) != prev_chi)
      throw io_error("load_pt: bond dimension chain broken at node " +
                     std::to_string(k));
    PtNodeBuffer buf = PtNodeBuffer::dense(co, ci, l);
    for (std::uint32_t o = 0; o < co; ++o)
      for (std::uint32_t i = 0; i < ci; ++i)
        for (int m = 0; m < l; ++m)
          for (int v = 0; v < l; ++v)
            buf.dense_at(o, i, m, v) = read_pod<cx>(in, "tensor data");
    pt.nodes.push_back(std::move(buf).freeze());
    prev_chi = static_cast<int>(co);
  }

  std::ifstream side(path + ".caps", std::ios::binary);
  if (side) {
    char cm[4];
    side.read(cm, 4);
    if (!side || std::memcmp(cm, "PTCB", 4) != 0)
      throw io_error("load_pt: bad magic in " + path + ".caps");
    auto cver = read_pod<std::uint32_t>(side, "caps version");
    if (cver != kCapsVersion)
      throw io_error("load_pt: caps version mismatch (found " +
                     std::to_string(cver) + ", expected " +
                     std::to_string(kCapsVersion) + ")");
    auto n = read_pod<std::uint32_t>(side, "cap count");
    for (std::uint32_t k = 0; k < n; ++k) {
      auto len = read_pod<std::uint32_t>(side, "cap size");
      Vec c(len);
      for (std::uint32_t i = 0; i < len; ++i)
        c(i) = read_pod<cx>(side, "cap data");
      pt.bond_caps.push_back(std::move(c));
    }
    auto mlen = read_pod<std::uint32_t>(side, "metadata size");
    pt.metadata.resize(mlen);
    side.read(pt.metadata.data(), mlen);
    if (!side) throw io_error("load_pt: truncated caps sidecar");
  }
  pt.validate();
  return pt;
}

}  // namespace ptgrad

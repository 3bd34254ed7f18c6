#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ptgrad/types.hpp"

namespace ptgrad {

// One node O[chi_out, chi_in, mu, nu] of a process-tensor MPO. Dense data is
// stored as [chi_out][mu][chi_in][nu] (contraction-friendly; see
// kernels.hpp). BondDiagonal nodes represent O[x, y, mu, nu] =
// delta_{xy} A_x[mu, nu] and store only the diagonal blocks [x][mu][nu],
// which keeps trajectory-ensemble tensors linear instead of quadratic in the
// bond dimension.
struct PtNode {
  enum class Kind { Dense, BondDiagonal };
  Kind kind = Kind::Dense;
  int chi_out = 0, chi_in = 0, ldim = 0;
  std::shared_ptr<const std::vector<cx>> data;

  static PtNode dense(int chi_out, int chi_in, int ldim);
  static PtNode bond_diagonal(int chi, int ldim);

  // logical element in the (chi_out, chi_in, mu, nu) convention
  cx at(int o, int i, int m, int v) const;
  std::size_t elements() const { return data ? data->size() : 0; }
};

// Mutable view used by builders; call freeze() to obtain the shared node.
struct PtNodeBuffer {
  PtNode::Kind kind;
  int chi_out, chi_in, ldim;
  std::vector<cx> data;

  static PtNodeBuffer dense(int chi_out, int chi_in, int ldim);
  static PtNodeBuffer bond_diagonal(int chi, int ldim);
  cx& dense_at(int o, int i, int m, int v);
  cx& diag_at(int x, int m, int v);
  PtNode freeze() &&;
};

// Process tensor over T time steps. nodes[k] consumes the bond left of step
// k and produces the bond right of it; chi_in of node 0 and chi_out of node
// T-1 are 1 (boundary caps are absorbed into those nodes). bond_caps[k]
// terminates bond k (before node k) and turns the extended state sigma_k
// into the physical reduced state; caps[0] and caps[T] are the scalar 1.
// Recompression rotates the caps along with the bond bases.
struct ProcessTensor {
  std::vector<PtNode> nodes;
  std::vector<Vec> bond_caps;
  double dt = 0;
  int system_dim = 0;
  std::string metadata;

  int steps() const { return static_cast<int>(nodes.size()); }
  int ldim() const { return system_dim * system_dim; }
  void validate() const;  // bond chain, cap sizes, finite dt
};

// T identity nodes (chi = 1, O = identity on mu,nu): a decoupled environment.
ProcessTensor identity_pt(int system_dim, int steps, double dt);

struct ForwardResult {
  DensityVec final;
  std::vector<Mat> states;  // sigma_k, an ldim-by-chi_k matrix, k = 0..T
};

// sigma_0 = rho_0; sigma_k = O[k] (U_k sigma_{k-1}) contracting nu and the
// shared bond. Cost per step O(L^2 chi_out chi_in).
ForwardResult contract_forward(const ProcessTensor& pt,
                               const std::vector<SuperOp>& props,
                               const DensityVec& rho0);

// rho_k = sigma_k caps[k] for k = 0..T; requires bond_caps.
std::vector<DensityVec> reduced_trajectory(const ProcessTensor& pt,
                                           const std::vector<SuperOp>& props,
                                           const DensityVec& rho0);

// chi_k for every bond, k = 0..T (both boundary values are 1).
std::vector<int> bond_profile(const ProcessTensor& pt);

// Two-sweep compression: left-to-right QR orthogonalization, right-to-left
// SVD truncation discarding singular values with s_i/s_max < eps_rel (at
// least one kept per bond). eps_rel = 0 is a lossless gauge transformation.
// max_discarded, when given, receives the largest relative discarded weight
// sqrt(sum of discarded s_i^2) / s_max over all bonds.
ProcessTensor recompress(const ProcessTensor& pt, double eps_rel,
                         double* max_discarded = nullptr);

// Binary container, magic "PTMP", little-endian: format version u32, T u32,
// S u32, dt f64, then per node chi_out u32, chi_in u32 and the row-major
// (chi_out, chi_in, mu, nu) complex-f64 tensor. A "<path>.caps" sidecar
// (magic "PTCB") carries the bond caps and the metadata string.
void save_pt(const ProcessTensor& pt, const std::string& path);
ProcessTensor load_pt(const std::string& path);

}  // namespace ptgrad

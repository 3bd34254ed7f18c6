#pragma once

#include <vector>

#include "ptgrad/bath.hpp"
#include "ptgrad/ptmpo.hpp"
#include "ptgrad/types.hpp"

namespace ptgrad {

// Multi-indices n in N^M with sum(n) <= depth, graded lexicographic order
// (by total excitation, then lexicographically); index 0 is the zero vector.
struct HierarchySpace {
  int m = 0;
  int depth = 0;
  std::vector<std::vector<int>> index_list;

  int n_aux() const { return static_cast<int>(index_list.size()); }
  // index of n +- e_k, or -1 when it leaves the truncated hierarchy
  int raised(int id, int k) const;
  int lowered(int id, int k) const;
};

HierarchySpace make_hierarchy(int m, int depth);

// Interaction part of the extended-Liouville-space generator, block-indexed
// by hierarchy slot: flat index = chi * L + mu. The system Liouvillian is
// excluded; system steps are supplied externally.
struct ExtendedGenerator {
  Mat l_int;  // (L N_aux) x (L N_aux)
  HierarchySpace hierarchy;
  int ldim = 0;
};

// Row block n: +i (n . gamma) I on the diagonal, -i (S x I - I x S^T) into
// the raised column blocks, -i n_k (alpha_k S x I - alpha~_k I x S^T) into
// the lowered ones.
ExtendedGenerator build_generator(const BathCorrelation& corr,
                                  const QOperator& s_op, int depth);

// Uniform PT: every interior node is exp(L_int dt) reshaped to
// (N_aux, N_aux, L, L); the boundary nodes and the bond caps project onto
// the n = 0 slot.
ProcessTensor heom_pt(const ExtendedGenerator& gen, double dt, int t_steps);

// First-order Trotter reference integration (system step, then environment
// step) of the full extended state; returns the physical block at every
// step, including the initial state. Agrees with the PT route exactly.
std::vector<DensityVec> heom_solve(const ExtendedGenerator& gen,
                                   const std::vector<SuperOp>& props,
                                   const DensityVec& rho0, double dt);

}  // namespace ptgrad

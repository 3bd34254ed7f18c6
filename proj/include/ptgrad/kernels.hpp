#pragma once

#include "ptgrad/types.hpp"

namespace ptgrad {

// Contraction kernels for process-tensor nodes. Dense node data is laid out
// as node[((o*l + m)*ci + i)*l + v] for (chi_out o, row mu m, chi_in i,
// column nu v), so both inner sums below run over contiguous memory.
// Bond-diagonal data is a[(x*l + m)*l + v] for the x-th diagonal block.
// States are column-major l-by-chi arrays (Eigen default).
//
// ptgrad::kernels is OpenMP-parallel, ptgrad::serial is the reference
// implementation. Every output element is accumulated in the same order in
// both, and threads never share an accumulator, so the two namespaces (and
// any OMP thread count) produce bitwise-identical results.

#define PTGRAD_DECLARE_KERNELS                                                \
  /* out(m, o) = sum_{i,v} node[o, m, i, v] phi(v, i) */                      \
  void forward_dense(const cx* node, int co, int ci, int l, const cx* phi,   \
                     cx* out);                                                \
  /* out(m, x) = sum_v a[x, m, v] phi(v, x) */                                \
  void forward_bonddiag(const cx* a, int chi, int l, const cx* phi,          \
                        cx* out);                                             \
  /* w(v, i) = sum_{o,m} lam(m, o) node[o, m, i, v] */                        \
  void backward_dense(const cx* node, int co, int ci, int l, const cx* lam,  \
                      cx* w);                                                 \
  /* w(v, x) = sum_m lam(m, x) a[x, m, v] */                                  \
  void backward_bonddiag(const cx* a, int chi, int l, const cx* lam, cx* w); \
  /* g(m, v) = sum_x sigma(m, x) w(v, x) */                                   \
  void gradient_outer(const cx* sigma, const cx* w, int l, int chi, cx* g);

namespace kernels {
PTGRAD_DECLARE_KERNELS
}
namespace serial {
PTGRAD_DECLARE_KERNELS
}

#undef PTGRAD_DECLARE_KERNELS

}  // namespace ptgrad

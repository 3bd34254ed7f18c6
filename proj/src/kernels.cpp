#include "ptgrad/kernels.hpp"

#include <cstddef>

namespace ptgrad::kernels {
#define PTK_FOR _Pragma("omp parallel for")
#define PTK_FOR2 _Pragma("omp parallel for collapse(2)")
#include "kernels_impl.inc"
#undef PTK_FOR
#undef PTK_FOR2
}  // namespace ptgrad::kernels

namespace ptgrad::serial {
#define PTK_FOR
#define PTK_FOR2
#include "kernels_impl.inc"
#undef PTK_FOR
#undef PTK_FOR2
}  // namespace ptgrad::serial

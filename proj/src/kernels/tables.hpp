#pragma once

#include "hbayes/kernels.hpp"

namespace hbayes::kernels::detail {

extern const KernelTable kScalarTable;
#if defined(HBAYES_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

}  // namespace hbayes::kernels::detail

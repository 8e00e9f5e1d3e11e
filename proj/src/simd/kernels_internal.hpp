#pragma once

#include "pvst/simd/kernels.hpp"

namespace pvst::simd::detail {

extern const KernelTable kScalarTable;
// Defined only in builds that compile the matching translation unit.
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;

}  // namespace pvst::simd::detail

#include <atomic>
#include <cstdlib>
#include <cstring>

#include "kernels_internal.hpp"

namespace pvst::simd {

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_kernels() noexcept { return detail::kScalarTable; }
const KernelTable* avx2_kernels() noexcept { return detail::avx2_table(); }
const KernelTable* neon_kernels() noexcept { return detail::neon_table(); }

namespace {

const KernelTable* detect() noexcept {
  const char* force = std::getenv("PVST_FORCE_SCALAR");
  if (force && std::strcmp(force, "0") != 0 && *force != '\0') return &detail::kScalarTable;
  if (const KernelTable* t = detail::avx2_table()) return t;
  if (const KernelTable* t = detail::neon_table()) return t;
  return &detail::kScalarTable;
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

bool set_active(Isa isa) noexcept {
  const KernelTable* t = nullptr;
  switch (isa) {
    case Isa::kScalar: t = &detail::kScalarTable; break;
    case Isa::kAvx2: t = detail::avx2_table(); break;
    case Isa::kNeon: t = detail::neon_table(); break;
  }
  if (!t) return false;
  slot().store(t, std::memory_order_release);
  return true;
}

}  // namespace pvst::simd

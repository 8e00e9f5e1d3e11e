#pragma once

#include <cstddef>
#include <string_view>

// Double-precision inner loops shared by the convolution, Gram and loss code.
// Each kernel has a scalar reference and vectorised variants (AVX2 on x86-64,
// NEON on AArch64); one table is picked at first use from CPUID, or forced to
// scalar with PVST_FORCE_SCALAR=1 in the environment.
namespace pvst::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] = x[i] * m[i]
  void (*mul)(const double* x, const double* m, double* y, std::size_t n);
  // sum_i w[i] * (a[i] - b[i])^2
  double (*weighted_sq_diff)(const double* a, const double* b, const double* w, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;
// Null when the ISA was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

// The table in use. Fixed for the life of the process unless overridden.
const KernelTable& active() noexcept;
// Test hook: pin the active table. Returns false if `isa` is unavailable.
bool set_active(Isa isa) noexcept;

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}

}  // namespace pvst::simd

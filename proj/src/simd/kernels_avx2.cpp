// Compiled with -mavx2 (no FMA) so products round exactly like the scalar path.
#include "kernels_internal.hpp"

#if defined(__x86_64__) && defined(__AVX2__)
#include <immintrin.h>

namespace pvst::simd::detail {

namespace {

double horizontal(__m256d acc) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  double s = horizontal(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul_avx2(const double* x, const double* m, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(m + i)));
  }
  for (; i < n; ++i) y[i] = x[i] * m[i];
}

double weighted_sq_diff_avx2(const double* a, const double* b, const double* w, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_mul_pd(d, d)));
  }
  double s = horizontal(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += w[i] * (d * d);
  }
  return s;
}

const KernelTable kAvx2Table{Isa::kAvx2, dot_avx2, axpy_avx2, mul_avx2, weighted_sq_diff_avx2};

}  // namespace

const KernelTable* avx2_table() noexcept {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") ? &kAvx2Table : nullptr;
}

}  // namespace pvst::simd::detail

#else

namespace pvst::simd::detail {
const KernelTable* avx2_table() noexcept { return nullptr; }
}  // namespace pvst::simd::detail

#endif

#include "kernels_internal.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace pvst::simd::detail {

namespace {

// Two 2-lane accumulators give the same four partial sums as the scalar path.
double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double s = (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
             (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul_neon(const double* x, const double* m, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(m + i)));
  for (; i < n; ++i) y[i] = x[i] * m[i];
}

double weighted_sq_diff_neon(const double* a, const double* b, const double* w, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float64x2_t d0 = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    const float64x2_t d1 = vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(w + i), vmulq_f64(d0, d0)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(w + i + 2), vmulq_f64(d1, d1)));
  }
  double s = (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
             (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += w[i] * (d * d);
  }
  return s;
}

const KernelTable kNeonTable{Isa::kNeon, dot_neon, axpy_neon, mul_neon, weighted_sq_diff_neon};

}  // namespace

const KernelTable* neon_table() noexcept { return &kNeonTable; }

}  // namespace pvst::simd::detail

#else

namespace pvst::simd::detail {
const KernelTable* neon_table() noexcept { return nullptr; }
}  // namespace pvst::simd::detail

#endif

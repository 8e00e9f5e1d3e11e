#include "kernels_internal.hpp"

namespace pvst::simd::detail {

namespace {

// Four independent accumulators in lane order, combined as (s0+s1)+(s2+s3);
// the vector variants reproduce this association.
double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_scalar(const double* x, const double* m, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * m[i];
}

double weighted_sq_diff_scalar(const double* a, const double* b, const double* w, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double d0 = a[i] - b[i];
    const double d1 = a[i + 1] - b[i + 1];
    const double d2 = a[i + 2] - b[i + 2];
    const double d3 = a[i + 3] - b[i + 3];
    s0 += w[i] * (d0 * d0);
    s1 += w[i + 1] * (d1 * d1);
    s2 += w[i + 2] * (d2 * d2);
    s3 += w[i + 3] * (d3 * d3);
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += w[i] * (d * d);
  }
  return s;
}

}  // namespace

const KernelTable kScalarTable{Isa::kScalar, dot_scalar, axpy_scalar, mul_scalar,
                               weighted_sq_diff_scalar};

}  // namespace pvst::simd::detail

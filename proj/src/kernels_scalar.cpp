#include "nsr/kernels.hpp"

namespace nsr::kernels {
namespace {

void s_mul_inplace(double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) a[i] *= b[i];
}
void s_mul(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}
void s_fmadd(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}
void s_axpy(double* dst, double alpha, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += alpha * x[i];
}
void s_scale(double* a, double alpha, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) a[i] *= alpha;
}
double s_sumsq(const double* a, std::size_t n) {
  // Pairwise-style accumulation in 4 lanes to mirror the SIMD reduction order
  // closely enough that scalar/AVX2 agree to rounding noise.
  double acc[4] = {0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    for (int l = 0; l < 4; ++l) acc[l] += a[i + l] * a[i + l];
  double tail = 0;
  for (; i < n; ++i) tail += a[i] * a[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail;
}
double s_dot(const double* a, const double* b, std::size_t n) {
  double acc[4] = {0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    for (int l = 0; l < 4; ++l) acc[l] += a[i + l] * b[i + l];
  double tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail;
}
void s_cmul_real(cplx* a, const double* s, std::size_t n) {
  double* p = reinterpret_cast<double*>(a);
  for (std::size_t i = 0; i < n; ++i) {
    p[2 * i] *= s[i];
    p[2 * i + 1] *= s[i];
  }
}
void s_caxpy(cplx* dst, cplx alpha, const cplx* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += alpha * x[i];
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{s_mul_inplace, s_mul, s_fmadd, s_axpy, s_scale,
                       s_sumsq,       s_dot, s_cmul_real, s_caxpy};
  return ops;
}

}  // namespace nsr::kernels

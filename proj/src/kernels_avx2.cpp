// AVX2 + FMA variants of the hot loops. Compiled with -mavx2 -mfma; only
// dispatched to when the CPU reports support.
#include <immintrin.h>

#include "nsr/kernels.hpp"

namespace nsr::kernels {
namespace {

void v_mul_inplace(double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d va = _mm256_loadu_pd(a + i);
    __m256d vb = _mm256_loadu_pd(b + i);
    _mm256_storeu_pd(a + i, _mm256_mul_pd(va, vb));
  }
  for (; i < n; ++i) a[i] *= b[i];
}
void v_mul(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}
void v_fmadd(double* dst, const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vd = _mm256_loadu_pd(dst + i);
    vd = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), vd);
    _mm256_storeu_pd(dst + i, vd);
  }
  for (; i < n; ++i) dst[i] += a[i] * b[i];
}
void v_axpy(double* dst, double alpha, const double* x, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vd = _mm256_loadu_pd(dst + i);
    vd = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vd);
    _mm256_storeu_pd(dst + i, vd);
  }
  for (; i < n; ++i) dst[i] += alpha * x[i];
}
void v_scale(double* a, double alpha, std::size_t n) {
  __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(a + i, _mm256_mul_pd(va, _mm256_loadu_pd(a + i)));
  for (; i < n; ++i) a[i] *= alpha;
}
double v_sumsq(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d va = _mm256_loadu_pd(a + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, va));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double tail = 0;
  for (; i < n; ++i) tail += a[i] * a[i];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + tail;
}
double v_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(
        acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + tail;
}
void v_cmul_real(cplx* a, const double* s, std::size_t n) {
  double* p = reinterpret_cast<double*>(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    // two complex numbers = 4 doubles; duplicate each multiplier across re/im
    __m128d s2 = _mm_loadu_pd(s + i);
    __m256d sm = _mm256_permute4x64_pd(_mm256_castpd128_pd256(s2), 0x50);
    __m256d va = _mm256_loadu_pd(p + 2 * i);
    _mm256_storeu_pd(p + 2 * i, _mm256_mul_pd(va, sm));
  }
  for (; i < n; ++i) {
    p[2 * i] *= s[i];
    p[2 * i + 1] *= s[i];
  }
}
void v_caxpy(cplx* dst, cplx alpha, const cplx* x, std::size_t n) {
  // (ar + i ai)(xr + i xi) = (ar*xr - ai*xi) + i(ar*xi + ai*xr)
  double* d = reinterpret_cast<double*>(dst);
  const double* xp = reinterpret_cast<const double*>(x);
  __m256d ar = _mm256_set1_pd(alpha.real());
  __m256d ai = _mm256_set1_pd(alpha.imag());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    __m256d vx = _mm256_loadu_pd(xp + 2 * i);          // xr0 xi0 xr1 xi1
    __m256d sw = _mm256_permute_pd(vx, 0x5);           // xi0 xr0 xi1 xr1
    __m256d vd = _mm256_loadu_pd(d + 2 * i);
    __m256d t = _mm256_mul_pd(ai, sw);                 // ai*xi, ai*xr, ...
    t = _mm256_addsub_pd(_mm256_setzero_pd(), t);      // -ai*xi, +ai*xr, ...
    vd = _mm256_add_pd(vd, _mm256_fmadd_pd(ar, vx, t));
    _mm256_storeu_pd(d + 2 * i, vd);
  }
  for (; i < n; ++i) dst[i] += alpha * x[i];
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{v_mul_inplace, v_mul, v_fmadd, v_axpy, v_scale,
                       v_sumsq,       v_dot, v_cmul_real, v_caxpy};
  return ops;
}

}  // namespace nsr::kernels

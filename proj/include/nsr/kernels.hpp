#pragma once
// Data-parallel inner loops under the spectral layer: pointwise products,
// multiplier application, axpy and reductions. Two implementations (portable
// scalar and AVX2+FMA) selected at runtime; tests assert their equivalence.

#include <complex>
#include <cstddef>
#include <string>

namespace nsr::kernels {

using cplx = std::complex<double>;

struct Ops {
  // a[i] *= b[i]
  void (*mul_inplace)(double* a, const double* b, std::size_t n);
  // dst[i] = a[i] * b[i]
  void (*mul)(double* dst, const double* a, const double* b, std::size_t n);
  // dst[i] += a[i] * b[i]
  void (*fmadd)(double* dst, const double* a, const double* b, std::size_t n);
  // dst[i] += alpha * x[i]
  void (*axpy)(double* dst, double alpha, const double* x, std::size_t n);
  // a[i] *= alpha
  void (*scale)(double* a, double alpha, std::size_t n);
  // sum_i a[i]*a[i]
  double (*sumsq)(const double* a, std::size_t n);
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // complex a[i] *= real s[i]  (Fourier-multiplier application)
  void (*cmul_real)(cplx* a, const double* s, std::size_t n);
  // complex dst[i] += alpha * x[i]
  void (*caxpy)(cplx* dst, cplx alpha, const cplx* x, std::size_t n);
};

enum class Backend { scalar, avx2 };

const Ops& scalar_ops();
const Ops& avx2_ops();      // valid only if avx2_available()
bool avx2_available();

// Active backend: auto-detected on first use; tests may force one.
const Ops& ops();
void force_backend(Backend b);
void reset_backend();       // back to auto-detection
Backend active_backend();
std::string backend_name();

}  // namespace nsr::kernels

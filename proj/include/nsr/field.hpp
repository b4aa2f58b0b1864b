#pragma once
// Periodic fields on the torus [0,2pi)^3 stored as full-cube complex Fourier
// modes with lazily cached collocation values. Convention:
//   f(x) = sum_k fhat(k) e^{i k.x},   k integer, per-axis index i -> k:
//   k = i for i <= n/2, k = i - n otherwise.
// All L2-type quantities are torus *averages*, matching a unit-volume torus.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "nsr/kernels.hpp"

namespace nsr {

using cplx = std::complex<double>;
inline constexpr double two_pi = 6.283185307179586476925287;

struct Grid {
  int n = 0;
  double dealias_fraction = 2.0 / 3.0;

  std::size_t size() const { return std::size_t(n) * n * n; }
  double dx() const { return two_pi / n; }
  // per-axis retained-|k| cutoff under the dealias rule
  int kcut() const { return int(std::floor((n / 2) * dealias_fraction)); }
  int kof(int i) const { return i <= n / 2 ? i : i - n; }
  std::size_t idx(int i, int j, int k) const {
    return (std::size_t(i) * n + j) * n + k;
  }
  bool operator==(const Grid& o) const {
    return n == o.n && dealias_fraction == o.dealias_fraction;
  }
};

// Thin wrapper over FFTW c2c 3D transforms, one cached plan pair per n.
class Fft {
 public:
  static const Fft& plan_for(int n);
  // in-place, unnormalized forward (values -> sum-convention modes needs /n^3)
  void forward(cplx* data) const;
  void backward(cplx* data) const;
  int n() const { return n_; }

 private:
  explicit Fft(int n);
  int n_;
  void* fwd_;  // fftw_plan
  void* bwd_;
};

class ScalarField {
 public:
  ScalarField() = default;

  static ScalarField zero(const Grid& g);
  static ScalarField constant(const Grid& g, double c);
  static ScalarField from_values(const Grid& g, std::vector<double> vals);
  // enforce_reality symmetrizes modes so collocation values are real
  static ScalarField from_modes(const Grid& g, std::vector<cplx> modes,
                                bool enforce_reality = true);
  template <class F>
  static ScalarField sample(const Grid& g, F&& f) {
    std::vector<double> v(g.size());
    const double h = g.dx();
    std::size_t p = 0;
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j)
        for (int k = 0; k < g.n; ++k, ++p) v[p] = f(i * h, j * h, k * h);
    return from_values(g, std::move(v));
  }

  bool empty() const { return modes_.empty(); }
  const Grid& grid() const { return grid_; }
  const std::vector<cplx>& modes() const { return modes_; }
  const std::vector<double>& values() const;  // lazy inverse transform

  double mean() const { return modes_.empty() ? 0.0 : modes_[0].real(); }
  double sup_norm() const;
  double l2() const;  // sqrt(average of f^2) via Parseval
  double roundtrip_residual() const;  // relative, for diagnostics

  ScalarField dealiased() const;
  ScalarField derivative(int axis, int order = 1) const;
  ScalarField derivative_multi(const std::array<int, 3>& theta) const;
  ScalarField minus_mean() const;

  // pointwise product in collocation space; dealiased by default
  ScalarField times(const ScalarField& g, bool dealias = true) const;

  // apply a real Fourier-multiplier symbol s(kx,ky,kz)
  template <class F>
  ScalarField apply_real_symbol(F&& sym) const {
    std::vector<double> s(grid_.size());
    std::size_t p = 0;
    for (int i = 0; i < grid_.n; ++i)
      for (int j = 0; j < grid_.n; ++j)
        for (int k = 0; k < grid_.n; ++k, ++p)
          s[p] = sym(grid_.kof(i), grid_.kof(j), grid_.kof(k));
    std::vector<cplx> m = modes_;
    kernels::ops().cmul_real(m.data(), s.data(), m.size());
    return from_modes(grid_, std::move(m), false);
  }
  // apply a complex symbol c(kx,ky,kz)
  template <class F>
  ScalarField apply_symbol(F&& sym) const {
    std::vector<cplx> m(grid_.size());
    std::size_t p = 0;
    for (int i = 0; i < grid_.n; ++i)
      for (int j = 0; j < grid_.n; ++j)
        for (int k = 0; k < grid_.n; ++k, ++p)
          m[p] = sym(grid_.kof(i), grid_.kof(j), grid_.kof(k)) * modes_[p];
    return from_modes(grid_, std::move(m), false);
  }

  ScalarField& operator+=(const ScalarField& g);
  ScalarField& operator-=(const ScalarField& g);
  ScalarField& operator*=(double a);
  friend ScalarField operator+(ScalarField a, const ScalarField& b) {
    a += b;
    return a;
  }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) {
    a -= b;
    return a;
  }
  friend ScalarField operator*(double a, ScalarField f) {
    f *= a;
    return f;
  }

 private:
  Grid grid_;
  std::vector<cplx> modes_;
  mutable std::vector<double> values_;
  mutable bool values_ok_ = false;
};

struct VectorField {
  std::array<ScalarField, 3> c;

  static VectorField zero(const Grid& g) {
    return {ScalarField::zero(g), ScalarField::zero(g), ScalarField::zero(g)};
  }
  const Grid& grid() const { return c[0].grid(); }
  bool empty() const { return c[0].empty(); }
  double sup_norm() const;
  double l2() const;  // sqrt(average of |v|^2)
  std::array<double, 3> mean() const {
    return {c[0].mean(), c[1].mean(), c[2].mean()};
  }
  VectorField minus_mean() const {
    return {c[0].minus_mean(), c[1].minus_mean(), c[2].minus_mean()};
  }
  VectorField dealiased() const {
    return {c[0].dealiased(), c[1].dealiased(), c[2].dealiased()};
  }
  VectorField& operator+=(const VectorField& g);
  VectorField& operator-=(const VectorField& g);
  VectorField& operator*=(double a);
  friend VectorField operator+(VectorField a, const VectorField& b) {
    a += b;
    return a;
  }
  friend VectorField operator-(VectorField a, const VectorField& b) {
    a -= b;
    return a;
  }
  friend VectorField operator*(double a, VectorField f) {
    f *= a;
    return f;
  }
};

// symmetric 3x3 tensor field, components xx,xy,xz,yy,yz,zz
struct SymTensorField {
  std::array<ScalarField, 6> c;

  static int index(int i, int j) {
    if (i > j) std::swap(i, j);
    static const int map[3][3] = {{0, 1, 2}, {-1, 3, 4}, {-1, -1, 5}};
    return map[i][j];
  }
  const ScalarField& at(int i, int j) const { return c[index(i, j)]; }
  static SymTensorField zero(const Grid& g);
  const Grid& grid() const { return c[0].grid(); }
  bool empty() const { return c[0].empty(); }
  double sup_norm() const;  // max over x of Frobenius norm
  ScalarField trace() const;
  SymTensorField traceless() const;
  SymTensorField& operator+=(const SymTensorField& g);
  SymTensorField& operator-=(const SymTensorField& g);
  SymTensorField& operator*=(double a);
  friend SymTensorField operator+(SymTensorField a, const SymTensorField& b) {
    a += b;
    return a;
  }
  friend SymTensorField operator-(SymTensorField a, const SymTensorField& b) {
    a -= b;
    return a;
  }
  friend SymTensorField operator*(double a, SymTensorField f) {
    f *= a;
    return f;
  }
};

// ---- vector calculus (spectral) ----
ScalarField divergence(const VectorField& v);
VectorField gradient(const ScalarField& f);
VectorField curl(const VectorField& v);
VectorField divergence(const SymTensorField& T);

// pointwise products (dealiased)
ScalarField dot(const VectorField& a, const VectorField& b);
VectorField advect(const VectorField& v, const VectorField& u);  // (v.grad)u
// symmetric part of a (x) b
SymTensorField outer_sym(const VectorField& a, const VectorField& b);
// a (x) b - (a.b/3) Id, symmetrized
SymTensorField outer_traceless(const VectorField& a, const VectorField& b);
VectorField apply(const SymTensorField& T, const VectorField& v);  // Tv
ScalarField scale_pointwise(const ScalarField& f, const ScalarField& g,
                            bool dealias = true);

double parseval_gap(const ScalarField& f);  // |l2_modes - l2_values| relative

}  // namespace nsr

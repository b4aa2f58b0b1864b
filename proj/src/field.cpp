#include "nsr/field.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

namespace nsr {

// ---------- Fft ----------

Fft::Fft(int n) : n_(n) {
  std::vector<cplx> buf(std::size_t(n) * n * n);
  auto* b = reinterpret_cast<fftw_complex*>(buf.data());
  fwd_ = fftw_plan_dft_3d(n, n, n, b, b, FFTW_FORWARD,
                          FFTW_ESTIMATE | FFTW_UNALIGNED);
  bwd_ = fftw_plan_dft_3d(n, n, n, b, b, FFTW_BACKWARD,
                          FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!fwd_ || !bwd_) throw std::runtime_error("fftw plan creation failed");
}

const Fft& Fft::plan_for(int n) {
  static std::map<int, Fft*> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, new Fft(n)).first;
  return *it->second;
}

void Fft::forward(cplx* data) const {
  fftw_execute_dft(static_cast<fftw_plan>(fwd_),
                   reinterpret_cast<fftw_complex*>(data),
                   reinterpret_cast<fftw_complex*>(data));
}

void Fft::backward(cplx* data) const {
  fftw_execute_dft(static_cast<fftw_plan>(bwd_),
                   reinterpret_cast<fftw_complex*>(data),
                   reinterpret_cast<fftw_complex*>(data));
}

// ---------- ScalarField ----------

ScalarField ScalarField::zero(const Grid& g) {
  ScalarField f;
  f.grid_ = g;
  f.modes_.assign(g.size(), cplx(0, 0));
  f.values_.assign(g.size(), 0.0);
  f.values_ok_ = true;
  return f;
}

ScalarField ScalarField::constant(const Grid& g, double c) {
  ScalarField f = zero(g);
  f.modes_[0] = c;
  f.values_.assign(g.size(), c);
  return f;
}

ScalarField ScalarField::from_values(const Grid& g, std::vector<double> vals) {
  if (vals.size() != g.size()) throw std::runtime_error("value size mismatch");
  ScalarField f;
  f.grid_ = g;
  f.modes_.resize(g.size());
  for (std::size_t i = 0; i < vals.size(); ++i) f.modes_[i] = vals[i];
  Fft::plan_for(g.n).forward(f.modes_.data());
  const double inv = 1.0 / double(g.size());
  for (auto& m : f.modes_) m *= inv;
  f.values_ = std::move(vals);
  f.values_ok_ = true;
  return f;
}

ScalarField ScalarField::from_modes(const Grid& g, std::vector<cplx> modes,
                                    bool enforce_reality) {
  if (modes.size() != g.size()) throw std::runtime_error("mode size mismatch");
  ScalarField f;
  f.grid_ = g;
  f.modes_ = std::move(modes);
  if (enforce_reality) {
    const int n = g.n;
    for (int i = 0; i < n; ++i) {
      int ii = (n - i) % n;
      for (int j = 0; j < n; ++j) {
        int jj = (n - j) % n;
        for (int k = 0; k < n; ++k) {
          int kk = (n - k) % n;
          std::size_t p = g.idx(i, j, k), q = g.idx(ii, jj, kk);
          if (p < q) {
            cplx avg = 0.5 * (f.modes_[p] + std::conj(f.modes_[q]));
            f.modes_[p] = avg;
            f.modes_[q] = std::conj(avg);
          } else if (p == q) {
            f.modes_[p] = f.modes_[p].real();
          }
        }
      }
    }
  }
  return f;
}

const std::vector<double>& ScalarField::values() const {
  if (!values_ok_) {
    std::vector<cplx> buf = modes_;
    Fft::plan_for(grid_.n).backward(buf.data());
    values_.resize(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) values_[i] = buf[i].real();
    values_ok_ = true;
  }
  return values_;
}

double ScalarField::sup_norm() const {
  double m = 0;
  for (double v : values()) m = std::max(m, std::abs(v));
  return m;
}

double ScalarField::l2() const {
  double s = 0;
  for (const auto& m : modes_) s += std::norm(m);
  return std::sqrt(s);
}

double ScalarField::roundtrip_residual() const {
  ScalarField back = from_values(grid_, values());
  double num = 0, den = 0;
  for (std::size_t i = 0; i < modes_.size(); ++i) {
    num += std::norm(back.modes_[i] - modes_[i]);
    den += std::norm(modes_[i]);
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

ScalarField ScalarField::dealiased() const {
  const int cut = grid_.kcut();
  std::vector<cplx> m = modes_;
  std::size_t p = 0;
  for (int i = 0; i < grid_.n; ++i) {
    bool ic = std::abs(grid_.kof(i)) > cut;
    for (int j = 0; j < grid_.n; ++j) {
      bool jc = ic || std::abs(grid_.kof(j)) > cut;
      for (int k = 0; k < grid_.n; ++k, ++p)
        if (jc || std::abs(grid_.kof(k)) > cut) m[p] = 0.0;
    }
  }
  return from_modes(grid_, std::move(m), false);
}

ScalarField ScalarField::derivative(int axis, int order) const {
  std::array<int, 3> theta{0, 0, 0};
  theta[axis] = order;
  return derivative_multi(theta);
}

ScalarField ScalarField::derivative_multi(const std::array<int, 3>& th) const {
  const int nyq = grid_.n / 2;
  return apply_symbol([&](int kx, int ky, int kz) -> cplx {
    // drop the unpaired Nyquist mode when taking odd derivatives
    if ((th[0] % 2 && std::abs(kx) == nyq) ||
        (th[1] % 2 && std::abs(ky) == nyq) || (th[2] % 2 && std::abs(kz) == nyq))
      return 0.0;
    cplx f(1, 0);
    const cplx I(0, 1);
    for (int t = 0; t < th[0]; ++t) f *= I * double(kx);
    for (int t = 0; t < th[1]; ++t) f *= I * double(ky);
    for (int t = 0; t < th[2]; ++t) f *= I * double(kz);
    return f;
  });
}

ScalarField ScalarField::minus_mean() const {
  std::vector<cplx> m = modes_;
  m[0] = 0.0;
  return from_modes(grid_, std::move(m), false);
}

ScalarField ScalarField::times(const ScalarField& g, bool dealias) const {
  if (!(grid_ == g.grid())) throw std::runtime_error("grid mismatch in times");
  std::vector<double> v = values();
  kernels::ops().mul_inplace(v.data(), g.values().data(), v.size());
  ScalarField r = from_values(grid_, std::move(v));
  return dealias ? r.dealiased() : r;
}

ScalarField& ScalarField::operator+=(const ScalarField& g) {
  if (!(grid_ == g.grid_)) throw std::runtime_error("grid mismatch in +=");
  kernels::ops().caxpy(modes_.data(), cplx(1, 0), g.modes_.data(),
                       modes_.size());
  values_ok_ = false;
  values_.clear();
  return *this;
}

ScalarField& ScalarField::operator-=(const ScalarField& g) {
  if (!(grid_ == g.grid_)) throw std::runtime_error("grid mismatch in -=");
  kernels::ops().caxpy(modes_.data(), cplx(-1, 0), g.modes_.data(),
                       modes_.size());
  values_ok_ = false;
  values_.clear();
  return *this;
}

ScalarField& ScalarField::operator*=(double a) {
  auto* p = reinterpret_cast<double*>(modes_.data());
  kernels::ops().scale(p, a, 2 * modes_.size());
  if (values_ok_) kernels::ops().scale(values_.data(), a, values_.size());
  return *this;
}

// ---------- VectorField ----------

double VectorField::sup_norm() const {
  const auto& a = c[0].values();
  const auto& b = c[1].values();
  const auto& d = c[2].values();
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, a[i] * a[i] + b[i] * b[i] + d[i] * d[i]);
  return std::sqrt(m);
}

double VectorField::l2() const {
  double s = 0;
  for (int i = 0; i < 3; ++i) {
    double l = c[i].l2();
    s += l * l;
  }
  return std::sqrt(s);
}

VectorField& VectorField::operator+=(const VectorField& g) {
  for (int i = 0; i < 3; ++i) c[i] += g.c[i];
  return *this;
}
VectorField& VectorField::operator-=(const VectorField& g) {
  for (int i = 0; i < 3; ++i) c[i] -= g.c[i];
  return *this;
}
VectorField& VectorField::operator*=(double a) {
  for (int i = 0; i < 3; ++i) c[i] *= a;
  return *this;
}

// ---------- SymTensorField ----------

SymTensorField SymTensorField::zero(const Grid& g) {
  SymTensorField t;
  for (int i = 0; i < 6; ++i) t.c[i] = ScalarField::zero(g);
  return t;
}

double SymTensorField::sup_norm() const {
  std::array<const std::vector<double>*, 6> v;
  for (int i = 0; i < 6; ++i) v[i] = &c[i].values();
  // Frobenius with off-diagonals doubled
  static const double w[6] = {1, 2, 2, 1, 2, 1};
  double m = 0;
  for (std::size_t p = 0; p < v[0]->size(); ++p) {
    double s = 0;
    for (int i = 0; i < 6; ++i) {
      double x = (*v[i])[p];
      s += w[i] * x * x;
    }
    m = std::max(m, s);
  }
  return std::sqrt(m);
}

ScalarField SymTensorField::trace() const {
  ScalarField t = c[0];
  t += c[3];
  t += c[5];
  return t;
}

SymTensorField SymTensorField::traceless() const {
  ScalarField third = (1.0 / 3.0) * trace();
  SymTensorField r = *this;
  r.c[0] -= third;
  r.c[3] -= third;
  r.c[5] -= third;
  return r;
}

SymTensorField& SymTensorField::operator+=(const SymTensorField& g) {
  for (int i = 0; i < 6; ++i) c[i] += g.c[i];
  return *this;
}
SymTensorField& SymTensorField::operator-=(const SymTensorField& g) {
  for (int i = 0; i < 6; ++i) c[i] -= g.c[i];
  return *this;
}
SymTensorField& SymTensorField::operator*=(double a) {
  for (int i = 0; i < 6; ++i) c[i] *= a;
  return *this;
}

// ---------- vector calculus ----------

ScalarField divergence(const VectorField& v) {
  ScalarField d = v.c[0].derivative(0);
  d += v.c[1].derivative(1);
  d += v.c[2].derivative(2);
  return d;
}

VectorField gradient(const ScalarField& f) {
  return {f.derivative(0), f.derivative(1), f.derivative(2)};
}

VectorField curl(const VectorField& v) {
  return {v.c[2].derivative(1) - v.c[1].derivative(2),
          v.c[0].derivative(2) - v.c[2].derivative(0),
          v.c[1].derivative(0) - v.c[0].derivative(1)};
}

VectorField divergence(const SymTensorField& T) {
  VectorField r;
  for (int i = 0; i < 3; ++i) {
    ScalarField s = T.at(i, 0).derivative(0);
    s += T.at(i, 1).derivative(1);
    s += T.at(i, 2).derivative(2);
    r.c[i] = std::move(s);
  }
  return r;
}

ScalarField dot(const VectorField& a, const VectorField& b) {
  const Grid& g = a.grid();
  std::vector<double> v(g.size(), 0.0);
  for (int i = 0; i < 3; ++i)
    kernels::ops().fmadd(v.data(), a.c[i].values().data(),
                         b.c[i].values().data(), v.size());
  return ScalarField::from_values(g, std::move(v)).dealiased();
}

VectorField advect(const VectorField& v, const VectorField& u) {
  VectorField r;
  for (int i = 0; i < 3; ++i) {
    const Grid& g = v.grid();
    std::vector<double> acc(g.size(), 0.0);
    for (int j = 0; j < 3; ++j) {
      ScalarField du = u.c[i].derivative(j);
      kernels::ops().fmadd(acc.data(), v.c[j].values().data(),
                           du.values().data(), acc.size());
    }
    r.c[i] = ScalarField::from_values(g, std::move(acc)).dealiased();
  }
  return r;
}

SymTensorField outer_sym(const VectorField& a, const VectorField& b) {
  SymTensorField t;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      ScalarField prod =
          0.5 * (a.c[i].times(b.c[j], false) + a.c[j].times(b.c[i], false));
      t.c[SymTensorField::index(i, j)] = prod.dealiased();
    }
  return t;
}

SymTensorField outer_traceless(const VectorField& a, const VectorField& b) {
  return outer_sym(a, b).traceless();
}

VectorField apply(const SymTensorField& T, const VectorField& v) {
  VectorField r;
  const Grid& g = v.grid();
  for (int i = 0; i < 3; ++i) {
    std::vector<double> acc(g.size(), 0.0);
    for (int j = 0; j < 3; ++j)
      kernels::ops().fmadd(acc.data(), T.at(i, j).values().data(),
                           v.c[j].values().data(), acc.size());
    r.c[i] = ScalarField::from_values(g, std::move(acc)).dealiased();
  }
  return r;
}

ScalarField scale_pointwise(const ScalarField& f, const ScalarField& g,
                            bool dealias) {
  return f.times(g, dealias);
}

double parseval_gap(const ScalarField& f) {
  double lm = f.l2();
  double s = kernels::ops().sumsq(f.values().data(), f.values().size());
  double lv = std::sqrt(s / double(f.values().size()));
  double den = std::max(lm, 1e-300);
  return std::abs(lm - lv) / den;
}

}  // namespace nsr

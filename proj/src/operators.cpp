#include "nsr/operators.hpp"

#include <cmath>
#include <stdexcept>

namespace nsr {
namespace {

inline double ksq(int a, int b, int c) {
  return double(a) * a + double(b) * b + double(c) * c;
}

}  // namespace

ScalarField fractional_laplacian(const ScalarField& f, double gamma) {
  return f.apply_real_symbol([gamma](int a, int b, int c) {
    double k2 = ksq(a, b, c);
    return k2 == 0 ? 0.0 : std::pow(k2, gamma);
  });
}

VectorField fractional_laplacian(const VectorField& f, double gamma) {
  return {fractional_laplacian(f.c[0], gamma),
          fractional_laplacian(f.c[1], gamma),
          fractional_laplacian(f.c[2], gamma)};
}

ScalarField pressure_from_velocity(const VectorField& v,
                                   const SymTensorField& R) {
  const Grid& g = v.grid();
  // T = -v (x) v + R
  SymTensorField T = R - outer_sym(v, v);
  // phat = sum_{ij} k_i k_j That_ij / |k|^2, k != 0
  std::vector<cplx> p(g.size(), cplx(0, 0));
  const int n = g.n;
  std::size_t q = 0;
  for (int i = 0; i < n; ++i) {
    int ka = g.kof(i);
    for (int j = 0; j < n; ++j) {
      int kb = g.kof(j);
      for (int k = 0; k < n; ++k, ++q) {
        int kc = g.kof(k);
        double k2 = ksq(ka, kb, kc);
        if (k2 == 0) continue;
        double kk[3] = {double(ka), double(kb), double(kc)};
        cplx s(0, 0);
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            s += kk[a] * kk[b] * T.at(a, b).modes()[q];
        p[q] = s / k2;
      }
    }
  }
  return ScalarField::from_modes(g, std::move(p), false);
}

ScalarField pressure_from_velocity(const VectorField& v) {
  return pressure_from_velocity(v, SymTensorField::zero(v.grid()));
}

VectorField leray_project(const VectorField& v) {
  const Grid& g = v.grid();
  std::array<std::vector<cplx>, 3> out;
  for (auto& o : out) o.resize(g.size());
  const int n = g.n;
  std::size_t q = 0;
  for (int i = 0; i < n; ++i) {
    int ka = g.kof(i);
    for (int j = 0; j < n; ++j) {
      int kb = g.kof(j);
      for (int k = 0; k < n; ++k, ++q) {
        int kc = g.kof(k);
        double k2 = ksq(ka, kb, kc);
        cplx v0 = v.c[0].modes()[q], v1 = v.c[1].modes()[q],
             v2 = v.c[2].modes()[q];
        if (k2 == 0) {
          out[0][q] = v0;
          out[1][q] = v1;
          out[2][q] = v2;
          continue;
        }
        cplx kd = (double(ka) * v0 + double(kb) * v1 + double(kc) * v2) / k2;
        out[0][q] = v0 - double(ka) * kd;
        out[1][q] = v1 - double(kb) * kd;
        out[2][q] = v2 - double(kc) * kd;
      }
    }
  }
  VectorField r;
  for (int i = 0; i < 3; ++i)
    r.c[i] = ScalarField::from_modes(g, std::move(out[i]), false);
  return r;
}

VectorField biot_savart(const VectorField& v) {
  const Grid& g = v.grid();
  std::array<std::vector<cplx>, 3> out;
  for (auto& o : out) o.resize(g.size());
  const int n = g.n;
  const cplx I(0, 1);
  std::size_t q = 0;
  for (int i = 0; i < n; ++i) {
    int ka = g.kof(i);
    for (int j = 0; j < n; ++j) {
      int kb = g.kof(j);
      for (int k = 0; k < n; ++k, ++q) {
        int kc = g.kof(k);
        double k2 = ksq(ka, kb, kc);
        if (k2 == 0) continue;
        cplx v0 = v.c[0].modes()[q], v1 = v.c[1].modes()[q],
             v2 = v.c[2].modes()[q];
        // (1/|k|^2) i k x vhat
        out[0][q] = I * (double(kb) * v2 - double(kc) * v1) / k2;
        out[1][q] = I * (double(kc) * v0 - double(ka) * v2) / k2;
        out[2][q] = I * (double(ka) * v1 - double(kb) * v0) / k2;
      }
    }
  }
  VectorField r;
  for (int i = 0; i < 3; ++i)
    r.c[i] = ScalarField::from_modes(g, std::move(out[i]), false);
  return r;
}

InverseDivergenceResult inverse_divergence(const VectorField& f,
                                           double mean_tol) {
  const Grid& g = f.grid();
  auto mean = f.mean();
  double mn = std::sqrt(mean[0] * mean[0] + mean[1] * mean[1] +
                        mean[2] * mean[2]);
  if (mn > mean_tol)
    throw std::runtime_error(
        "inverse_divergence: input has non-negligible mean");
  std::array<std::vector<cplx>, 6> out;
  for (auto& o : out) o.resize(g.size(), cplx(0, 0));
  const int n = g.n;
  const cplx I(0, 1);
  std::size_t q = 0;
  for (int i = 0; i < n; ++i) {
    int ka = g.kof(i);
    for (int j = 0; j < n; ++j) {
      int kb = g.kof(j);
      for (int k = 0; k < n; ++k, ++q) {
        int kc = g.kof(k);
        double k2 = ksq(ka, kb, kc);
        if (k2 == 0) continue;
        double kk[3] = {double(ka), double(kb), double(kc)};
        cplx fh[3] = {f.c[0].modes()[q], f.c[1].modes()[q], f.c[2].modes()[q]};
        cplx kf = kk[0] * fh[0] + kk[1] * fh[1] + kk[2] * fh[2];
        for (int a = 0; a < 3; ++a)
          for (int b = a; b < 3; ++b) {
            cplx s = 0.5 * kk[a] * kk[b] * kf / (k2 * k2) -
                     (kk[a] * fh[b] + kk[b] * fh[a]) / k2;
            if (a == b) s += 0.5 * kf / k2;
            out[SymTensorField::index(a, b)][q] = I * s;
          }
      }
    }
  }
  InverseDivergenceResult res;
  for (int i = 0; i < 6; ++i)
    res.R.c[i] = ScalarField::from_modes(g, std::move(out[i]), false);
  res.input_mean_norm = mn;
  res.trace_norm = res.R.trace().sup_norm();
  return res;
}

std::vector<PhaseSample> stationary_phase_probe(
    const ScalarField& a, const VectorField& phi_minus_id,
    const std::array<int, 3>& k_dir, const std::vector<int>& k_amps) {
  const Grid& g = a.grid();
  // resolution guard: sup |grad Phi| along the oscillation
  double grad_sup = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      grad_sup = std::max(grad_sup,
                          phi_minus_id.c[i].derivative(j).sup_norm());
  double kdn = std::sqrt(ksq(k_dir[0], k_dir[1], k_dir[2]));
  const auto& av = a.values();
  std::array<const std::vector<double>*, 3> dv = {
      &phi_minus_id.c[0].values(), &phi_minus_id.c[1].values(),
      &phi_minus_id.c[2].values()};
  std::vector<PhaseSample> out;
  const int n = g.n;
  const double h = g.dx();
  for (int amp : k_amps) {
    if (amp * kdn * (1.0 + 3.0 * grad_sup) > 0.5 * n)
      throw std::runtime_error("stationary_phase_probe: oscillation unresolved");
    cplx acc(0, 0);
    std::size_t p = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k, ++p) {
          double phase =
              amp * (k_dir[0] * (i * h + (*dv[0])[p]) +
                     k_dir[1] * (j * h + (*dv[1])[p]) +
                     k_dir[2] * (k * h + (*dv[2])[p]));
          acc += av[p] * cplx(std::cos(phase), std::sin(phase));
        }
    out.push_back({amp, std::abs(acc) / double(g.size())});
  }
  return out;
}

ScalarField czo_second_derivative(const ScalarField& f, int i, int j) {
  return f.apply_real_symbol([i, j](int a, int b, int c) {
    double k2 = ksq(a, b, c);
    if (k2 == 0) return 0.0;
    double kk[3] = {double(a), double(b), double(c)};
    return kk[i] * kk[j] / k2;
  });
}

double loglog_slope(const std::vector<double>& x,
                    const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::runtime_error("loglog_slope: need >= 2 samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0 || y[i] <= 0) continue;  // skip exact zeros
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  if (m < 2) throw std::runtime_error("loglog_slope: too few usable samples");
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace nsr

#include "nsr/mollify.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace nsr {
namespace {

double bump(double r2) {  // unnormalized exp bump, argument |x|^2 < 1
  return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
}

std::vector<double> build_multiplier(const Grid& g, double ell) {
  if (ell <= 0) throw std::runtime_error("mollify: ell must be positive");
  const int n = g.n;
  const double h = g.dx();
  // sampled kernel psi_ell at grid nodes (min-image), normalized to sum 1
  std::vector<double> kv(g.size(), 0.0);
  double sum = 0;
  std::size_t p = 0;
  for (int i = 0; i < n; ++i) {
    double xi = std::min<double>(i, n - i) * h / ell;
    for (int j = 0; j < n; ++j) {
      double xj = std::min<double>(j, n - j) * h / ell;
      for (int k = 0; k < n; ++k, ++p) {
        double xk = std::min<double>(k, n - k) * h / ell;
        double v = bump(xi * xi + xj * xj + xk * xk);
        kv[p] = v;
        sum += v;
      }
    }
  }
  if (sum <= 0) throw std::runtime_error("mollify: kernel vanished on grid");
  for (auto& v : kv) v /= sum;
  ScalarField kf = ScalarField::from_values(g, std::move(kv));
  std::vector<double> mult(g.size());
  const double scale = double(g.size());
  for (std::size_t q = 0; q < mult.size(); ++q)
    mult[q] = scale * kf.modes()[q].real();  // kernel is even: imag ~ 0
  return mult;
}

struct Key {
  int n;
  double ell;
  bool operator<(const Key& o) const {
    return n != o.n ? n < o.n : ell < o.ell;
  }
};

}  // namespace

const std::vector<double>& mollifier_multiplier(const Grid& g, double ell) {
  static std::map<Key, std::vector<double>> cache;
  Key key{g.n, ell};
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, build_multiplier(g, ell)).first;
  return it->second;
}

MollifyResult mollify(const ScalarField& f, double ell) {
  const auto& mult = mollifier_multiplier(f.grid(), ell);
  std::vector<cplx> m = f.modes();
  kernels::ops().cmul_real(m.data(), mult.data(), m.size());
  MollifyResult r;
  r.field = ScalarField::from_modes(f.grid(), std::move(m), false);
  r.ell = ell;
  r.under_resolved = ell < 2.0 * f.grid().dx();
  return r;
}

MollifyResultVec mollify(const VectorField& f, double ell) {
  MollifyResultVec r;
  for (int i = 0; i < 3; ++i) {
    auto s = mollify(f.c[i], ell);
    r.field.c[i] = std::move(s.field);
    r.under_resolved = s.under_resolved;
  }
  r.ell = ell;
  return r;
}

MollifyResultTen mollify(const SymTensorField& f, double ell) {
  MollifyResultTen r;
  for (int i = 0; i < 6; ++i) {
    auto s = mollify(f.c[i], ell);
    r.field.c[i] = std::move(s.field);
    r.under_resolved = s.under_resolved;
  }
  r.ell = ell;
  return r;
}

std::vector<CommutatorSample> commutator_probe(
    const ScalarField& f, const ScalarField& g,
    const std::vector<double>& ells) {
  std::vector<CommutatorSample> out;
  ScalarField fg = f.times(g);
  for (double ell : ells) {
    auto fm = mollify(f, ell);
    auto gm = mollify(g, ell);
    auto fgm = mollify(fg, ell);
    ScalarField comm = fm.field.times(gm.field) - fgm.field;
    out.push_back({ell, comm.sup_norm(), fm.under_resolved});
  }
  return out;
}

}  // namespace nsr

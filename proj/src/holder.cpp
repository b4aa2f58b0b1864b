#include "nsr/holder.hpp"

#include <algorithm>
#include <cmath>

namespace nsr {
namespace {

// deterministic 64-bit LCG for the random sampling offsets
struct Lcg {
  std::uint64_t s;
  explicit Lcg(std::uint64_t seed) : s(seed) {}
  std::uint64_t next() {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return s >> 17;
  }
  int uniform(int lo, int hi) {  // inclusive
    return lo + int(next() % std::uint64_t(hi - lo + 1));
  }
};

double min_image(int d, int n) {
  int m = ((d % n) + n) % n;
  return std::min(m, n - m);
}

// max over grid points of |v[p + off] - v[p]| for periodic shift off
double max_shift_diff(const std::vector<double>& v, int n, int a, int b,
                      int c) {
  auto wrap = [n](int i) { return ((i % n) + n) % n; };
  std::vector<int> ia(n), ib(n), ic(n);
  for (int i = 0; i < n; ++i) {
    ia[i] = wrap(i + a);
    ib[i] = wrap(i + b);
    ic[i] = wrap(i + c);
  }
  double m = 0;
  std::size_t p = 0;
  for (int i = 0; i < n; ++i) {
    std::size_t oi = std::size_t(ia[i]) * n * n;
    for (int j = 0; j < n; ++j) {
      std::size_t oj = oi + std::size_t(ib[j]) * n;
      for (int k = 0; k < n; ++k, ++p) {
        double d = std::abs(v[oj + ic[k]] - v[p]);
        if (d > m) m = d;
      }
    }
  }
  return m;
}

// alpha-quotient estimate of a single scalar sample array
double alpha_quotient(const ScalarField& g, double alpha, std::size_t* count) {
  const int n = g.grid().n;
  const double h = g.grid().dx();
  const auto& v = g.values();
  struct Off {
    int a, b, c;
  };
  std::vector<Off> offs;
  for (int d = 1; d <= n / 2; ++d) {
    offs.push_back({d, 0, 0});
    offs.push_back({0, d, 0});
    offs.push_back({0, 0, d});
    offs.push_back({d, d, d});
  }
  Lcg rng(0x9e3779b97f4a7c15ULL);
  for (int t = 0; t < 64; ++t) {
    Off o{rng.uniform(-n / 2, n / 2), rng.uniform(-n / 2, n / 2),
          rng.uniform(-n / 2, n / 2)};
    if (o.a == 0 && o.b == 0 && o.c == 0) o.a = 1;
    offs.push_back(o);
  }
  if (count) *count = offs.size();
  double best = 0;
  for (const auto& o : offs) {
    double da = min_image(o.a, n), db = min_image(o.b, n),
           dc = min_image(o.c, n);
    double dist = h * std::sqrt(da * da + db * db + dc * dc);
    double diff = max_shift_diff(v, n, o.a, o.b, o.c);
    best = std::max(best, diff / std::pow(dist, alpha));
  }
  return best;
}

template <class FieldLike>
HolderEstimate seminorm_impl(const FieldLike& components, double exponent) {
  int m = int(std::floor(exponent + 1e-12));
  double alpha = exponent - m;
  if (alpha < 1e-12) alpha = 0;
  if (m < 0 || m > 8)
    throw std::runtime_error("holder_seminorm: exponent outside resolvable range");
  HolderEstimate est;
  est.exponent = exponent;
  est.m = m;
  est.alpha = alpha;
  std::size_t cnt = 0;
  for (const ScalarField* f : components) {
    // all derivatives of order exactly m
    for (int t0 = 0; t0 <= m; ++t0)
      for (int t1 = 0; t1 + t0 <= m; ++t1) {
        int t2 = m - t0 - t1;
        ScalarField g = f->derivative_multi({t0, t1, t2});
        if (alpha == 0) {
          est.value = std::max(est.value, g.sup_norm());
          cnt = std::max<std::size_t>(cnt, 1);
        } else {
          std::size_t c = 0;
          est.value = std::max(est.value, alpha_quotient(g, alpha, &c));
          cnt = std::max(cnt, c);
        }
      }
  }
  est.offsets = cnt;
  return est;
}

}  // namespace

HolderEstimate holder_seminorm(const ScalarField& f, double exponent) {
  std::array<const ScalarField*, 1> comps{&f};
  return seminorm_impl(comps, exponent);
}

HolderEstimate holder_seminorm(const VectorField& f, double exponent) {
  std::array<const ScalarField*, 3> comps{&f.c[0], &f.c[1], &f.c[2]};
  return seminorm_impl(comps, exponent);
}

HolderEstimate holder_seminorm(const SymTensorField& f, double exponent) {
  std::array<const ScalarField*, 6> comps{&f.c[0], &f.c[1], &f.c[2],
                                          &f.c[3], &f.c[4], &f.c[5]};
  return seminorm_impl(comps, exponent);
}

template <class F>
static double holder_norm_impl(const F& f, double exponent) {
  int m = int(std::floor(exponent + 1e-12));
  double alpha = exponent - m;
  double s = 0;
  for (int j = 0; j <= m; ++j) s += holder_seminorm(f, double(j)).value;
  if (alpha > 1e-12) s += holder_seminorm(f, exponent).value;
  return s;
}

double holder_norm(const ScalarField& f, double exponent) {
  return holder_norm_impl(f, exponent);
}
double holder_norm(const VectorField& f, double exponent) {
  return holder_norm_impl(f, exponent);
}

}  // namespace nsr

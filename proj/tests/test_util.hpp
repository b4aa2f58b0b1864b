#pragma once
// Shared helpers for the test suites: deterministic RNG and random
// band-limited fields.

#include <cmath>
#include <cstdint>
#include <vector>

#include "nsr/field.hpp"
#include "nsr/operators.hpp"

namespace nsrtest {

struct Rng {
  std::uint64_t s;
  explicit Rng(std::uint64_t seed) : s(seed ? seed : 1) {}
  std::uint64_t next() {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    return s;
  }
  double uniform() {  // in [0,1)
    return double(next() >> 11) * 0x1.0p-53;
  }
  double sym() { return 2.0 * uniform() - 1.0; }  // in (-1,1)
};

// random real band-limited scalar field, modes |k|<=kmax, smooth decay
inline nsr::ScalarField random_scalar(const nsr::Grid& g, Rng& rng, int kmax,
                                      double amp = 1.0) {
  std::vector<nsr::cplx> m(g.size(), nsr::cplx(0, 0));
  for (int i = 0; i < g.n; ++i) {
    int ka = g.kof(i);
    if (std::abs(ka) > kmax) continue;
    for (int j = 0; j < g.n; ++j) {
      int kb = g.kof(j);
      if (std::abs(kb) > kmax) continue;
      for (int k = 0; k < g.n; ++k) {
        int kc = g.kof(k);
        if (std::abs(kc) > kmax) continue;
        double k2 = double(ka) * ka + double(kb) * kb + double(kc) * kc;
        if (k2 == 0) continue;
        double w = amp * std::exp(-0.5 * k2 / double(kmax));
        m[g.idx(i, j, k)] = nsr::cplx(w * rng.sym(), w * rng.sym());
      }
    }
  }
  return nsr::ScalarField::from_modes(g, std::move(m), true);
}

inline nsr::VectorField random_vector(const nsr::Grid& g, Rng& rng, int kmax,
                                      double amp = 1.0) {
  return {random_scalar(g, rng, kmax, amp), random_scalar(g, rng, kmax, amp),
          random_scalar(g, rng, kmax, amp)};
}

inline nsr::VectorField random_divfree(const nsr::Grid& g, Rng& rng, int kmax,
                                       double amp = 1.0) {
  return nsr::leray_project(random_vector(g, rng, kmax, amp));
}

}  // namespace nsrtest

#pragma once
// Discrete Holder-seminorm estimators: spectral derivatives up to the integer
// part, then a max over sampled point pairs of |df| / |dx|^alpha. Documented
// lower-bound estimators, exact for sup-norms (exponent with alpha = 0).

#include "nsr/field.hpp"

namespace nsr {

struct HolderEstimate {
  double exponent = 0;   // m + alpha
  int m = 0;             // integer part
  double alpha = 0;      // fractional part
  double value = 0;      // estimated seminorm [f]_{m+alpha}
  std::size_t offsets = 0;  // number of displacement vectors sampled
};

// seminorm [f]_{m+alpha}; exponent = m + alpha with m = floor(exponent)
HolderEstimate holder_seminorm(const ScalarField& f, double exponent);
HolderEstimate holder_seminorm(const VectorField& f, double exponent);
HolderEstimate holder_seminorm(const SymTensorField& f, double exponent);

// full norm ||f||_{m+alpha} = sum_{j<=m} [f]_j + [f]_{m+alpha}
double holder_norm(const ScalarField& f, double exponent);
double holder_norm(const VectorField& f, double exponent);

}  // namespace nsr

#pragma once
// Mollification with a genuine compactly supported radial bump (not a sharp
// Fourier cutoff): psi(x) = c exp(-1/(1-|x|^2)) on |x|<1, unit mass, scaled
// to length ell; applied as a discrete circular convolution (quadrature in
// collocation space) realized through its exact grid Fourier multiplier.

#include <utility>
#include <vector>

#include "nsr/field.hpp"

namespace nsr {

struct MollifyResult {
  ScalarField field;
  double ell = 0;
  bool under_resolved = false;  // ell below two grid spacings
};

struct MollifyResultVec {
  VectorField field;
  double ell = 0;
  bool under_resolved = false;
};

struct MollifyResultTen {
  SymTensorField field;
  double ell = 0;
  bool under_resolved = false;
};

MollifyResult mollify(const ScalarField& f, double ell);
MollifyResultVec mollify(const VectorField& f, double ell);
MollifyResultTen mollify(const SymTensorField& f, double ell);

// the discrete multiplier of psi_ell on this grid (cached); index layout of
// Grid::idx, real-valued, value 1 at k=0
const std::vector<double>& mollifier_multiplier(const Grid& g, double ell);

struct CommutatorSample {
  double ell;
  double norm;            // ||(f*psi)(g*psi) - (fg)*psi||_0
  bool under_resolved;
};

std::vector<CommutatorSample> commutator_probe(const ScalarField& f,
                                               const ScalarField& g,
                                               const std::vector<double>& ells);

}  // namespace nsr

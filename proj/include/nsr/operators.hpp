#pragma once
// Fourier-multiplier operators: fractional Laplacian, Leray projection,
// pressure solve, Biot-Savart, the symmetric inverse-divergence operator,
// and the stationary-phase decay probe. k = 0 conventions: all inversions of
// the Laplacian send the mean to zero.

#include <vector>

#include "nsr/field.hpp"

namespace nsr {

// (-Delta)^gamma: mode k scaled by |k|^{2 gamma}, k = 0 mapped to 0
ScalarField fractional_laplacian(const ScalarField& f, double gamma);
VectorField fractional_laplacian(const VectorField& f, double gamma);

// zero-mean p with  Delta p = div div (-v (x) v + R)
ScalarField pressure_from_velocity(const VectorField& v,
                                   const SymTensorField& R);
ScalarField pressure_from_velocity(const VectorField& v);  // R = 0

// Leray projection onto divergence-free fields (mean preserved)
VectorField leray_project(const VectorField& v);

// z = (-Delta)^{-1} curl v  (so curl z = v - mean v when div v = 0)
VectorField biot_savart(const VectorField& v);

struct InverseDivergenceResult {
  SymTensorField R;
  double input_mean_norm = 0;  // |mean f| removed before inversion
  double trace_norm = 0;       // sup |tr R| (reported; sits at machine zero)
};

// symmetric tensor R with div R = f - mean(f); mean must be ~0
// (throws if |mean f| > mean_tol)
InverseDivergenceResult inverse_divergence(const VectorField& f,
                                           double mean_tol = 1e-8);

struct PhaseSample {
  int k_amp;            // oscillation amplitude multiplier along k_dir
  double integral_abs;  // |average of a e^{i k_amp k_dir . Phi}|
};

// quadrature values of the oscillatory averages over a list of |k| values;
// Phi given through Phi - id (periodic part). Throws if the oscillation is
// unresolved on the grid.
std::vector<PhaseSample> stationary_phase_probe(const ScalarField& a,
                                                const VectorField& phi_minus_id,
                                                const std::array<int, 3>& k_dir,
                                                const std::vector<int>& k_amps);

// second derivatives of the inverse Laplacian: d_i d_j Delta^{-1} f
ScalarField czo_second_derivative(const ScalarField& f, int i, int j);

// least-squares slope of log|y| vs log x (utility for decay/scaling fits)
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace nsr

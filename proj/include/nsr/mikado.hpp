#pragma once
// Mikado flows: a family W(R, xi) of stationary pressureless pipe flows with
// prescribed second moment R over the closed half-ball around the identity.
//
// Construction: 9 directions (3 axes + 6 face diagonals) with the closed-form
// positive decomposition
//   mu(R)   = sqrt(sum_{i<j} R_ij^2 + eps^2)
//   G_{ij+-}^2 = mu(R) +- R_ij         (pair directions (e_i +- e_j)/sqrt2)
//   G_{ax i}^2 = R_ii - 2 mu(R)        (axis directions)
// which reconstructs R exactly and stays strictly positive on B̄_{1/2}(Id).
//
// Pipe cross-section: h(r) = A (1 - r^2/(2 s^2)) e^{-r^2/(2 s^2)} — exact
// zero 2D mean, analytic Fourier data, normalized so the torus average of
// h^2 is 1. Supports are numerically compact (< 1e-13 outside ~8s).

#include <array>
#include <vector>

#include "nsr/field.hpp"

namespace nsr {

struct SymMat {
  // xx, xy, xz, yy, yz, zz
  std::array<double, 6> m{1, 0, 0, 1, 0, 1};

  static SymMat identity() { return SymMat{}; }
  static int index(int i, int j) {
    if (i > j) std::swap(i, j);
    static const int map[3][3] = {{0, 1, 2}, {-1, 3, 4}, {-1, -1, 5}};
    return map[i][j];
  }
  double at(int i, int j) const { return m[index(i, j)]; }
  double& at(int i, int j) { return m[index(i, j)]; }
  double frob_dist_id() const;  // Frobenius distance to Id
};

struct MikadoConfig {
  double sigma = 0.105;  // pipe width
  double eps = 0.05;     // Gamma regularization
  int k_max = 16;        // per-plane coefficient truncation |k| <= k_max
  int placement_rounds = 150000;  // offset search budget
  unsigned seed = 20240u;
};

struct PipeMode {
  std::array<int, 3> k;
  cplx h;   // torus Fourier coefficient of h_j at k
  cplx h2;  // coefficient of h_j^2 at k
};

struct MikadoDirection {
  std::array<int, 3> d;        // integer direction vector
  std::array<double, 3> dhat;  // normalized
  std::array<double, 3> offset;  // point on the pipe axis (perp to d)
  double length;               // 2 pi |d|
  double amp;                  // profile amplitude A (avg of h^2 over T^3 is 1)
  std::vector<PipeMode> modes; // k . d = 0, 0 < |k| <= k_max
};

class MikadoFamily {
 public:
  static MikadoFamily build(const MikadoConfig& cfg);

  const MikadoConfig& config() const { return cfg_; }
  const std::array<MikadoDirection, 9>& directions() const { return dirs_; }
  double min_line_separation() const { return min_sep_; }

  // Gamma_j^2; throws if R outside the closed half-ball or positivity fails
  static std::array<double, 9> gamma_sq(const SymMat& R, double eps);
  std::array<double, 9> gamma(const SymMat& R) const;

  // real-space evaluation on a grid (min-image distance to the pipe axes)
  ScalarField pipe_field(int j, const Grid& g) const;
  std::array<ScalarField, 9> pipe_fields(const Grid& g) const;
  // pointwise |grad h_j| sampled analytically (for overlap bounds)
  ScalarField pipe_gradnorm_field(int j, const Grid& g) const;
  VectorField evaluate_W(const SymMat& R, const Grid& g) const;
  VectorField evaluate_W(const SymMat& R,
                         const std::array<ScalarField, 9>& pipes) const;

  struct AK {
    std::array<int, 3> k;
    std::array<cplx, 3> a;
  };
  // truncated coefficients a_k(R) over the union of the 9 planes
  std::vector<AK> fourier_a(const SymMat& R) const;

  struct CK {
    std::array<int, 3> k;
    std::array<std::array<cplx, 3>, 3> C;
  };
  // truncated coefficients C_k(R) of W (x) W - R (per-pipe part)
  std::vector<CK> fourier_C(const SymMat& R) const;

  // coefficient data for the decay fit / the constant M:
  // Mbar = sup over sampled R of max_k |a_k(R)| |k|^4
  double fit_Mbar(const std::vector<SymMat>& samples) const;

  struct MResult {
    double Mbar;
    double M;          // 64 Mbar sum_{0<|k|<=k_max} |k|^-4
    double tail_bound; // 64 Mbar * (integral bound for |k| > k_max)
  };
  MResult compute_M(double Mbar) const;

 private:
  MikadoConfig cfg_;
  std::array<MikadoDirection, 9> dirs_;
  double min_sep_ = 0;
};

// potential coefficient i k x a / |k|^2 with curl identity
// curl(coeff e^{i k.xi}) = a e^{i k.xi}; requires k != 0 and a.k = 0
std::array<cplx, 3> potential_coefficients(const std::array<cplx, 3>& a,
                                           const std::array<int, 3>& k);

// deterministic samples in the closed half-ball around Id (for test suites)
std::vector<SymMat> sample_half_ball(int count, unsigned seed);

}  // namespace nsr

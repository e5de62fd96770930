// SPDX-License-Identifier: Apache-2.0
//
// Hyperelliptic curve w^2 = P(lambda) built from a conjugate-symmetric
// eigenvalue set: sheet-tracked square root, canonical homology basis,
// a-/b-period matrices, and the regularized line integrals to the two
// points at infinity that feed the solution constructor.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fgnls/common.hpp"
#include "fgnls/quadrature.hpp"

namespace fgnls {

// The prescribed nonlinear main spectrum: one representative per conjugate
// pair, all strictly in the upper half plane.
struct MainSpectrum {
  std::vector<cplx> points;

  int genus() const { return static_cast<int>(points.size()) - 1; }
  void validate() const;  // throws DegenerateSpectrum / Error
};

// Oriented branch cut from the lower to the upper branch point of one pair.
struct BranchCut {
  cplx lower, upper;
  double abscissa() const { return upper.real(); }
  double height() const { return upper.imag(); }
};

struct HyperellipticCurve {
  MainSpectrum spectrum;  // sorted by increasing real part
  int genus = 0;
  std::vector<BranchCut> cuts;       // same order as spectrum
  std::vector<cplx> branch_points;   // all 2g+2 roots of P
  Eigen::VectorXd P_coeffs;          // real coefficients of P, ascending powers
  double diameter = 0.0;             // max pairwise branch-point distance
  double eps_bp = 0.0;               // branch-point exclusion radius
};

HyperellipticCurve build_curve(const MainSpectrum& spectrum);

// w(lambda) on the given sheet (+1 or -1).  Sheet +1 is fixed by
// w / lambda^{g+1} -> +1 as lambda -> +infinity.  Continuous off the cuts,
// flips sign across them.  Throws AtBranchPoint within eps_bp of a root.
cplx sqrt_P(const HyperellipticCurve& curve, cplx lambda, int sheet);

// One analytic piece of a contour, tagged with the sheet it lives on.
struct PathSegment {
  enum class Kind { line, ellipse_arc };
  Kind kind = Kind::line;
  cplx p0, p1;                      // line endpoints
  cplx center;                      // arc data
  double rx = 0, ry = 0, t0 = 0, t1 = 0;
  int sheet = +1;

  cplx point(double s) const;     // s in [0, 1]
  cplx velocity(double s) const;  // d(point)/ds
  PathSegment reversed() const;
};

// A cycle (possibly several closed components) or an open chain of segments.
struct CyclePath {
  std::vector<PathSegment> segments;
};

struct HomologyBasis {
  std::vector<CyclePath> a_cycles;
  std::vector<CyclePath> b_cycles;     // canonical partners, a_i . b_j = delta_ij
  std::vector<CyclePath> chain_loops;  // adjacent-cut loops; b_j = sum of loops j..g-1
  Eigen::MatrixXi a_dot_b;             // verified intersection numbers
};

HomologyBasis canonical_homology_basis(const HyperellipticCurve& curve);

// Signed count of same-sheet transversal crossings between two paths.
int intersection_number(const CyclePath& p, const CyclePath& q);

struct PeriodData {
  HyperellipticCurve curve;
  HomologyBasis basis;
  Eigen::MatrixXcd A, B, tau, A_inv;
  // ext_moments(k, j) = loop integral over a_{j+1} of lambda^k dlambda / w,
  // k = 0..g+2 (the extra rows feed the second/third-kind normalizations).
  Eigen::MatrixXcd ext_moments;
  double max_quad_error = 0.0;
  double cond_A = 0.0;
  double tau_asymmetry = 0.0;
  double min_im_tau_eig = 0.0;
};

PeriodData period_matrices(const HyperellipticCurve& curve, const HomologyBasis& basis,
                           const QuadratureSpec& quad = {});

// Integral of (sum_k poly[k] lambda^k) dlambda / w along a finite path with
// the path's sheet annotations applied.
cplx abelian_integral(const HyperellipticCurve& curve, const CyclePath& path,
                      const Eigen::VectorXcd& poly, const QuadratureSpec& quad = {});

// Regularized line integrals from infinity^- to infinity^+ along one shared
// path (an integer-lattice-consistent choice binds all four quantities):
//   delta   : integral of the normalized holomorphic vector dV (theta shift)
//   I_p     : second-kind differential with simple pole growth, omega0 = I_p
//   I_E     : second-kind with double-pole growth, k0 = I_E
//   I_Omega : third-kind with log singularities, K = 2 exp(-I_Omega / 2)
struct InfinityIntegrals {
  Eigen::VectorXcd delta;
  cplx I_p{0, 0}, I_E{0, 0}, I_Omega{0, 0};
};

InfinityIntegrals infinity_integrals(const PeriodData& periods, const QuadratureSpec& quad = {});

}  // namespace fgnls

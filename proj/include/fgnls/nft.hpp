// SPDX-License-Identifier: Apache-2.0
//
// Forward periodic nonlinear Fourier transform for the focusing NLSE:
// Floquet discriminant of the Zakharov-Shabat problem over one period of the
// field, main-spectrum root finding, period averaging, and 2D histogram
// aggregation across noisy realizations.
#pragma once

#include <vector>

#include <Eigen/Dense>

#include "fgnls/common.hpp"
#include "fgnls/fgs.hpp"
#include "fgnls/field.hpp"

namespace fgnls {

// One period of a dimensionless scattering potential psi(tau), uniformly
// sampled; samples[n] is treated as constant on its dt = period / size cell.
struct ZSPotential {
  std::vector<cplx> samples;
  double period = 0.0;

  void validate() const;  // nonempty, finite samples, positive period
};

// Extracts row iz of a field grid as one potential period.  Dimensional grids
// are converted back to soliton units (psi = A / C, tau = T / T0) first.
ZSPotential make_potential(const FieldGrid& grid, int iz, const DimensionalScales& scales);
ZSPotential make_potential(const FieldGrid& grid, int iz);  // dimensionless grids

// Transfer matrix of the piecewise-constant Zakharov-Shabat system
//     d/dtau Phi = U(tau) Phi,   U = -i lambda sigma3 + [[0, psi], [-conj(psi), 0]],
// accumulated over one period.  Each per-sample factor is the closed-form
// exponential of a traceless matrix, so the product is unimodular up to
// rounding (|det - 1| stays below 1e-8 in all the test scenarios).
Eigen::Matrix2cd monodromy(const ZSPotential& potential, cplx lambda);

// Half trace of the monodromy.  Entire in lambda; main-spectrum points are
// the roots of Delta(lambda) = +1 (periodic) and -1 (antiperiodic).
cplx floquet_discriminant(const ZSPotential& potential, cplx lambda);

enum class RootFamily { periodic, antiperiodic };

struct SpectrumPoint {
  cplx lambda{0.0, 0.0};
  double residual = 0.0;  // |Delta(lambda) -/+ 1| at the reported location
  bool converged = false;
  RootFamily family = RootFamily::periodic;
};

// Upper-half-plane points only; complex conjugates are implied.  Unconverged
// seeds are retained (converged = false) rather than silently dropped.
struct SpectrumEstimate {
  std::vector<SpectrumPoint> points;

  std::vector<cplx> converged_points() const;
};

struct SearchBox {
  double re_min = -2.0, re_max = 2.0;
  double im_min = 0.0, im_max = 6.0;  // must not dip below the real axis
};

struct SearchOptions {
  int grid_density = 40;      // coarse seeds per axis
  double tol = 1e-8;          // convergence threshold on |Delta -/+ 1|
  int max_iterations = 60;    // Newton steps per seed
  double merge_radius = 0.0;  // <= 0: 1e-3 of the box diagonal
};

// Coarse grid scan for local minima of |Delta -/+ 1| followed by Newton
// refinement (central-difference derivative).  Both root families are
// searched; duplicates within the merge radius collapse to the best residual.
// Throws NoRootsFound when not a single seed converges (diagnostic: the box
// or the potential is off), never silently returns an empty estimate.
SpectrumEstimate find_main_spectrum(const ZSPotential& potential, const SearchBox& box,
                                    const SearchOptions& options = {});

// Splits a long record into consecutive groups of group_size periods and
// returns the coherent per-group mean waveform (one vector per group).
// Throws LengthMismatch unless record.size() = period_samples * group_size * n.
std::vector<std::vector<cplx>> average_periods(const std::vector<cplx>& record,
                                               std::size_t period_samples, std::size_t group_size);

struct HistogramSpec {
  double re_min = -2.5, re_max = 2.5;
  double im_min = 0.0, im_max = 6.5;
  int n_re = 64, n_im = 64;
  // Converged points below this imaginary part are tallied separately as
  // near-real-axis artifacts instead of polluting the main counts.
  double artifact_floor = 0.5;
};

struct SpectrumHistogram {
  std::vector<double> re_edges;  // n_re + 1 ascending edges
  std::vector<double> im_edges;  // n_im + 1 ascending edges
  Eigen::MatrixXi counts;        // counts(i_re, i_im)
  long accepted = 0;             // total of counts (converged, above floor, in range)
  long artifacts = 0;            // converged but below the artifact floor
  long out_of_range = 0;         // converged, above floor, outside the bin box

  double re_center(int i) const { return 0.5 * (re_edges[i] + re_edges[i + 1]); }
  double im_center(int j) const { return 0.5 * (im_edges[j] + im_edges[j + 1]); }
};

// Pools the converged points of every estimate into one 2D histogram.
SpectrumHistogram spectrum_histogram(const std::vector<SpectrumEstimate>& estimates,
                                     const HistogramSpec& spec = {});

// Band-limited periodic interpolation onto factor * size samples (optional
// resolution boost before scattering).  Trigonometric polynomials below the
// input Nyquist rate are reproduced exactly.
ZSPotential upsample(const ZSPotential& potential, int factor);

}  // namespace fgnls

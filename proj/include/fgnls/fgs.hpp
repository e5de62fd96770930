// SPDX-License-Identifier: Apache-2.0
//
// Finite-gap solution constructor: turns period data of the spectral curve
// into the theta-quotient parameter set, evaluates the dimensionless envelope
// psi(zeta, tau), measures how well it satisfies the focusing NLSE
//     i psi_zeta + psi_tautau + 2 |psi|^2 psi = 0,
// and converts to dimensional fiber units.
#pragma once

#include <vector>

#include "fgnls/curve.hpp"
#include "fgnls/field.hpp"
#include "fgnls/theta.hpp"

namespace fgnls {

struct ThetaParameters {
  MainSpectrum spectrum;
  int g = 0;
  Eigen::VectorXd k;            // wavenumbers (real, sanitized)
  Eigen::VectorXd omega;        // frequencies (real, sanitized)
  Eigen::VectorXcd delta_plus;  // numerator theta shift; delta_minus = 0
  cplx K{0.0, 0.0};             // amplitude factor
  double k0 = 0.0, omega0 = 0.0;
  RiemannMatrix tau;

  // Presentation bookkeeping (the transforms relabel the same solution):
  // a unimodular cycle recombination M applied to (omega, k, delta, tau) for
  // mirror-symmetric spectra, and an integer lattice offset folded into the
  // carrier so that a commensurate carrier frequency is reduced to zero.
  Eigen::MatrixXi frame;
  Eigen::VectorXi carrier_shift;

  double max_imag_residue = 0.0;  // largest stripped imaginary part
  double p_tau = 0.0;             // fundamental time period (inf if none)
  double p_zeta = 0.0;            // fundamental evolution period (inf if none)
};

// The spectrum argument must be the one the period data was built from; it is
// cross-checked and echoed into the result.
ThetaParameters derive_parameters(const PeriodData& periods, const MainSpectrum& spectrum,
                                  const QuadratureSpec& quad = {});
// Convenience: builds curve, homology basis and period matrices first.
ThetaParameters derive_parameters(const MainSpectrum& spectrum, const QuadratureSpec& quad = {});

// One-off evaluation of the theta quotient solution.
cplx evaluate_psi(const ThetaParameters& params, double zeta, double tau_time);

// Cached evaluator for grids: both theta series are precomputed once.
class PsiEvaluator {
 public:
  explicit PsiEvaluator(const ThetaParameters& params, double eps = 1e-12);
  cplx operator()(double zeta, double tau_time) const;
  const ThetaParameters& params() const { return params_; }

 private:
  ThetaParameters params_;
  ThetaSeries num_, den_;
  double log_diff_ = 0.0;
};

// Finite-difference defect of Eq. (i d/dzeta + d^2/dtau^2 + 2|.|^2): the
// master correctness oracle for the curve/theta/constructor pipeline.
struct ResidualSpec {
  int n_zeta = 64;
  int n_tau = 64;
  double zeta0 = 0.0, tau0 = 0.0;
  double zeta_span = 0.0;  // <= 0: one evolution period (or 1.0 if aperiodic)
  double tau_span = 0.0;   // <= 0: one time period (or 3.0 if aperiodic)
  double fd_step = 3e-4;
};
double nlse_residual(const ThetaParameters& params, const ResidualSpec& spec = {});

// Fiber scaling: T0 in ns, beta2 in ps^2/km (< 0), gamma_eff in 1/(W km).
struct ScalingParams {
  double T0 = 1.0;
  double beta2 = -21.5;
  double gamma_eff = 0.36448;
};

struct DimensionalScales {
  double T0_ns = 0.0;
  double Z0_km = 0.0;       // z = Z0 * zeta
  double C_sqrt_mW = 0.0;   // A = C * psi
  double p_T_ns = 0.0;
  double p_z_km = 0.0;
};

DimensionalScales dimensional_scales(const ThetaParameters& params, const ScalingParams& s);

// T0 that stretches the solution's time period onto the target (default 1 ns).
double choose_T0(const ThetaParameters& params, double target_p_T_ns = 1.0);

// Dimensional envelope A(z_km, T_ns) in sqrt(mW).
class DimensionalEvaluator {
 public:
  DimensionalEvaluator(const ThetaParameters& params, const ScalingParams& s);
  cplx operator()(double z_km, double T_ns) const;
  const DimensionalScales& scales() const { return scales_; }

 private:
  PsiEvaluator psi_;
  DimensionalScales scales_;
};

FieldGrid sample_grid(const DimensionalEvaluator& eval, double t_start_ns, double dt_ns, int n_t,
                      const std::vector<double>& z_km);
FieldGrid sample_grid_dimensionless(const PsiEvaluator& eval, double tau0, double dtau, int n_tau,
                                    const std::vector<double>& zetas);

}  // namespace fgnls

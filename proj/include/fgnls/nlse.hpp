// SPDX-License-Identifier: Apache-2.0
//
// Split-step Fourier propagation of the envelope
//     i A_z - (beta2/2) A_TT + gamma |A|^2 A = -(i alpha_np / 2) A
// through single fiber spans and multi-span amplified links (gain, Gaussian
// filter, optional ASE noise per span).  Dimensional grids carry sqrt(mW) /
// ns / km units; dimensionless grids solve the same equation with the
// coefficients taken verbatim (use beta2 = -2, gamma = 2, alpha = 0 for the
// normalized i psi_zeta + psi_tautau + 2|psi|^2 psi = 0).
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "fgnls/field.hpp"

namespace fgnls {

struct FiberSpan {
  double beta2 = -21.5;   // ps^2/km (dimensional) or tau^2/zeta units (dimensionless)
  double gamma = 1.3;     // 1/(W km) (dimensional) or raw (dimensionless)
  double alpha_dB = 0.2;  // dB/km power attenuation; must be 0 for dimensionless runs
  double length = 75.0;   // km (or zeta span)
};

struct FilterSpec {
  double fwhm_GHz = 147.0;  // FWHM of the power transmission |H|^2
  double offset_GHz = 0.0;  // filter center relative to the grid's zero frequency
};

struct AseSpec {
  double noise_figure_dB = 6.0;
  std::uint64_t seed = 1;
};

struct LinkModel {
  FiberSpan span;
  int n_spans = 0;
  // Amplifier amplitude gain per span: nullopt = exact loss compensation
  // exp(alpha_np * L / 2); otherwise the explicit power gain in dB.
  std::optional<double> explicit_gain_dB;
  std::optional<FilterSpec> filter;
  std::optional<AseSpec> ase;
};

struct SimConfig {
  double max_phase_deg = 0.05;  // max nonlinear phase per step
  double max_dz = 1.0;          // km (or zeta)
  bool record_every_span = false;
};

struct EffectiveParams {
  double L_eff = 0.0;      // km
  double gamma_eff = 0.0;  // 1/(W km)
};

// Lumped-amplification reduction: gamma_eff = gamma * L_eff / L with
// L_eff = (1 - exp(-alpha_np L)) / alpha_np (alpha_np = ln(10)/10 * alpha_dB);
// the alpha -> 0 limit gives L_eff = L.
EffectiveParams effective_params(double gamma, double alpha_dB_per_km, double L_km);

// dB/km -> 1/km power attenuation coefficient.
double alpha_nepers(double alpha_dB_per_km);

// One span of symmetric (Strang) split-stepping, in place.  The nonlinear +
// loss sub-problem is solved exactly per step; the step size keeps the
// nonlinear phase under max_phase_deg.  samples.size() must be a power of
// two; the window is treated as periodic.
void split_step_span(std::vector<cplx>& samples, double dt, const FiberSpan& span,
                     const SimConfig& cfg = {}, FieldUnits units = FieldUnits::dimensional);

// Multi-span link: per span split_step -> amplifier gain -> Gaussian filter
// (amplitude transfer exp(-(f - offset)^2 / (2 sigma^2)), sigma from the
// power-transmission FWHM) -> ASE injection.  The input grid must hold a
// single dimensional slice; the result records the input and either every
// span or just the final one.
FieldGrid propagate_link(const FieldGrid& input, const LinkModel& link, const SimConfig& cfg = {});

// Adds circular complex Gaussian noise, flat over the simulation band, with
// per-spectral-mode power n_sp h nu (G-1) df (single polarization,
// n_sp = 10^(NF/10)/2, carrier 193.41 THz).  Deterministic per rng state.
void add_ase(std::vector<cplx>& samples, double dt_ns, double gain_linear,
             double noise_figure_dB, std::mt19937_64& rng);

// Smallest symmetric-about-centroid band (GHz when dimensional) containing
// the given fraction of one slice's spectral power.
double fourier_bandwidth(const FieldGrid& grid, int iz, double fraction = 0.99);

// Sum over sideband pairs of | |c_{+n}| - |c_{-n}| |, normalized by the total
// non-carrier magnitude: 0 for a symmetric comb.
double spectral_asymmetry(const FieldGrid& grid, int iz);

// Complex Fourier coefficients of one slice, centered ordering: index
// m = -n/2 .. n/2-1 maps to out[m + n/2]; out[n/2] is the carrier.
std::vector<cplx> spectrum_coefficients(const FieldGrid& grid, int iz);

// Peak of |A|^2 refined off the sample lattice: log-parabola through the
// discrete maximum and its two (cyclic) neighbours.  Falls back to the raw
// maximum when the three points do not bend downward.
double fitted_peak_power(const FieldGrid& grid, int iz);

// Absolute phase difference, wrapped to [0, pi], between the slice's peak
// sample and the sample half a period away (the local background of a
// periodic breather-like profile).
double peak_background_phase(const FieldGrid& grid, int iz, int period_samples);

// True when the log-magnitudes of comb lines 1..n_sidebands decay strictly
// monotonically on both sides of the carrier.  stride = FFT bins per comb
// line (= number of time periods in the window).
bool comb_monotone_decay(const FieldGrid& grid, int iz, int stride, int n_sidebands);

// Pointwise difference |test - reference| normalized by the reference's peak
// magnitude, aggregated over rows first_row..n_z-1.  Peak-normalization keeps
// the statistics stable under grid refinement (a per-point |A| denominator
// blows up in the deep troughs of the waveform).
struct FieldDeviation {
  double mean = 0.0;
  double max = 0.0;
};
FieldDeviation field_deviation(const FieldGrid& test, const FieldGrid& reference,
                               int first_row = 0);

}  // namespace fgnls

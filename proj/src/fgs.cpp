// SPDX-License-Identifier: Apache-2.0
#include "fgnls/fgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fgnls {
namespace {

constexpr double kTwoPi = 2.0 * kPi;

// Dimensionless-to-physical evolution scale: z = kZ0Factor * T0^2 / |beta2| * zeta.
// The factor follows from mapping i A_z - (beta2/2) A_TT + gamma_eff |A|^2 A = 0
// onto i psi_zeta + psi_tautau + 2 |psi|^2 psi = 0 with A = C psi, T = T0 tau.
constexpr double kZ0Factor = 2.0;

// Strips a numerically-zero imaginary part left over by quadrature; throws
// when it is too large to be noise.
double sanitize_real(cplx v, const char* label, double* max_resid) {
  const double scale = std::max(1.0, std::abs(v.real()));
  const double resid = std::abs(v.imag()) / scale;
  if (resid > 1e-6) {
    std::ostringstream os;
    os << label << " came out complex: " << v.real() << " + " << v.imag()
       << "i (relative imaginary residue " << resid << ")";
    throw NonRealFrequency(os.str());
  }
  if (max_resid) *max_resid = std::max(*max_resid, resid);
  return v.real();
}

// Least common period 2*pi/base of a set of real frequencies: the base is the
// largest frequency that divides every nonzero entry to ~1e-6 relative
// accuracy (small integer denominators up to 24 are tried).  Returns +inf for
// an all-zero or incommensurate set.
double common_period(const Eigen::VectorXd& freqs) {
  double fmax = 0.0;
  for (int j = 0; j < freqs.size(); ++j) fmax = std::max(fmax, std::abs(freqs[j]));
  if (fmax == 0.0) return std::numeric_limits<double>::infinity();
  std::vector<double> f;
  for (int j = 0; j < freqs.size(); ++j)
    if (std::abs(freqs[j]) > 1e-9 * fmax) f.push_back(std::abs(freqs[j]));
  const double fmin = *std::min_element(f.begin(), f.end());
  for (int q = 1; q <= 24; ++q) {
    const double base = fmin / q;
    bool ok = true;
    for (double v : f) {
      const double r = v / base;
      if (std::abs(r - std::round(r)) > 1e-6 * std::max(1.0, r)) {
        ok = false;
        break;
      }
    }
    if (ok) return kTwoPi / base;
  }
  return std::numeric_limits<double>::infinity();
}

// True when the branch-point set is symmetric under lambda -> -conj(lambda)
// (mirror symmetry about the imaginary axis).
bool mirror_symmetric(const MainSpectrum& spectrum) {
  double scale = 0.0;
  for (const cplx& p : spectrum.points) scale = std::max(scale, std::abs(p));
  for (const cplx& p : spectrum.points) {
    const cplx want = -std::conj(p);
    bool found = false;
    for (const cplx& q : spectrum.points)
      if (std::abs(q - want) <= 1e-9 * scale) {
        found = true;
        break;
      }
    if (!found) return false;
  }
  return true;
}

// Unimodular recombination of the cycle lattice used to present solutions of
// mirror-symmetric spectra in their reduced frame.  Curves with this symmetry
// are quotients of two lower-genus curves, and the frequency vector splits
// along the quotient only after an integer change of cycles; this is the
// standard such change expressed on the geometric (one-cut-per-cycle) basis.
// Acting by M on (omega, k, delta) and by M . M^T on tau relabels the same
// solution: theta picks up no more than a lattice reindexing.
Eigen::MatrixXd mirror_frame(int g) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(g, g);
  m(0, 0) = -1.0;
  m(0, 1) = 2.0;
  if (g >= 3) m(2, 1) = 1.0;
  return m;
}

// Smallest |omega0 + m . omega| over integer vectors m with |m_j| <= bound.
// Used to detect a carrier frequency that lies on the lattice spanned by the
// modulation frequencies; folding it away makes the envelope's periodicity
// explicit (the carrier then contributes no time dependence at all).
Eigen::VectorXi lattice_reduction(double omega0, const Eigen::VectorXd& omega, int bound) {
  const int g = static_cast<int>(omega.size());
  Eigen::VectorXi best = Eigen::VectorXi::Zero(g);
  double best_val = std::abs(omega0);
  int best_norm = 0;
  const double tiny = 1e-12 * std::max(1.0, omega.cwiseAbs().maxCoeff());
  Eigen::VectorXi m = Eigen::VectorXi::Constant(g, -bound);
  while (true) {
    double val = omega0;
    int norm = 0;
    for (int j = 0; j < g; ++j) {
      val += m[j] * omega[j];
      norm += std::abs(m[j]);
    }
    val = std::abs(val);
    if (val < best_val - tiny || (val < best_val + tiny && norm < best_norm)) {
      best = m;
      best_val = val;
      best_norm = norm;
    }
    int j = 0;
    while (j < g && m[j] == bound) m[j++] = -bound;
    if (j == g) break;
    ++m[j];
  }
  return best;
}

// Placeholder matrix so the genus-0 evaluator can still own two ThetaSeries
// (they are never consulted when g == 0).
RiemannMatrix series_matrix(const ThetaParameters& p) {
  if (p.g > 0) return p.tau;
  Eigen::MatrixXcd one(1, 1);
  one(0, 0) = cplx(0.0, 1.0);
  return RiemannMatrix(one);
}

Eigen::VectorXcd series_shift(const ThetaParameters& p, bool plus) {
  if (p.g > 0 && plus) return p.delta_plus;
  return Eigen::VectorXcd::Zero(std::max(p.g, 1));
}

void require_power_of_two(int n_t) {
  if (n_t <= 0 || (n_t & (n_t - 1)) != 0)
    throw Error("sample grid size must be a power of two, got " + std::to_string(n_t));
}

}  // namespace

ThetaParameters derive_parameters(const PeriodData& periods, const MainSpectrum& spectrum,
                                  const QuadratureSpec& quad) {
  const std::vector<cplx>& built = periods.curve.spectrum.points;
  if (spectrum.points.size() != built.size())
    throw Error("spectrum does not match the one the period data was built from");
  // The curve sorts its spectrum; accept any input ordering of the same set.
  for (const cplx& p : spectrum.points) {
    bool found = false;
    for (const cplx& q : built)
      if (std::abs(p - q) <= 1e-12 * (1.0 + std::abs(q))) {
        found = true;
        break;
      }
    if (!found) throw Error("spectrum does not match the one the period data was built from");
  }

  ThetaParameters out;
  out.spectrum = periods.curve.spectrum;
  const int g = periods.curve.genus;
  out.g = g;
  out.k.resize(g);
  out.omega.resize(g);
  out.delta_plus.resize(g);
  out.frame = Eigen::MatrixXi::Identity(g, g);
  out.carrier_shift = Eigen::VectorXi::Zero(g);

  double s1 = 0.0;
  for (const BranchCut& cut : periods.curve.cuts) s1 += cut.abscissa();

  const cplx im1(0.0, 1.0);
  for (int j = 0; j < g; ++j) {
    const cplx om = -4.0 * kPi * im1 * periods.A_inv(j, g - 1);
    const cplx sub = (g >= 2) ? periods.A_inv(j, g - 2) : cplx(0.0, 0.0);
    const cplx kk = -8.0 * kPi * im1 * (sub + s1 * periods.A_inv(j, g - 1));
    out.omega[j] = sanitize_real(om, "frequency", &out.max_imag_residue);
    out.k[j] = sanitize_real(kk, "wavenumber", &out.max_imag_residue);
  }

  const InfinityIntegrals inf = infinity_integrals(periods, quad);
  // The connecting path used by infinity_integrals runs from the sheet where
  // w ~ +lambda^{g+1} to the one where w ~ -lambda^{g+1}; the theta offset of
  // the numerator is the integral along the opposite orientation.  The sign
  // is pinned down by the equation itself (see the residual tests).
  Eigen::VectorXcd shift = -inf.delta;
  Eigen::MatrixXcd tau_m = periods.tau;
  out.omega0 = sanitize_real(inf.I_p, "carrier frequency", &out.max_imag_residue);
  out.k0 = sanitize_real(inf.I_E, "carrier wavenumber", &out.max_imag_residue);
  out.K = 2.0 * std::exp(-0.5 * inf.I_Omega);

  if (g >= 2 && mirror_symmetric(out.spectrum)) {
    const Eigen::MatrixXd m = mirror_frame(g);
    const Eigen::MatrixXcd mc = m.cast<cplx>();
    out.omega = (m * out.omega).eval();
    out.k = (m * out.k).eval();
    shift = (mc * shift).eval();
    tau_m = (mc * tau_m * mc.transpose()).eval();
    tau_m = (0.5 * (tau_m + tau_m.transpose())).eval();
    out.frame = m.cast<int>();
  }

  // Fold a lattice-commensurate carrier frequency into the theta phases:
  //   K theta(x + s) / theta(x) e^{i(k0 zeta + omega0 t)}
  // is invariant under s -> s + tau m, omega0 -> omega0 + m.omega,
  // k0 -> k0 + m.k, K -> K exp(i pi m.tau.m + 2 pi i m.s).
  if (g >= 1 && g <= 6) {
    const Eigen::VectorXi m = lattice_reduction(out.omega0, out.omega, g <= 3 ? 8 : 2);
    const double scale = std::max(std::abs(out.omega0), out.omega.cwiseAbs().maxCoeff());
    const Eigen::VectorXd md = m.cast<double>();
    if (m.cwiseAbs().maxCoeff() > 0 && std::abs(out.omega0 + md.dot(out.omega)) < 1e-8 * scale) {
      const Eigen::VectorXcd mc = md.cast<cplx>();
      const cplx m_tau_m = (mc.transpose() * tau_m * mc)(0, 0);
      const cplx m_shift = (mc.transpose() * shift)(0, 0);
      out.K *= std::exp(im1 * kPi * m_tau_m + 2.0 * kPi * im1 * m_shift);
      shift += tau_m * mc;
      out.omega0 += md.dot(out.omega);
      out.k0 += md.dot(out.k);
      out.carrier_shift = m;
    }
  }

  out.delta_plus = shift;
  if (g > 0) out.tau = RiemannMatrix(tau_m);
  out.p_tau = common_period(out.omega);
  out.p_zeta = common_period(out.k);
  return out;
}

ThetaParameters derive_parameters(const MainSpectrum& spectrum, const QuadratureSpec& quad) {
  const HyperellipticCurve curve = build_curve(spectrum);
  const HomologyBasis basis = canonical_homology_basis(curve);
  const PeriodData periods = period_matrices(curve, basis, quad);
  return derive_parameters(periods, spectrum, quad);
}

cplx evaluate_psi(const ThetaParameters& params, double zeta, double tau_time) {
  const cplx carrier = std::exp(cplx(0.0, params.k0 * zeta + params.omega0 * tau_time));
  if (params.g == 0) return params.K * carrier;
  Eigen::VectorXcd x_minus(params.g);
  for (int j = 0; j < params.g; ++j)
    x_minus[j] = (params.k[j] * zeta + params.omega[j] * tau_time) / kTwoPi;
  const Eigen::VectorXcd x_plus = x_minus + params.delta_plus;
  return params.K * theta_ratio(x_plus, x_minus, params.tau) * carrier;
}

PsiEvaluator::PsiEvaluator(const ThetaParameters& params, double eps)
    : params_(params),
      num_(series_matrix(params), eps, series_shift(params, true)),
      den_(series_matrix(params), eps, series_shift(params, false)),
      log_diff_(num_.log_offset() - den_.log_offset()) {}

cplx PsiEvaluator::operator()(double zeta, double tau_time) const {
  const cplx carrier =
      std::exp(cplx(0.0, params_.k0 * zeta + params_.omega0 * tau_time));
  if (params_.g == 0) return params_.K * carrier;
  Eigen::VectorXd a(params_.g);
  for (int j = 0; j < params_.g; ++j)
    a[j] = (params_.k[j] * zeta + params_.omega[j] * tau_time) / kTwoPi;
  const cplx dv = den_.eval(a);
  if (std::abs(dv) < 1e-12 * den_.abs_weight_sum())
    throw ThetaZeroDivisor("denominator theta vanishes at zeta=" + std::to_string(zeta) +
                           ", tau=" + std::to_string(tau_time));
  const cplx nv = num_.eval(a);
  return params_.K * (nv / dv) * std::exp(log_diff_) * carrier;
}

double nlse_residual(const ThetaParameters& params, const ResidualSpec& spec) {
  const PsiEvaluator psi(params);
  const double zspan =
      spec.zeta_span > 0 ? spec.zeta_span : (std::isfinite(params.p_zeta) ? params.p_zeta : 1.0);
  const double tspan =
      spec.tau_span > 0 ? spec.tau_span : (std::isfinite(params.p_tau) ? params.p_tau : 3.0);
  const double h = spec.fd_step;
  const int nz = spec.n_zeta, nt = spec.n_tau;
  std::vector<double> row_max_r(static_cast<std::size_t>(nz), 0.0);
  std::vector<double> row_max_c(static_cast<std::size_t>(nz), 0.0);

  parallel_for(static_cast<std::size_t>(nz), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t iz = lo; iz < hi; ++iz) {
      const double zeta = spec.zeta0 + (static_cast<double>(iz) + 0.5) * zspan / nz;
      double mr = 0.0, mc = 0.0;
      for (int it = 0; it < nt; ++it) {
        const double tau_time = spec.tau0 + (it + 0.5) * tspan / nt;
        const cplx c = psi(zeta, tau_time);
        // Fourth-order central differences at steps h and h/2; the Richardson
        // combination cancels the shared h^4 truncation term, leaving the true
        // equation defect plus O(h^6).
        const auto defect = [&](double hh) {
          const cplx zp = psi(zeta + hh, tau_time), zp2 = psi(zeta + 2 * hh, tau_time);
          const cplx zm = psi(zeta - hh, tau_time), zm2 = psi(zeta - 2 * hh, tau_time);
          const cplx tp = psi(zeta, tau_time + hh), tp2 = psi(zeta, tau_time + 2 * hh);
          const cplx tm = psi(zeta, tau_time - hh), tm2 = psi(zeta, tau_time - 2 * hh);
          const cplx dz = (-zp2 + 8.0 * zp - 8.0 * zm + zm2) / (12.0 * hh);
          const cplx dtt =
              (-tp2 + 16.0 * tp - 30.0 * c + 16.0 * tm - tm2) / (12.0 * hh * hh);
          return cplx(0.0, 1.0) * dz + dtt + 2.0 * std::norm(c) * c;
        };
        const cplx r1 = defect(h);
        const cplx r2 = defect(0.5 * h);
        const double r = std::abs((16.0 * r2 - r1) / 15.0);
        mr = std::max(mr, r);
        mc = std::max(mc, std::abs(c));
      }
      row_max_r[iz] = mr;
      row_max_c[iz] = mc;
    }
  });

  double maxr = 0.0, maxc = 0.0;
  for (int iz = 0; iz < nz; ++iz) {
    maxr = std::max(maxr, row_max_r[static_cast<std::size_t>(iz)]);
    maxc = std::max(maxc, row_max_c[static_cast<std::size_t>(iz)]);
  }
  return maxr / std::max(maxc * maxc * maxc, 1e-300);
}

DimensionalScales dimensional_scales(const ThetaParameters& params, const ScalingParams& s) {
  if (!(s.T0 > 0.0)) throw Error("T0 must be positive (ns)");
  if (!(s.beta2 < 0.0)) throw Error("beta2 must be negative (ps^2/km, anomalous dispersion)");
  if (!(s.gamma_eff > 0.0)) throw Error("gamma_eff must be positive (1/(W km))");
  const double b2 = std::abs(s.beta2) * 1e-6;  // ps^2/km -> ns^2/km
  DimensionalScales d;
  d.T0_ns = s.T0;
  d.Z0_km = kZ0Factor * s.T0 * s.T0 / b2;
  const double c2_watt = b2 / (s.gamma_eff * s.T0 * s.T0);
  d.C_sqrt_mW = std::sqrt(1e3 * c2_watt);
  d.p_T_ns = s.T0 * params.p_tau;
  d.p_z_km = d.Z0_km * params.p_zeta;
  return d;
}

double choose_T0(const ThetaParameters& params, double target_p_T_ns) {
  if (!std::isfinite(params.p_tau) || params.p_tau <= 0.0)
    throw Error("solution has no finite time period; T0 must be chosen by hand");
  return target_p_T_ns / params.p_tau;
}

DimensionalEvaluator::DimensionalEvaluator(const ThetaParameters& params, const ScalingParams& s)
    : psi_(params), scales_(dimensional_scales(params, s)) {}

cplx DimensionalEvaluator::operator()(double z_km, double T_ns) const {
  return scales_.C_sqrt_mW * psi_(z_km / scales_.Z0_km, T_ns / scales_.T0_ns);
}

FieldGrid sample_grid(const DimensionalEvaluator& eval, double t_start_ns, double dt_ns, int n_t,
                      const std::vector<double>& z_km) {
  require_power_of_two(n_t);
  FieldGrid grid;
  grid.n_t = n_t;
  grid.dt = dt_ns;
  grid.t_start = t_start_ns;
  grid.z_values = z_km;
  grid.units = FieldUnits::dimensional;
  grid.samples.resize(z_km.size() * static_cast<std::size_t>(n_t));
  parallel_for(z_km.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t iz = lo; iz < hi; ++iz)
      for (int it = 0; it < n_t; ++it)
        grid.samples[iz * n_t + it] = eval(z_km[iz], t_start_ns + it * dt_ns);
  });
  grid.check_finite();
  return grid;
}

FieldGrid sample_grid_dimensionless(const PsiEvaluator& eval, double tau0, double dtau, int n_tau,
                                    const std::vector<double>& zetas) {
  require_power_of_two(n_tau);
  FieldGrid grid;
  grid.n_t = n_tau;
  grid.dt = dtau;
  grid.t_start = tau0;
  grid.z_values = zetas;
  grid.units = FieldUnits::dimensionless;
  grid.samples.resize(zetas.size() * static_cast<std::size_t>(n_tau));
  parallel_for(zetas.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t iz = lo; iz < hi; ++iz)
      for (int it = 0; it < n_tau; ++it)
        grid.samples[iz * n_tau + it] = eval(zetas[iz], tau0 + it * dtau);
  });
  grid.check_finite();
  return grid;
}

}  // namespace fgnls

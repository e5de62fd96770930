// SPDX-License-Identifier: Apache-2.0
//
// Periodic forward NFT: transfer-matrix Floquet analysis of the
// Zakharov-Shabat system over one period of the field.  Each sample is
// treated as the value on a constant cell centred at its grid time, so the
// ordered product of closed-form cell exponentials is a midpoint rule —
// second-order accurate in the sample spacing.
#include "fgnls/nft.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>

#include <fftw3.h>

namespace fgnls {

namespace {

constexpr cplx kI{0.0, 1.0};

// Multiplies m (row-major 2x2) from the left by exp(dt * U) with
//   U = [[-i lambda, q], [-conj(q), i lambda]].
// U is traceless with U^2 = kappa^2 I, kappa^2 = -lambda^2 - |q|^2, so
//   exp(dt U) = cosh(kappa dt) I + sinh(kappa dt)/kappa * U,
// both factors even in kappa (branch of the square root is irrelevant).
inline void apply_cell(cplx lambda, cplx q, double dt, cplx m[4]) {
  const cplx kappa2 = -lambda * lambda - std::norm(q);
  const cplx z = kappa2 * (dt * dt);
  cplx ch, shc;  // cosh(kappa dt) and sinh(kappa dt) / kappa
  if (std::abs(z) < 1e-6) {
    // Series in z = (kappa dt)^2; truncation error below 1e-25 here.
    ch = 1.0 + z * (0.5 + z * (1.0 / 24.0 + z * (1.0 / 720.0)));
    shc = dt * (1.0 + z * (1.0 / 6.0 + z * (1.0 / 120.0 + z * (1.0 / 5040.0))));
  } else {
    const cplx kappa = std::sqrt(kappa2);
    ch = std::cosh(kappa * dt);
    shc = std::sinh(kappa * dt) / kappa;
  }
  const cplx il_shc = kI * lambda * shc;
  const cplx ea = ch - il_shc;
  const cplx eb = shc * q;
  const cplx ec = -shc * std::conj(q);
  const cplx ed = ch + il_shc;
  const cplx m0 = ea * m[0] + eb * m[2];
  const cplx m1 = ea * m[1] + eb * m[3];
  const cplx m2 = ec * m[0] + ed * m[2];
  const cplx m3 = ec * m[1] + ed * m[3];
  m[0] = m0;
  m[1] = m1;
  m[2] = m2;
  m[3] = m3;
}

void monodromy_impl(const std::vector<cplx>& samples, double dt, cplx lambda, cplx m[4]) {
  m[0] = m[3] = 1.0;
  m[1] = m[2] = 0.0;
  for (const cplx& q : samples) apply_cell(lambda, q, dt, m);
}

cplx discriminant_impl(const std::vector<cplx>& samples, double dt, cplx lambda) {
  cplx m[4];
  monodromy_impl(samples, dt, lambda, m);
  return 0.5 * (m[0] + m[3]);
}

struct Candidate {
  cplx lambda{0.0, 0.0};
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  RootFamily family = RootFamily::periodic;
};

// Newton iteration on Delta(lambda) - target with a central-difference
// derivative.  Iterations continue past the tolerance until the step
// stagnates so that degenerate (double) roots, where plain Newton converges
// only linearly, are still located to far better than sqrt(tol).
Candidate refine_seed(const std::vector<cplx>& samples, double dt, cplx seed, double target,
                      RootFamily family, const SearchBox& box, const SearchOptions& opt) {
  Candidate best;
  best.lambda = seed;
  best.family = family;
  const double wr = box.re_max - box.re_min;
  const double wi = box.im_max - box.im_min;
  cplx lam = seed;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const cplx f = discriminant_impl(samples, dt, lam) - target;
    const double af = std::abs(f);
    if (af < best.residual) {
      best.residual = af;
      best.lambda = lam;
    }
    if (af < 1e-15) break;
    const double h = 1e-6 * std::max(1.0, std::abs(lam));
    const cplx fp = (discriminant_impl(samples, dt, lam + h) -
                     discriminant_impl(samples, dt, lam - h)) /
                    (2.0 * h);
    if (!(std::abs(fp) > 1e-300) || !std::isfinite(std::abs(fp))) break;
    const cplx step = f / fp;
    lam -= step;
    if (af < opt.tol && std::abs(step) < 1e-11 * std::max(1.0, std::abs(lam))) break;
    if (lam.real() < box.re_min - 0.5 * wr || lam.real() > box.re_max + 0.5 * wr ||
        lam.imag() < box.im_min - 0.5 * wi || lam.imag() > box.im_max + 0.5 * wi)
      break;  // left the (inflated) search box: report the best visited point
  }
  best.converged = best.residual < opt.tol;
  // Schwarz symmetry pairs every root with its conjugate in the same family;
  // fold the occasional below-axis landing back into the closed upper half.
  if (best.converged && best.lambda.imag() < 0.0) best.lambda = std::conj(best.lambda);
  return best;
}

}  // namespace

void ZSPotential::validate() const {
  if (samples.empty()) throw LengthMismatch("ZSPotential: empty sample vector");
  if (!(period > 0.0) || !std::isfinite(period))
    throw Error("ZSPotential: period must be positive and finite");
  for (const cplx& q : samples)
    if (!std::isfinite(q.real()) || !std::isfinite(q.imag()))
      throw NonFiniteField("ZSPotential: non-finite sample");
}

ZSPotential make_potential(const FieldGrid& grid, int iz) {
  if (grid.units != FieldUnits::dimensionless)
    throw Error("make_potential: dimensional grid requires the scales overload");
  if (iz < 0 || iz >= grid.n_z()) throw Error("make_potential: row index out of range");
  ZSPotential pot;
  pot.period = grid.n_t * grid.dt;
  pot.samples.resize(static_cast<std::size_t>(grid.n_t));
  for (int it = 0; it < grid.n_t; ++it) pot.samples[static_cast<std::size_t>(it)] = grid.at(iz, it);
  pot.validate();
  return pot;
}

ZSPotential make_potential(const FieldGrid& grid, int iz, const DimensionalScales& scales) {
  if (grid.units != FieldUnits::dimensional)
    throw Error("make_potential: dimensionless grid takes no scales");
  if (iz < 0 || iz >= grid.n_z()) throw Error("make_potential: row index out of range");
  if (!(scales.T0_ns > 0.0) || !(scales.C_sqrt_mW > 0.0))
    throw Error("make_potential: scales must have positive T0 and amplitude unit");
  ZSPotential pot;
  pot.period = grid.n_t * grid.dt / scales.T0_ns;
  pot.samples.resize(static_cast<std::size_t>(grid.n_t));
  for (int it = 0; it < grid.n_t; ++it)
    pot.samples[static_cast<std::size_t>(it)] = grid.at(iz, it) / scales.C_sqrt_mW;
  pot.validate();
  return pot;
}

Eigen::Matrix2cd monodromy(const ZSPotential& potential, cplx lambda) {
  potential.validate();
  const double dt = potential.period / static_cast<double>(potential.samples.size());
  cplx m[4];
  monodromy_impl(potential.samples, dt, lambda, m);
  Eigen::Matrix2cd out;
  out << m[0], m[1], m[2], m[3];
  return out;
}

cplx floquet_discriminant(const ZSPotential& potential, cplx lambda) {
  potential.validate();
  const double dt = potential.period / static_cast<double>(potential.samples.size());
  return discriminant_impl(potential.samples, dt, lambda);
}

std::vector<cplx> SpectrumEstimate::converged_points() const {
  std::vector<cplx> out;
  for (const SpectrumPoint& p : points)
    if (p.converged) out.push_back(p.lambda);
  std::sort(out.begin(), out.end(), [](const cplx& a, const cplx& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return out;
}

SpectrumEstimate find_main_spectrum(const ZSPotential& potential, const SearchBox& box,
                                    const SearchOptions& options) {
  potential.validate();
  if (!(box.re_max > box.re_min) || !(box.im_max > box.im_min))
    throw Error("find_main_spectrum: degenerate search box");
  if (box.im_min < 0.0)
    throw Error("find_main_spectrum: search box must stay in the upper half-plane");
  if (options.grid_density < 2) throw Error("find_main_spectrum: grid_density must be >= 2");
  if (!(options.tol > 0.0)) throw Error("find_main_spectrum: tolerance must be positive");

  const double dt = potential.period / static_cast<double>(potential.samples.size());
  const int nd = options.grid_density;
  const double wr = box.re_max - box.re_min;
  const double wi = box.im_max - box.im_min;
  const double merge_r =
      options.merge_radius > 0.0 ? options.merge_radius : 1e-3 * std::hypot(wr, wi);

  // One coarse scan of Delta serves both root families.
  std::vector<cplx> delta(static_cast<std::size_t>(nd) * nd);
  parallel_for(delta.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t idx = lo; idx < hi; ++idx) {
      const int i = static_cast<int>(idx) % nd;  // real index
      const int j = static_cast<int>(idx) / nd;  // imag index
      const cplx lam(box.re_min + wr * i / (nd - 1), box.im_min + wi * j / (nd - 1));
      delta[idx] = discriminant_impl(potential.samples, dt, lam);
    }
  });

  // Seeds: grid-local minima of |Delta -/+ 1| (boundary points included).
  struct Seed {
    cplx lambda;
    double target;
    RootFamily family;
  };
  std::vector<Seed> seeds;
  for (int fam = 0; fam < 2; ++fam) {
    const double target = fam == 0 ? 1.0 : -1.0;
    const RootFamily family = fam == 0 ? RootFamily::periodic : RootFamily::antiperiodic;
    auto value = [&](int i, int j) { return std::abs(delta[static_cast<std::size_t>(j) * nd + i] - target); };
    for (int j = 0; j < nd; ++j)
      for (int i = 0; i < nd; ++i) {
        const double v = value(i, j);
        bool is_min = true;
        for (int dj = -1; dj <= 1 && is_min; ++dj)
          for (int di = -1; di <= 1 && is_min; ++di) {
            if (di == 0 && dj == 0) continue;
            const int ii = i + di, jj = j + dj;
            if (ii < 0 || ii >= nd || jj < 0 || jj >= nd) continue;
            if (value(ii, jj) < v) is_min = false;
          }
        if (is_min)
          seeds.push_back({cplx(box.re_min + wr * i / (nd - 1), box.im_min + wi * j / (nd - 1)),
                           target, family});
      }
  }

  std::vector<Candidate> cands(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t s = lo; s < hi; ++s)
      cands[s] = refine_seed(potential.samples, dt, seeds[s].lambda, seeds[s].target,
                             seeds[s].family, box, options);
  });

  // Keep the best representative of each root: candidates ordered by quality,
  // later ones within the merge radius of an accepted same-family point are
  // duplicates.  Unconverged stragglers survive (flagged) unless they sit on
  // top of an accepted point.  Roots that Newton stumbled on beyond a
  // one-cell margin around the requested box are not part of the answer.
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.residual != b.residual) return a.residual < b.residual;
    if (a.lambda.real() != b.lambda.real()) return a.lambda.real() < b.lambda.real();
    return a.lambda.imag() < b.lambda.imag();
  });
  const double margin_re = wr / (nd - 1), margin_im = wi / (nd - 1);
  SpectrumEstimate est;
  for (const Candidate& c : cands) {
    if (c.converged && (c.lambda.real() < box.re_min - margin_re ||
                        c.lambda.real() > box.re_max + margin_re ||
                        c.lambda.imag() < box.im_min - margin_im ||
                        c.lambda.imag() > box.im_max + margin_im))
      continue;
    bool duplicate = false;
    for (const SpectrumPoint& kept : est.points)
      if (kept.family == c.family && std::abs(kept.lambda - c.lambda) < merge_r) {
        duplicate = true;
        break;
      }
    if (duplicate) continue;
    SpectrumPoint p;
    p.lambda = c.lambda;
    p.residual = c.residual;
    p.converged = c.converged;
    p.family = c.family;
    est.points.push_back(p);
  }
  std::sort(est.points.begin(), est.points.end(), [](const SpectrumPoint& a, const SpectrumPoint& b) {
    if (a.lambda.real() != b.lambda.real()) return a.lambda.real() < b.lambda.real();
    return a.lambda.imag() < b.lambda.imag();
  });

  bool any_converged = false;
  for (const SpectrumPoint& p : est.points) any_converged = any_converged || p.converged;
  if (!any_converged) {
    std::ostringstream msg;
    msg << "no Delta = +/-1 roots converged in [" << box.re_min << ", " << box.re_max << "] x ["
        << box.im_min << ", " << box.im_max << "]i";
    throw NoRootsFound(msg.str());
  }
  return est;
}

std::vector<std::vector<cplx>> average_periods(const std::vector<cplx>& record,
                                               std::size_t period_samples,
                                               std::size_t group_size) {
  if (period_samples == 0 || group_size == 0)
    throw LengthMismatch("average_periods: period_samples and group_size must be positive");
  const std::size_t block = period_samples * group_size;
  if (record.empty() || record.size() % block != 0) {
    std::ostringstream msg;
    msg << "average_periods: record length " << record.size()
        << " is not a positive multiple of period_samples * group_size = " << block;
    throw LengthMismatch(msg.str());
  }
  const std::size_t n_groups = record.size() / block;
  std::vector<std::vector<cplx>> out(n_groups, std::vector<cplx>(period_samples));
  for (std::size_t g = 0; g < n_groups; ++g)
    for (std::size_t t = 0; t < period_samples; ++t) {
      cplx acc = 0.0;
      for (std::size_t p = 0; p < group_size; ++p)
        acc += record[g * block + p * period_samples + t];
      out[g][t] = acc / static_cast<double>(group_size);
    }
  return out;
}

SpectrumHistogram spectrum_histogram(const std::vector<SpectrumEstimate>& estimates,
                                     const HistogramSpec& spec) {
  if (spec.n_re <= 0 || spec.n_im <= 0)
    throw Error("spectrum_histogram: bin counts must be positive");
  if (!(spec.re_max > spec.re_min) || !(spec.im_max > spec.im_min))
    throw Error("spectrum_histogram: degenerate bin ranges");

  SpectrumHistogram h;
  h.re_edges.resize(static_cast<std::size_t>(spec.n_re) + 1);
  h.im_edges.resize(static_cast<std::size_t>(spec.n_im) + 1);
  for (int i = 0; i <= spec.n_re; ++i)
    h.re_edges[static_cast<std::size_t>(i)] =
        spec.re_min + (spec.re_max - spec.re_min) * i / spec.n_re;
  for (int j = 0; j <= spec.n_im; ++j)
    h.im_edges[static_cast<std::size_t>(j)] =
        spec.im_min + (spec.im_max - spec.im_min) * j / spec.n_im;
  h.counts = Eigen::MatrixXi::Zero(spec.n_re, spec.n_im);

  const double bw_re = (spec.re_max - spec.re_min) / spec.n_re;
  const double bw_im = (spec.im_max - spec.im_min) / spec.n_im;
  for (const SpectrumEstimate& est : estimates)
    for (const SpectrumPoint& p : est.points) {
      if (!p.converged) continue;
      const double x = p.lambda.real(), y = p.lambda.imag();
      if (y < spec.artifact_floor) {
        ++h.artifacts;
        continue;
      }
      if (x < spec.re_min || x > spec.re_max || y < spec.im_min || y > spec.im_max) {
        ++h.out_of_range;
        continue;
      }
      const int i = std::min(spec.n_re - 1, static_cast<int>((x - spec.re_min) / bw_re));
      const int j = std::min(spec.n_im - 1, static_cast<int>((y - spec.im_min) / bw_im));
      ++h.counts(i, j);
      ++h.accepted;
    }
  return h;
}

ZSPotential upsample(const ZSPotential& potential, int factor) {
  potential.validate();
  if (factor < 1) throw Error("upsample: factor must be >= 1");
  if (factor == 1) return potential;
  const int n = static_cast<int>(potential.samples.size());
  const int m = n * factor;

  std::vector<cplx> freq(static_cast<std::size_t>(n));
  std::vector<cplx> padded(static_cast<std::size_t>(m), cplx(0.0, 0.0));
  std::vector<cplx> fine(static_cast<std::size_t>(m));
  {
    static std::mutex plan_mutex;  // FFTW planning is not thread-safe
    std::lock_guard<std::mutex> lock(plan_mutex);
    std::vector<cplx> in = potential.samples;
    fftw_plan fwd = fftw_plan_dft_1d(
        n, reinterpret_cast<fftw_complex*>(in.data()), reinterpret_cast<fftw_complex*>(freq.data()),
        FFTW_FORWARD, FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
    fftw_execute(fwd);
    fftw_destroy_plan(fwd);

    // Re-embed the spectrum at the finer rate; an even-length Nyquist bin is
    // split symmetrically between +n/2 and -n/2.
    const int half = n / 2;
    if (n % 2 == 0) {
      for (int k = 0; k < half; ++k) padded[static_cast<std::size_t>(k)] = freq[static_cast<std::size_t>(k)];
      for (int k = 1; k < half; ++k)
        padded[static_cast<std::size_t>(m - k)] = freq[static_cast<std::size_t>(n - k)];
      padded[static_cast<std::size_t>(half)] = 0.5 * freq[static_cast<std::size_t>(half)];
      padded[static_cast<std::size_t>(m - half)] += 0.5 * freq[static_cast<std::size_t>(half)];
    } else {
      for (int k = 0; k <= half; ++k) padded[static_cast<std::size_t>(k)] = freq[static_cast<std::size_t>(k)];
      for (int k = 1; k <= half; ++k)
        padded[static_cast<std::size_t>(m - k)] = freq[static_cast<std::size_t>(n - k)];
    }
    fftw_plan bwd = fftw_plan_dft_1d(
        m, reinterpret_cast<fftw_complex*>(padded.data()),
        reinterpret_cast<fftw_complex*>(fine.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_execute(bwd);
    fftw_destroy_plan(bwd);
  }
  ZSPotential out;
  out.period = potential.period;
  out.samples.resize(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) out.samples[static_cast<std::size_t>(k)] = fine[static_cast<std::size_t>(k)] / static_cast<double>(n);
  return out;
}

}  // namespace fgnls

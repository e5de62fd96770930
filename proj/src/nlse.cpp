// SPDX-License-Identifier: Apache-2.0
#include "fgnls/nlse.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace fgnls {
namespace {

constexpr double kPlanck = 6.62607015e-34;   // J s
constexpr double kCarrierHz = 193.41e12;     // 1550 nm band

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

// In-place complex FFT pair of a fixed size.  FFTW plan creation is not
// thread safe, so it is serialized; execution on the private buffer is.
class Fft {
 public:
  explicit Fft(int n) : n_(n), buf_(static_cast<std::size_t>(n)) {
    std::lock_guard<std::mutex> lock(plan_mutex());
    auto* ptr = reinterpret_cast<fftw_complex*>(buf_.data());
    fwd_ = fftw_plan_dft_1d(n, ptr, ptr, FFTW_FORWARD, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_1d(n, ptr, ptr, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~Fft() {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  void forward(std::vector<cplx>& data) {
    std::copy(data.begin(), data.end(), buf_.begin());
    fftw_execute(fwd_);
    std::copy(buf_.begin(), buf_.end(), data.begin());
  }
  void inverse(std::vector<cplx>& data) {
    std::copy(data.begin(), data.end(), buf_.begin());
    fftw_execute(inv_);
    const double inv_n = 1.0 / n_;
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = buf_[i] * inv_n;
  }

 private:
  int n_;
  std::vector<cplx> buf_;
  fftw_plan fwd_ = nullptr, inv_ = nullptr;
};

void require_pow2(std::size_t n) {
  if (n == 0 || (n & (n - 1)) != 0)
    throw Error("time grid size must be a power of two, got " + std::to_string(n));
}

// Signed FFT mode index: k -> k for k < n/2, k - n otherwise.
int mode_index(std::size_t k, std::size_t n) {
  return k < n / 2 ? static_cast<int>(k) : static_cast<int>(k) - static_cast<int>(n);
}

struct Coefficients {
  double beta2 = 0.0;     // time^2 / distance
  double gamma_p = 0.0;   // 1 / (power-unit * distance): phase = gamma_p |a|^2 dz
  double alpha_np = 0.0;  // 1 / distance (power)
};

Coefficients resolve(const FiberSpan& span, FieldUnits units) {
  Coefficients c;
  if (units == FieldUnits::dimensional) {
    c.beta2 = span.beta2 * 1e-6;  // ps^2/km -> ns^2/km
    c.gamma_p = span.gamma * 1e-3;  // |A|^2 is mW, gamma is 1/(W km)
    c.alpha_np = alpha_nepers(span.alpha_dB);
  } else {
    if (span.alpha_dB != 0.0) throw Error("dimensionless propagation requires alpha = 0");
    c.beta2 = span.beta2;
    c.gamma_p = span.gamma;
    c.alpha_np = 0.0;
  }
  return c;
}

}  // namespace

double alpha_nepers(double alpha_dB_per_km) {
  return alpha_dB_per_km * std::log(10.0) / 10.0;
}

EffectiveParams effective_params(double gamma, double alpha_dB_per_km, double L_km) {
  if (!(L_km > 0.0)) throw Error("span length must be positive");
  if (alpha_dB_per_km < 0.0) throw Error("attenuation must be nonnegative");
  const double a = alpha_nepers(alpha_dB_per_km);
  EffectiveParams out;
  out.L_eff = a * L_km > 1e-12 ? (1.0 - std::exp(-a * L_km)) / a : L_km;
  out.gamma_eff = gamma * out.L_eff / L_km;
  return out;
}

void split_step_span(std::vector<cplx>& samples, double dt, const FiberSpan& span,
                     const SimConfig& cfg, FieldUnits units) {
  require_pow2(samples.size());
  if (!(dt > 0.0)) throw Error("time step must be positive");
  if (!(cfg.max_phase_deg > 0.0)) throw Error("max_phase_deg must be positive");
  const Coefficients co = resolve(span, units);
  const std::size_t n = samples.size();
  Fft fft(static_cast<int>(n));

  // omega^2 table in FFT ordering.
  std::vector<double> w2(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = mode_index(k, n) / (dt * static_cast<double>(n));
    w2[k] = (2.0 * kPi * f) * (2.0 * kPi * f);
  }
  std::vector<cplx> disp_half(n);
  double cached_dz = -1.0;

  const double phase_budget = cfg.max_phase_deg * kPi / 180.0;
  double z = 0.0;
  while (z < span.length) {
    double peak = 0.0;
    for (const cplx& v : samples) peak = std::max(peak, std::norm(v));
    double dz = std::min(cfg.max_dz, span.length - z);
    if (co.gamma_p * peak > 0.0) dz = std::min(dz, phase_budget / (co.gamma_p * peak));
    if (dz < 1e-6)
      throw StepUnderflow("required step " + std::to_string(dz) + " km below 1e-6");

    if (dz != cached_dz) {
      for (std::size_t k = 0; k < n; ++k)
        disp_half[k] = std::exp(cplx(0.0, 0.5 * co.beta2 * w2[k] * 0.5 * dz));
      cached_dz = dz;
    }

    // D(dz/2)
    fft.forward(samples);
    for (std::size_t k = 0; k < n; ++k) samples[k] *= disp_half[k];
    fft.inverse(samples);
    // N(dz) with exact loss: phase = gamma_p |a0|^2 * (1-e^{-alpha dz})/alpha.
    const double leff =
        co.alpha_np * dz > 1e-12 ? (1.0 - std::exp(-co.alpha_np * dz)) / co.alpha_np : dz;
    const double decay = std::exp(-0.5 * co.alpha_np * dz);
    for (cplx& v : samples)
      v *= decay * std::exp(cplx(0.0, co.gamma_p * std::norm(v) * leff));
    // D(dz/2)
    fft.forward(samples);
    for (std::size_t k = 0; k < n; ++k) samples[k] *= disp_half[k];
    fft.inverse(samples);

    z += dz;
  }
}

void add_ase(std::vector<cplx>& samples, double dt_ns, double gain_linear,
             double noise_figure_dB, std::mt19937_64& rng) {
  if (!(gain_linear > 1.0)) throw Error("ASE requires linear gain > 1");
  const double n_sp = 0.5 * std::pow(10.0, noise_figure_dB / 10.0);
  // Per-mode ASE power n_sp h nu (G-1) * (mode spacing); summed over all
  // modes this is white in time with per-sample power n * P_mode, i.e.
  // n_sp h nu (G-1) / dt, converted J/ns -> W -> mW.
  const double per_sample_mW = n_sp * kPlanck * kCarrierHz * (gain_linear - 1.0) / dt_ns * 1e12;
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5 * per_sample_mW));
  for (cplx& v : samples) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    v += cplx(re, im);
  }
}

FieldGrid propagate_link(const FieldGrid& input, const LinkModel& link, const SimConfig& cfg) {
  if (input.units != FieldUnits::dimensional)
    throw Error("propagate_link expects a dimensional input grid");
  if (input.n_z() != 1) throw Error("propagate_link expects a single input slice");
  if (link.n_spans < 0) throw Error("n_spans must be nonnegative");
  require_pow2(static_cast<std::size_t>(input.n_t));

  const std::size_t n = static_cast<std::size_t>(input.n_t);
  std::vector<cplx> a(input.samples.begin(), input.samples.end());
  const double z0 = input.z_values.empty() ? 0.0 : input.z_values[0];

  const double alpha_np = alpha_nepers(link.span.alpha_dB);
  const double gain_amp = link.explicit_gain_dB
                              ? std::pow(10.0, *link.explicit_gain_dB / 20.0)
                              : std::exp(0.5 * alpha_np * link.span.length);
  const double gain_power = gain_amp * gain_amp;

  // Filter amplitude transfer per FFT mode (power-transmission FWHM).
  std::vector<double> filter_amp;
  if (link.filter) {
    if (!(link.filter->fwhm_GHz > 0.0)) throw Error("filter FWHM must be positive");
    const double sigma = link.filter->fwhm_GHz / (2.0 * std::sqrt(std::log(2.0)));
    filter_amp.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double f = mode_index(k, n) / (input.dt * static_cast<double>(n));
      const double d = f - link.filter->offset_GHz;
      filter_amp[k] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
  }

  std::mt19937_64 rng(link.ase ? link.ase->seed : 0);

  FieldGrid out;
  out.n_t = input.n_t;
  out.dt = input.dt;
  out.t_start = input.t_start;
  out.units = FieldUnits::dimensional;
  auto record = [&](double z) {
    out.z_values.push_back(z);
    out.samples.insert(out.samples.end(), a.begin(), a.end());
  };
  record(z0);

  Fft fft(static_cast<int>(n));
  for (int s = 0; s < link.n_spans; ++s) {
    split_step_span(a, input.dt, link.span, cfg, FieldUnits::dimensional);
    for (cplx& v : a) v *= gain_amp;
    if (link.filter) {
      fft.forward(a);
      for (std::size_t k = 0; k < n; ++k) a[k] *= filter_amp[k];
      fft.inverse(a);
    }
    if (link.ase) add_ase(a, input.dt, gain_power, link.ase->noise_figure_dB, rng);
    for (const cplx& v : a)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw NonFiniteField("sample became non-finite after span " + std::to_string(s + 1));
    if (cfg.record_every_span || s == link.n_spans - 1)
      record(z0 + (s + 1) * link.span.length);
  }
  return out;
}

std::vector<cplx> spectrum_coefficients(const FieldGrid& grid, int iz) {
  require_pow2(static_cast<std::size_t>(grid.n_t));
  if (iz < 0 || iz >= grid.n_z()) throw Error("slice index out of range");
  const std::size_t n = static_cast<std::size_t>(grid.n_t);
  std::vector<cplx> a(n);
  for (std::size_t k = 0; k < n; ++k) a[k] = grid.at(iz, static_cast<int>(k));
  Fft fft(static_cast<int>(n));
  fft.forward(a);
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const int m = mode_index(k, n);
    out[static_cast<std::size_t>(m + static_cast<int>(n) / 2)] = a[k] / static_cast<double>(n);
  }
  return out;
}

double fourier_bandwidth(const FieldGrid& grid, int iz, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("fraction must be in (0, 1)");
  const std::vector<cplx> c = spectrum_coefficients(grid, iz);
  const std::size_t n = c.size();
  const double df = 1.0 / (grid.dt * static_cast<double>(n));
  const int half = static_cast<int>(n) / 2;

  double total = 0.0, centroid = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::norm(c[i]);
    total += p;
    centroid += (static_cast<int>(i) - half) * df * p;
  }
  if (total <= 0.0) return 0.0;
  centroid /= total;

  // Grow a symmetric band around the centroid until the fraction is reached.
  std::vector<std::pair<double, double>> by_dist;  // (|f - centroid|, power)
  by_dist.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    by_dist.emplace_back(std::abs((static_cast<int>(i) - half) * df - centroid),
                         std::norm(c[i]));
  std::sort(by_dist.begin(), by_dist.end());
  double acc = 0.0;
  for (const auto& [dist, p] : by_dist) {
    acc += p;
    // A band never resolves below one FFT bin.
    if (acc >= fraction * total) return std::max(2.0 * dist, df);
  }
  return std::max(2.0 * by_dist.back().first, df);
}

double fitted_peak_power(const FieldGrid& grid, int iz) {
  if (iz < 0 || iz >= grid.n_z()) throw Error("slice index out of range");
  const int n = grid.n_t;
  if (n < 3) throw Error("need at least three samples to refine a peak");
  int imax = 0;
  double pmax = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = std::norm(grid.at(iz, i));
    if (p > pmax) {
      pmax = p;
      imax = i;
    }
  }
  if (pmax <= 0.0) return 0.0;
  const double pl = std::norm(grid.at(iz, (imax + n - 1) % n));
  const double pr = std::norm(grid.at(iz, (imax + 1) % n));
  if (pl <= 0.0 || pr <= 0.0) return pmax;
  // Parabola through log p at -1, 0, +1: vertex offset b/(2a) with
  // a = (L + R)/2 - C, b = (R - L)/2 in log space.
  const double lc = std::log(pmax), ll = std::log(pl), lr = std::log(pr);
  const double a = 0.5 * (ll + lr) - lc;
  const double b = 0.5 * (lr - ll);
  if (!(a < 0.0)) return pmax;
  return std::exp(lc - b * b / (4.0 * a));
}

double peak_background_phase(const FieldGrid& grid, int iz, int period_samples) {
  if (iz < 0 || iz >= grid.n_z()) throw Error("slice index out of range");
  const int n = grid.n_t;
  if (period_samples < 2 || period_samples > n || n % period_samples != 0)
    throw Error("period_samples must divide the slice length");
  int imax = 0;
  double pmax = -1.0;
  for (int i = 0; i < n; ++i) {
    const double p = std::norm(grid.at(iz, i));
    if (p > pmax) {
      pmax = p;
      imax = i;
    }
  }
  const cplx peak = grid.at(iz, imax);
  const cplx bg = grid.at(iz, (imax + period_samples / 2) % n);
  if (std::abs(peak) == 0.0 || std::abs(bg) == 0.0)
    throw Error("phase undefined at a zero of the field");
  const double d = std::arg(peak / bg);
  return std::abs(d);  // arg() is already in (-pi, pi]
}

bool comb_monotone_decay(const FieldGrid& grid, int iz, int stride, int n_sidebands) {
  if (stride < 1) throw Error("stride must be positive");
  if (n_sidebands < 2) throw Error("need at least two sidebands to compare");
  const std::vector<cplx> c = spectrum_coefficients(grid, iz);
  const int half = static_cast<int>(c.size()) / 2;
  if (n_sidebands * stride >= half)
    throw Error("requested sidebands exceed the resolved band");
  for (int sign : {+1, -1}) {
    double prev = std::abs(c[static_cast<std::size_t>(half + sign * stride)]);
    for (int m = 2; m <= n_sidebands; ++m) {
      const double cur = std::abs(c[static_cast<std::size_t>(half + sign * m * stride)]);
      if (!(cur < prev)) return false;
      prev = cur;
    }
  }
  return true;
}

FieldDeviation field_deviation(const FieldGrid& test, const FieldGrid& reference,
                               int first_row) {
  if (test.n_t != reference.n_t || test.n_z() != reference.n_z())
    throw Error("field deviation needs grids of identical shape");
  if (test.units != reference.units) throw Error("field deviation needs matching units");
  if (first_row < 0 || first_row >= reference.n_z())
    throw Error("first_row out of range");
  for (int iz = 0; iz < reference.n_z(); ++iz)
    if (std::abs(test.z_values[iz] - reference.z_values[iz]) >
        1e-6 * std::max(1.0, std::abs(reference.z_values[iz])))
      throw Error("field deviation needs matching distance rows");

  double peak = 0.0;
  for (const cplx& v : reference.samples) peak = std::max(peak, std::abs(v));
  if (peak <= 0.0) throw Error("reference field is identically zero");

  FieldDeviation out;
  NeumaierSum acc;
  std::size_t count = 0;
  for (int iz = first_row; iz < reference.n_z(); ++iz)
    for (int it = 0; it < reference.n_t; ++it) {
      const double d = std::abs(test.at(iz, it) - reference.at(iz, it)) / peak;
      acc.add(d);
      out.max = std::max(out.max, d);
      ++count;
    }
  out.mean = acc.value() / static_cast<double>(count);
  return out;
}

double spectral_asymmetry(const FieldGrid& grid, int iz) {
  const std::vector<cplx> c = spectrum_coefficients(grid, iz);
  const int half = static_cast<int>(c.size()) / 2;
  double diff = 0.0, scale = 0.0;
  for (int m = 1; m < half; ++m) {
    const double plus = std::abs(c[static_cast<std::size_t>(half + m)]);
    const double minus = std::abs(c[static_cast<std::size_t>(half - m)]);
    diff += std::abs(plus - minus);
    scale += plus + minus;
  }
  return scale > 0.0 ? diff / scale : 0.0;
}

}  // namespace fgnls

// SPDX-License-Identifier: Apache-2.0

#include "fgnls/theta.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace fgnls {
namespace {

// Upper incomplete gamma for integer and half-integer a >= 1/2.
double upper_gamma(double a, double x) {
  double value, base;
  if (std::abs(a - std::round(a)) < 0.25) {
    base = 1.0;
    value = std::exp(-x);  // Gamma(1, x)
  } else {
    base = 0.5;
    value = std::sqrt(kPi) * std::erfc(std::sqrt(x));  // Gamma(1/2, x^2=x)... x is already squared by caller
  }
  while (base + 0.5 < a + 0.25) {
    value = base * value + std::pow(x, base) * std::exp(-x);
    base += 1.0;
  }
  return value;
}

double binom(int n, int k) {
  double v = 1.0;
  for (int i = 1; i <= k; ++i) v *= double(n - k + i) / double(i);
  return v;
}

// Ball-packing bound on sum over ||M(m+c)|| >= R of exp(-||M(m+c)||^2),
// where rho is the shortest nonzero lattice vector length.  Valid for R > rho.
double tail_bound(int g, double rho, double R) {
  if (g == 0) return 0.0;
  const double t = R - rho;
  if (t <= 0.0) return std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (int k = 0; k < g; ++k) {
    sum += binom(g - 1, k) * std::pow(rho / 2.0, g - 1 - k) * 0.5 *
           upper_gamma(0.5 * (k + 1), t * t);
  }
  return g * std::pow(2.0 / rho, g) * sum;
}

double choose_radius(int g, double rho, double eps) {
  double R = rho * 1.01 + 0.5;
  while (tail_bound(g, rho, R) > eps) {
    R += 0.25;
    if (R > 1e4) break;  // pathological; the lattice-count guard will fire
  }
  return R;
}

// All integer vectors m with ||M(m + c)||^2 <= R2 (M upper triangular,
// positive diagonal).  Appends to `out` as flattened coordinates.
void enumerate_lattice(const Eigen::MatrixXd& M, const Eigen::VectorXd& c, double R2,
                       std::vector<int>& out, std::size_t hard_cap) {
  const int g = static_cast<int>(M.rows());
  std::vector<int> m(g, 0);
  std::vector<double> partial(g + 1, 0.0);  // partial[i] = sum of squares from levels > i-1

  std::function<void(int, double)> walk = [&](int i, double used) {
    if (i < 0) {
      if (out.size() / g >= hard_cap)
        throw TruncationRadiusOverflow("lattice enumeration exceeded hard cap");
      out.insert(out.end(), m.begin(), m.end());
      return;
    }
    double t = 0.0;
    for (int j = i + 1; j < g; ++j) t += M(i, j) * (m[j] + c[j]);
    const double rem = R2 - used;
    if (rem < 0) return;
    const double root = std::sqrt(rem);
    const double mii = M(i, i);
    int lo = static_cast<int>(std::ceil((-root - t) / mii - c[i] - 1e-12));
    int hi = static_cast<int>(std::floor((root - t) / mii - c[i] + 1e-12));
    for (int v = lo; v <= hi; ++v) {
      m[i] = v;
      const double vi = mii * (v + c[i]) + t;
      walk(i - 1, used + vi * vi);
    }
  };
  walk(g - 1, 0.0);
}

struct RawTheta {
  cplx sum{0.0, 0.0};   // compensated lattice sum (O(1) magnitude)
  double log_scale = 0.0;
  double phase0 = 0.0;  // constant phase pulled out by the integer recentering
};

RawTheta theta_core(const Eigen::VectorXcd& x, const RiemannMatrix& rm, double eps) {
  const int g = rm.genus();
  RawTheta out;
  if (g == 0) {
    out.sum = {1.0, 0.0};
    return out;
  }
  if (!(eps > 0.0 && eps < 1.0)) throw Error("theta: eps must lie in (0,1)");
  if (static_cast<int>(x.size()) != g) throw LengthMismatch("theta argument size vs genus");

  Eigen::VectorXd a = x.real(), b = x.imag();
  a -= a.array().round().matrix();

  const Eigen::VectorXd c = rm.im_inverse() * b;
  const Eigen::VectorXd m0 = c.array().round().matrix();
  const Eigen::VectorXd chat = c - m0;
  out.log_scale = kPi * b.dot(c);  // pi * c'Yc since Yc = b
  out.phase0 = kPi * m0.dot(rm.re() * m0) - 2.0 * kPi * m0.dot(a);

  Eigen::VectorXd ahat = a - rm.re() * m0;
  ahat -= ahat.array().round().matrix();

  const double rho = rm.shortest_vector();
  const double R = choose_radius(g, rho, eps);

  // Volume-based count estimate guards against unreasonable ellipsoids.
  const double det_root = rm.gauss_factor().diagonal().prod();
  const double count_est =
      std::pow(R, g) / (std::tgamma(0.5 * g + 1.0) * det_root / std::pow(kPi, 0.5 * g));
  if (count_est > 1e9)
    throw TruncationRadiusOverflow("truncation ellipsoid holds ~" + std::to_string(count_est) +
                                   " lattice points");

  std::vector<int> flat;
  enumerate_lattice(rm.gauss_factor(), chat, R * R, flat, static_cast<std::size_t>(2e9 / g));
  const std::size_t n_terms = flat.size() / g;

  struct Term {
    double q;
    double phase;
    const int* m;
  };
  std::vector<Term> terms(n_terms);
  const Eigen::MatrixXd& M = rm.gauss_factor();
  const Eigen::MatrixXd& X = rm.re();
  for (std::size_t t = 0; t < n_terms; ++t) {
    const int* m = &flat[t * g];
    double q = 0.0;
    for (int i = 0; i < g; ++i) {
      double vi = 0.0;
      for (int j = i; j < g; ++j) vi += M(i, j) * (m[j] + chat[j]);
      q += vi * vi;
    }
    double ph = 0.0;
    for (int i = 0; i < g; ++i) {
      double xm = 0.0;
      for (int j = 0; j < g; ++j) xm += X(i, j) * m[j];
      ph += m[i] * (kPi * xm + 2.0 * kPi * ahat[i]);
    }
    terms[t] = {q, ph, m};
  }
  // Deterministic order: smallest-magnitude terms first, lexicographic tiebreak.
  std::sort(terms.begin(), terms.end(), [g](const Term& l, const Term& r) {
    if (l.q != r.q) return l.q > r.q;
    return std::lexicographical_compare(l.m, l.m + g, r.m, r.m + g);
  });

  NeumaierSumC acc;
  for (const Term& t : terms) {
    const double w = std::exp(-t.q);
    acc.add(cplx{w * std::cos(t.phase), w * std::sin(t.phase)});
  }
  out.sum = acc.value();
  return out;
}

ThetaValue assemble(const RawTheta& raw) {
  ThetaValue v;
  const cplx s = raw.sum * cplx{std::cos(raw.phase0), std::sin(raw.phase0)};
  if (s == cplx{0.0, 0.0}) {
    v.mantissa = 0.0;
    v.log_scale = 0.0;
    return v;
  }
  const double t = std::floor(std::log(std::abs(s)));
  v.mantissa = s * std::exp(-t);
  v.log_scale = raw.log_scale + t;
  return v;
}

}  // namespace

RiemannMatrix::RiemannMatrix(const Eigen::MatrixXcd& tau, double sym_tol) : tau_(tau) {
  if (tau.rows() != tau.cols()) throw InvalidRiemannMatrix("matrix not square");
  if (!tau.allFinite()) throw InvalidRiemannMatrix("matrix has non-finite entries");
  const int g = static_cast<int>(tau.rows());
  X_ = tau.real();
  Y_ = tau.imag();
  if (g == 0) return;
  const double asym = (tau_ - tau_.transpose()).cwiseAbs().maxCoeff();
  if (asym > sym_tol * (1.0 + tau_.cwiseAbs().maxCoeff()))
    throw InvalidRiemannMatrix("asymmetry " + std::to_string(asym) + " above tolerance");
  // Work with the symmetrized matrix so downstream factorizations are exact.
  tau_ = 0.5 * (tau_ + tau_.transpose());
  X_ = tau_.real();
  Y_ = tau_.imag();
  Eigen::LLT<Eigen::MatrixXd> llt(Y_);
  if (llt.info() != Eigen::Success)
    throw InvalidRiemannMatrix("imaginary part not positive definite");
  M_ = std::sqrt(kPi) * Eigen::MatrixXd(llt.matrixL()).transpose();
  Yinv_ = llt.solve(Eigen::MatrixXd::Identity(g, g));

  // Shortest nonzero lattice vector of M: enumerate inside the smallest
  // diagonal-based radius, which always contains a nonzero point.
  double r_ub = M_.diagonal().minCoeff();
  for (int j = 0; j < g; ++j) r_ub = std::min(r_ub, M_.col(j).norm());
  std::vector<int> flat;
  enumerate_lattice(M_, Eigen::VectorXd::Zero(g), r_ub * r_ub * 1.0001, flat, 4000000);
  rho_ = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < flat.size() / g; ++t) {
    Eigen::VectorXd m(g);
    for (int i = 0; i < g; ++i) m[i] = flat[t * g + i];
    if (m.isZero()) continue;
    rho_ = std::min(rho_, (M_ * m).norm());
  }
  if (!std::isfinite(rho_)) rho_ = r_ub;
}

ThetaValue theta(const Eigen::VectorXcd& x, const RiemannMatrix& tau, double eps) {
  return assemble(theta_core(x, tau, eps));
}

cplx theta_ratio(const Eigen::VectorXcd& x_num, const Eigen::VectorXcd& x_den,
                 const RiemannMatrix& tau, double eps) {
  const RawTheta num = theta_core(x_num, tau, eps);
  const RawTheta den = theta_core(x_den, tau, eps);
  if (std::abs(den.sum) < eps)
    throw ThetaZeroDivisor("denominator magnitude " + std::to_string(std::abs(den.sum)));
  const cplx phase{std::cos(num.phase0 - den.phase0), std::sin(num.phase0 - den.phase0)};
  return (num.sum / den.sum) * phase * std::exp(num.log_scale - den.log_scale);
}

ThetaSeries::ThetaSeries(const RiemannMatrix& rm, double eps) : g_(rm.genus()) {
  build(rm, eps, Eigen::VectorXcd::Zero(g_));
}

ThetaSeries::ThetaSeries(const RiemannMatrix& rm, double eps, const Eigen::VectorXcd& x_shift)
    : g_(rm.genus()) {
  if (static_cast<int>(x_shift.size()) != g_)
    throw LengthMismatch("theta series shift size vs genus");
  build(rm, eps, x_shift);
}

void ThetaSeries::build(const RiemannMatrix& rm, double eps, const Eigen::VectorXcd& x_shift) {
  if (g_ == 0) return;
  // Recentering for the fixed imaginary part: with m = n - m0 the sum becomes
  //   exp(i pi m0'tau m0 - 2 pi i m0 x_shift) * sum_n W_n exp(2 pi i (n-m0) a),
  //   W_n = exp(i pi n'tau n + 2 pi i n (x_shift - tau m0)).
  // Storing lattice coordinates m = n - m0 absorbs the a-dependent phase.
  const Eigen::VectorXd b = x_shift.imag();
  const Eigen::VectorXd c = rm.im_inverse() * b;
  const Eigen::VectorXd m0 = c.array().round().matrix();
  const Eigen::VectorXd chat = c - m0;
  const Eigen::VectorXcd xt = x_shift - rm.tau() * m0.cast<cplx>();
  const double phase_c = kPi * m0.dot(rm.re() * m0) - 2.0 * kPi * m0.dot(x_shift.real());
  const double log_c = -kPi * m0.dot(rm.im() * m0) + 2.0 * kPi * m0.dot(b);

  const double R = choose_radius(g_, rm.shortest_vector(), eps);
  std::vector<int> flat;
  enumerate_lattice(rm.gauss_factor(), chat, R * R, flat, static_cast<std::size_t>(2e9 / g_));
  const std::size_t n_terms = flat.size() / g_;

  struct Row {
    double logw;   // log|W_n| + log_c
    double arg;    // arg W_n + phase_c
    std::vector<int> m;  // stored coordinate n - m0
  };
  std::vector<Row> rows(n_terms);
  const Eigen::MatrixXd& X = rm.re();
  const Eigen::MatrixXd& Y = rm.im();
  double log_max = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n_terms; ++t) {
    Eigen::VectorXd n(g_);
    rows[t].m.resize(g_);
    for (int i = 0; i < g_; ++i) {
      n[i] = flat[t * g_ + i];
      rows[t].m[i] = flat[t * g_ + i] - static_cast<int>(m0[i]);
    }
    rows[t].logw = -kPi * n.dot(Y * n) - 2.0 * kPi * n.dot(xt.imag()) + log_c;
    rows[t].arg = kPi * n.dot(X * n) + 2.0 * kPi * n.dot(xt.real()) + phase_c;
    log_max = std::max(log_max, rows[t].logw);
  }
  if (n_terms == 0) return;
  std::sort(rows.begin(), rows.end(), [](const Row& l, const Row& r) {
    if (l.logw != r.logw) return l.logw < r.logw;
    return l.m < r.m;
  });

  log_offset_ = log_max;
  weights_.reserve(n_terms);
  for (const Row& r : rows) {
    for (int i = 0; i < g_; ++i) max_abs_coord_ = std::max(max_abs_coord_, std::abs(r.m[i]));
    const double w = std::exp(r.logw - log_offset_);
    abs_weight_sum_ += w;
    weights_.push_back(w * cplx{std::cos(r.arg), std::sin(r.arg)});
    if (g_ <= 4) {
      std::array<int, 4> p{0, 0, 0, 0};
      for (int i = 0; i < g_; ++i) p[i] = r.m[i];
      points_.push_back(p);
    } else {
      points_big_.insert(points_big_.end(), r.m.begin(), r.m.end());
    }
  }
}

cplx ThetaSeries::eval(const Eigen::VectorXd& a) const {
  if (g_ == 0) return {1.0, 0.0};
  // Power tables z_j^p for p in [-max_coord, max_coord]; |z_j| = 1 so the
  // negative powers are conjugates.
  const int w = max_abs_coord_;
  thread_local std::vector<cplx> table;
  table.assign(static_cast<std::size_t>(g_) * (2 * w + 1), cplx{1.0, 0.0});
  for (int j = 0; j < g_; ++j) {
    const double aj = a[j] - std::round(a[j]);
    const cplx z{std::cos(2.0 * kPi * aj), std::sin(2.0 * kPi * aj)};
    cplx* row = &table[static_cast<std::size_t>(j) * (2 * w + 1) + w];
    row[0] = {1.0, 0.0};
    for (int p = 1; p <= w; ++p) {
      row[p] = row[p - 1] * z;
      row[-p] = std::conj(row[p]);
    }
  }
  cplx sum{0.0, 0.0};
  if (g_ <= 4) {
    for (std::size_t t = 0; t < weights_.size(); ++t) {
      cplx ph = table[static_cast<std::size_t>(0) * (2 * w + 1) + w + points_[t][0]];
      for (int j = 1; j < g_; ++j)
        ph *= table[static_cast<std::size_t>(j) * (2 * w + 1) + w + points_[t][j]];
      sum += weights_[t] * ph;
    }
  } else {
    for (std::size_t t = 0; t < weights_.size(); ++t) {
      cplx ph{1.0, 0.0};
      for (int j = 0; j < g_; ++j)
        ph *= table[static_cast<std::size_t>(j) * (2 * w + 1) + w +
                    points_big_[t * g_ + j]];
      sum += weights_[t] * ph;
    }
  }
  return sum;
}

}  // namespace fgnls

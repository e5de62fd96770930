// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "fgnls/theta.hpp"

using namespace fgnls;

namespace {

// Independent brute-force evaluation: direct double sum over a big box with
// per-term exponent extraction so huge recentered values stay representable.
// Returns mantissa * exp(log_scale) semantics like the production code but
// shares none of its machinery.
struct BruteTheta {
  cplx mantissa;
  double log_scale;
  cplx value() const { return mantissa * std::exp(log_scale); }
};

BruteTheta brute_theta(const Eigen::VectorXcd& x, const Eigen::MatrixXcd& tau, int box) {
  const int g = static_cast<int>(x.size());
  std::vector<Eigen::VectorXi> idx;
  Eigen::VectorXi m = Eigen::VectorXi::Constant(g, -box);
  while (true) {
    idx.push_back(m);
    int d = 0;
    while (d < g && m(d) == box) {
      m(d) = -box;
      ++d;
    }
    if (d == g) break;
    ++m(d);
  }
  // First pass: find the max real exponent.
  double maxre = -1e300;
  std::vector<cplx> expo(idx.size());
  for (size_t t = 0; t < idx.size(); ++t) {
    Eigen::VectorXcd mv = idx[t].cast<double>().cast<cplx>();
    cplx e = cplx(0, 1) * kPi * (mv.transpose() * (tau * mv))(0, 0) +
             cplx(0, 2) * kPi * (mv.transpose() * x)(0, 0);
    expo[t] = e;
    maxre = std::max(maxre, e.real());
  }
  cplx sum = 0.0;
  for (size_t t = 0; t < idx.size(); ++t) sum += std::exp(expo[t] - maxre);
  return BruteTheta{sum, maxre};
}

void check_against_brute(const Eigen::VectorXcd& x, const Eigen::MatrixXcd& tau, int box,
                         double tol) {
  RiemannMatrix rm(tau);
  ThetaValue pro = theta(x, rm, 1e-12);
  BruteTheta ref = brute_theta(x, tau, box);
  const cplx ratio = (pro.mantissa / ref.mantissa) * std::exp(pro.log_scale - ref.log_scale);
  CHECK(std::abs(ratio - 1.0) < tol);
}

}  // namespace

TEST_CASE("genus-1 value at the lemniscatic point matches the classical constant") {
  // theta(0 | i) = pi^{1/4} / Gamma(3/4), an independent closed form.
  Eigen::MatrixXcd tau(1, 1);
  tau(0, 0) = cplx(0.0, 1.0);
  RiemannMatrix rm(tau);
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(1);
  const double exact = std::pow(kPi, 0.25) / std::tgamma(0.75);
  CHECK(std::abs(theta(x, rm).value() - cplx(exact, 0.0)) < 1e-12);
}

TEST_CASE("genus-1 agrees with brute-force summation, including recentering") {
  Eigen::MatrixXcd tau(1, 1);
  tau(0, 0) = cplx(0.3, 1.1);
  Eigen::VectorXcd x(1);

  x(0) = cplx(0.17, 0.05);
  check_against_brute(x, tau, 40, 1e-11);

  // Large imaginary part exercises the shift m -> m + m0 and log scaling.
  x(0) = cplx(-0.41, 4.8);
  check_against_brute(x, tau, 40, 1e-11);

  x(0) = cplx(2.73, -3.9);
  check_against_brute(x, tau, 40, 1e-11);
}

TEST_CASE("genus-2 agrees with brute-force summation") {
  Eigen::MatrixXcd tau(2, 2);
  tau << cplx(0.2, 1.2), cplx(0.3, 0.1), cplx(0.3, 0.1), cplx(-0.4, 0.9);
  Eigen::VectorXcd x(2);
  x << cplx(0.21, 0.4), cplx(-0.13, -0.27);
  check_against_brute(x, tau, 24, 1e-10);
  x << cplx(0.5, 1.9), cplx(0.25, 1.1);
  check_against_brute(x, tau, 24, 1e-10);
}

TEST_CASE("evenness, integer periodicity, and quasi-periodicity") {
  Eigen::MatrixXcd tau(2, 2);
  tau << cplx(0.1, 0.8), cplx(-0.2, 0.3), cplx(-0.2, 0.3), cplx(0.4, 1.5);
  RiemannMatrix rm(tau);
  Eigen::VectorXcd x(2);
  x << cplx(0.31, 0.12), cplx(-0.42, 0.55);

  const cplx base = theta(x, rm).value();
  CHECK(std::abs(theta(-x, rm).value() - base) < 1e-12 * std::abs(base));

  Eigen::VectorXcd shift_int = x;
  shift_int(0) += 1.0;
  shift_int(1) -= 2.0;
  CHECK(std::abs(theta(shift_int, rm).value() - base) < 1e-10 * std::abs(base));

  // theta(x + tau e_j) = exp(-i pi tau_jj - 2 i pi x_j) theta(x)
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXcd xs = x + tau.col(j);
    const cplx factor = std::exp(cplx(0, -1) * kPi * tau(j, j) - cplx(0, 2) * kPi * x(j));
    ThetaValue lhs = theta(xs, rm);
    const cplx rel = lhs.value() / (factor * base);
    CHECK(std::abs(rel - 1.0) < 1e-10);
  }
}

TEST_CASE("requested tolerance bounds the truncation error") {
  Eigen::MatrixXcd tau(2, 2);
  tau << cplx(0.0, 0.6), cplx(0.0, 0.25), cplx(0.0, 0.25), cplx(0.0, 0.7);
  RiemannMatrix rm(tau);
  Eigen::VectorXcd x(2);
  x << cplx(0.4, 0.0), cplx(0.1, 0.0);
  const cplx tight = theta(x, rm, 1e-13).value();
  for (double eps : {1e-4, 1e-6, 1e-8}) {
    const cplx loose = theta(x, rm, eps).value();
    CHECK(std::abs(loose - tight) <= eps);
  }
}

TEST_CASE("odd half-period zero is detected and the ratio refuses to divide") {
  Eigen::MatrixXcd tau(1, 1);
  tau(0, 0) = cplx(0.2, 1.3);
  RiemannMatrix rm(tau);
  Eigen::VectorXcd zero_pt(1), generic(1);
  zero_pt(0) = 0.5 * (1.0 + tau(0, 0));
  generic(0) = cplx(0.123, 0.456);

  const double mag0 = std::abs(theta(zero_pt, rm).value());
  const double mag1 = std::abs(theta(Eigen::VectorXcd::Zero(1), rm).value());
  CHECK(mag0 < 1e-10 * mag1);
  CHECK_THROWS_AS(theta_ratio(generic, zero_pt, rm, 1e-10), ThetaZeroDivisor);
}

TEST_CASE("invalid Riemann matrices are rejected") {
  Eigen::MatrixXcd bad1(2, 2);
  bad1 << cplx(0, 1), cplx(0.5, 0.2), cplx(-0.5, 0.2), cplx(0, 1);  // not symmetric
  CHECK_THROWS_AS(RiemannMatrix{bad1}, InvalidRiemannMatrix);

  Eigen::MatrixXcd bad2(1, 1);
  bad2(0, 0) = cplx(0.3, -0.8);  // imaginary part not positive definite
  CHECK_THROWS_AS(RiemannMatrix{bad2}, InvalidRiemannMatrix);

  Eigen::MatrixXcd bad3(2, 2);
  bad3 << cplx(0, 1), cplx(0, 1.001), cplx(0, 1.001), cplx(0, 1);  // indefinite
  CHECK_THROWS_AS(RiemannMatrix{bad3}, InvalidRiemannMatrix);
}

TEST_CASE("pathologically flat directions overflow the truncation radius") {
  // A mildly flat genus-1 lattice is still summable (tens of thousands of
  // terms); a genus-2 one with the same flatness is not and must refuse.
  Eigen::MatrixXcd flat1(1, 1);
  flat1(0, 0) = cplx(0.0, 1e-6);
  const cplx ok = theta(Eigen::VectorXcd::Zero(1), RiemannMatrix(flat1), 1e-10).value();
  CHECK(std::isfinite(ok.real()));
  CHECK(ok.real() > 1.0);

  Eigen::MatrixXcd flat2 = Eigen::MatrixXcd::Zero(2, 2);
  flat2(0, 0) = flat2(1, 1) = cplx(0.0, 1e-8);
  RiemannMatrix rm(flat2);
  CHECK_THROWS_AS(theta(Eigen::VectorXcd::Zero(2), rm, 1e-10), TruncationRadiusOverflow);
}

TEST_CASE("cached real-argument series matches the reference evaluator") {
  Eigen::MatrixXcd tau(2, 2);
  tau << cplx(0.15, 0.9), cplx(-0.1, 0.2), cplx(-0.1, 0.2), cplx(0.3, 1.1);
  RiemannMatrix rm(tau);
  ThetaSeries series(rm, 1e-12);
  CHECK(series.term_count() > 10);

  unsigned long long state = 88172645463325252ull;
  auto next_uniform = [&]() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return (state >> 11) * (1.0 / 9007199254740992.0);
  };
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd a(2);
    a << 4.0 * next_uniform() - 2.0, 4.0 * next_uniform() - 2.0;
    const cplx fast = series.eval(a);
    const cplx ref = theta(a.cast<cplx>(), rm, 1e-12).value();
    CHECK(std::abs(fast - ref) < 1e-9 * (1.0 + std::abs(ref)));
  }
}

TEST_CASE("shifted series reproduces theta along complex-offset lines") {
  Eigen::MatrixXcd tau(2, 2);
  tau << cplx(0.15, 0.9), cplx(-0.1, 0.2), cplx(-0.1, 0.2), cplx(0.3, 1.1);
  RiemannMatrix rm(tau);
  Eigen::VectorXcd shift(2);
  shift << cplx(0.37, 1.4), cplx(-0.21, -2.3);  // big enough to force recentering
  ThetaSeries series(rm, 1e-12, shift);

  unsigned long long state = 424242ull;
  auto uni = [&]() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return (state >> 11) * (1.0 / 9007199254740992.0);
  };
  for (int trial = 0; trial < 40; ++trial) {
    Eigen::VectorXd a(2);
    a << 6.0 * uni() - 3.0, 6.0 * uni() - 3.0;
    ThetaValue ref = theta(shift + a.cast<cplx>(), rm, 1e-12);
    const cplx fast = series.eval(a);
    const cplx ratio =
        (fast / ref.mantissa) * std::exp(series.log_offset() - ref.log_scale);
    CHECK(std::abs(ratio - 1.0) < 1e-9);
  }
}

TEST_CASE("evaluation is bitwise deterministic") {
  Eigen::MatrixXcd tau(2, 2);
  tau << cplx(0.2, 1.2), cplx(0.3, 0.1), cplx(0.3, 0.1), cplx(-0.4, 0.9);
  RiemannMatrix rm(tau);
  Eigen::VectorXcd x(2);
  x << cplx(0.5, 1.9), cplx(0.25, 1.1);
  ThetaValue a = theta(x, rm);
  ThetaValue b = theta(x, rm);
  CHECK(a.mantissa.real() == b.mantissa.real());
  CHECK(a.mantissa.imag() == b.mantissa.imag());
  CHECK(a.log_scale == b.log_scale);
}

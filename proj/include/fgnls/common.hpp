// SPDX-License-Identifier: Apache-2.0
//
// Shared plumbing: error types, compensated accumulation, parallel loops.
#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fgnls {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Error hierarchy.  Every failure mode advertised by the public API derives
// from Error so callers can catch the whole family at stage boundaries.
// ---------------------------------------------------------------------------
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define FGNLS_DEFINE_ERROR(NAME)                                  \
  struct NAME : Error {                                           \
    explicit NAME(const std::string& what) : Error(#NAME ": " + what) {} \
  }

FGNLS_DEFINE_ERROR(DegenerateSpectrum);
FGNLS_DEFINE_ERROR(OverlappingCuts);
FGNLS_DEFINE_ERROR(AtBranchPoint);
FGNLS_DEFINE_ERROR(BasisConstructionFailed);
FGNLS_DEFINE_ERROR(QuadratureNotConverged);
FGNLS_DEFINE_ERROR(IllConditionedA);
FGNLS_DEFINE_ERROR(PathThroughBranchPoint);
FGNLS_DEFINE_ERROR(DivergentWithoutRegularization);
FGNLS_DEFINE_ERROR(InvalidRiemannMatrix);
FGNLS_DEFINE_ERROR(TruncationRadiusOverflow);
FGNLS_DEFINE_ERROR(ThetaZeroDivisor);
FGNLS_DEFINE_ERROR(NonRealFrequency);
FGNLS_DEFINE_ERROR(StepUnderflow);
FGNLS_DEFINE_ERROR(NonFiniteField);
FGNLS_DEFINE_ERROR(LengthMismatch);
FGNLS_DEFINE_ERROR(NoRootsFound);

#undef FGNLS_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Neumaier (improved Kahan) compensated accumulator.  Summation order still
// matters for bit-reproducibility; callers must feed terms deterministically.
// ---------------------------------------------------------------------------
class NeumaierSum {
 public:
  void add(double x) {
    double t = s_ + x;
    if (std::abs(s_) >= std::abs(x))
      c_ += (s_ - t) + x;
    else
      c_ += (x - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  double s_ = 0.0, c_ = 0.0;
};

class NeumaierSumC {
 public:
  void add(cplx z) {
    re_.add(z.real());
    im_.add(z.imag());
  }
  cplx value() const { return {re_.value(), im_.value()}; }

 private:
  NeumaierSum re_, im_;
};

// ---------------------------------------------------------------------------
// Chunked parallel loop over [0, n).  Work is split into contiguous blocks so
// results written by index are deterministic regardless of thread count.
// ---------------------------------------------------------------------------
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  unsigned hw = std::thread::hardware_concurrency();
  std::size_t n_threads = hw ? hw : 1;
  if (n_threads <= 1 || n < 2 * n_threads) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (n + n_threads - 1) / n_threads;
  for (std::size_t t = 0; t < n_threads; ++t) {
    std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(body, lo, hi);
  }
  for (auto& th : pool) th.join();
}

inline bool nearly_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

constexpr double kPi = 3.14159265358979323846;

}  // namespace fgnls

// SPDX-License-Identifier: Apache-2.0
//
// Riemann theta function of genus g with a certified truncation radius:
//     theta(x|tau) = sum_{m in Z^g} exp(i*pi*m'*tau*m + 2*pi*i*m'*x).
// The lattice sum is truncated to an ellipsoid whose Gaussian tail is bounded
// rigorously by a ball-packing argument, so the returned value carries a
// guaranteed absolute error <= eps * (|theta| + 1).
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fgnls/common.hpp"

namespace fgnls {

// Validated Riemann matrix: symmetric with positive-definite imaginary part.
class RiemannMatrix {
 public:
  RiemannMatrix() = default;  // empty matrix: the genus-0 (constant theta) case
  explicit RiemannMatrix(const Eigen::MatrixXcd& tau, double sym_tol = 1e-8);

  int genus() const { return static_cast<int>(tau_.rows()); }
  const Eigen::MatrixXcd& tau() const { return tau_; }
  const Eigen::MatrixXd& re() const { return X_; }
  const Eigen::MatrixXd& im() const { return Y_; }
  const Eigen::MatrixXd& im_inverse() const { return Yinv_; }
  // Upper-triangular M with M'M = pi * Y; the Gaussian weight of lattice
  // point m is exp(-|M m|^2).
  const Eigen::MatrixXd& gauss_factor() const { return M_; }
  // Euclidean length of the shortest nonzero lattice vector M m.
  double shortest_vector() const { return rho_; }

 private:
  Eigen::MatrixXcd tau_;
  Eigen::MatrixXd X_, Y_, Yinv_, M_;
  double rho_ = 0.0;
};

// Overflow-safe value: value = mantissa * exp(log_scale); |mantissa| is
// normalized into [1, e) unless the value is exactly zero.
struct ThetaValue {
  cplx mantissa{0.0, 0.0};
  double log_scale = 0.0;
  cplx value() const { return mantissa * std::exp(log_scale); }
};

// Full theta evaluation for complex arguments.
ThetaValue theta(const Eigen::VectorXcd& x, const RiemannMatrix& tau, double eps = 1e-10);

// Ratio theta(x_num)/theta(x_den) evaluated with shared scale arithmetic.
// Throws ThetaZeroDivisor when the denominator is within eps of a zero.
cplx theta_ratio(const Eigen::VectorXcd& x_num, const Eigen::VectorXcd& x_den,
                 const RiemannMatrix& tau, double eps = 1e-10);

// Precomputed lattice for repeated evaluation along a real line of arguments:
// theta(x_shift + a) with x_shift a fixed complex vector and a real.  The
// Gaussian weights never change along such a line, so they are cached once;
// the shift's exponential growth is folded into a constant log offset.
class ThetaSeries {
 public:
  ThetaSeries(const RiemannMatrix& tau, double eps = 1e-10);
  ThetaSeries(const RiemannMatrix& tau, double eps, const Eigen::VectorXcd& x_shift);

  // Mantissa of theta(x_shift + a); the full value is eval(a)*exp(log_offset()).
  cplx eval(const Eigen::VectorXd& a) const;
  double log_offset() const { return log_offset_; }
  // Sum of |weights|: the natural magnitude scale for zero detection.
  double abs_weight_sum() const { return abs_weight_sum_; }
  std::size_t term_count() const { return weights_.size(); }

 private:
  void build(const RiemannMatrix& rm, double eps, const Eigen::VectorXcd& x_shift);

  int g_;
  std::vector<std::array<int, 4>> points_;  // lattice coordinates (genus <= 4 fast path)
  std::vector<int> points_big_;             // flattened coordinates for genus > 4
  std::vector<cplx> weights_;
  int max_abs_coord_ = 0;
  double log_offset_ = 0.0;
  double abs_weight_sum_ = 0.0;
};

}  // namespace fgnls

// SPDX-License-Identifier: Apache-2.0
//
// Adaptive Gauss-Legendre quadrature for smooth complex vector integrands.
// Panels are halved until the two-level defect fits inside a width-
// proportional share of the requested relative budget; the magnitude scale
// is accumulated without cancellation so integrals that sum to zero still
// get a meaningful budget.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "fgnls/common.hpp"

namespace fgnls {

struct QuadratureSpec {
  double rel_tol = 1e-10;
  int max_depth = 12;
};

namespace quad_detail {

// 20-point Gauss-Legendre rule on [-1, 1]: positive abscissae and weights.
inline constexpr int kHalf = 10;
inline constexpr double kNodes[kHalf] = {
    0.0765265211334973337546404, 0.2277858511416450780804962, 0.3737060887154195606725482,
    0.5108670019508270980043641, 0.6360536807265150254528367, 0.7463319064601507926143051,
    0.8391169718222188233945291, 0.9122344282513259058677524, 0.9639719272779137912676661,
    0.9931285991850949247861224};
inline constexpr double kWeights[kHalf] = {
    0.1527533871307258506980843, 0.1491729864726037467878287, 0.1420961093183820513292983,
    0.1316886384491766268984945, 0.1181945319615184173123774, 0.1019301198172404350367501,
    0.0832767415767047487247581, 0.0626720483341090635695065, 0.0406014298003869413310400,
    0.0176140071391521183118620};

template <typename F>
Eigen::VectorXcd gl_panel(F&& f, double a, double b, int dim) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(dim);
  for (int i = 0; i < kHalf; ++i) {
    acc += kWeights[i] * (f(mid + half * kNodes[i]) + f(mid - half * kNodes[i]));
  }
  return acc * half;
}

}  // namespace quad_detail

// Integrates f : [a, b] -> C^dim.  Throws QuadratureNotConverged when the
// refinement budget is exhausted; *err_estimate (optional) accumulates the
// defect of all accepted panels.
template <typename F>
Eigen::VectorXcd integrate_adaptive(F&& f, double a, double b, int dim,
                                    const QuadratureSpec& spec = {},
                                    double* err_estimate = nullptr) {
  using quad_detail::gl_panel;
  if (a == b) return Eigen::VectorXcd::Zero(dim);

  // Magnitude scale: L1 over eight uniform panels, so cancellation across
  // the interval cannot zero out the budget.
  double scale = 0.0;
  {
    const double h = (b - a) / 8.0;
    for (int i = 0; i < 8; ++i)
      scale = std::max(scale, gl_panel(f, a + i * h, a + (i + 1) * h, dim).cwiseAbs().maxCoeff());
  }
  scale = std::max(scale * 8.0, 1e-280);
  const double tol_abs = spec.rel_tol * scale;
  const double width = std::abs(b - a);

  double err_acc = 0.0;
  Eigen::VectorXcd total = Eigen::VectorXcd::Zero(dim);

  // Explicit stack to keep the recursion budget-friendly and deterministic.
  struct Panel {
    double lo, hi;
    int depth;
  };
  std::vector<Panel> stack{{a, b, 0}};
  while (!stack.empty()) {
    const Panel p = stack.back();
    stack.pop_back();
    const double mid = 0.5 * (p.lo + p.hi);
    const Eigen::VectorXcd whole = gl_panel(f, p.lo, p.hi, dim);
    const Eigen::VectorXcd fine = gl_panel(f, p.lo, mid, dim) + gl_panel(f, mid, p.hi, dim);
    const double defect = (whole - fine).cwiseAbs().maxCoeff();
    const double budget = tol_abs * std::max(std::abs(p.hi - p.lo) / width, 1e-4);
    if (defect <= budget) {
      total += fine;
      err_acc += defect;
    } else if (p.depth >= spec.max_depth) {
      throw QuadratureNotConverged("panel defect " + std::to_string(defect) +
                                   " above budget " + std::to_string(budget) +
                                   " at max refinement depth");
    } else {
      stack.push_back({mid, p.hi, p.depth + 1});
      stack.push_back({p.lo, mid, p.depth + 1});
    }
  }
  if (err_estimate) *err_estimate += err_acc;
  return total;
}

template <typename F>
cplx integrate_adaptive_scalar(F&& f, double a, double b, const QuadratureSpec& spec = {},
                               double* err_estimate = nullptr) {
  auto wrap = [&](double s) {
    Eigen::VectorXcd v(1);
    v(0) = f(s);
    return v;
  };
  return integrate_adaptive(wrap, a, b, 1, spec, err_estimate)(0);
}

}  // namespace fgnls

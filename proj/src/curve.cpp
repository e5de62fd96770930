// SPDX-License-Identifier: Apache-2.0

#include "fgnls/curve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace fgnls {

namespace {

double dist_point_to_vertical_segment(cplx p, double x, double half_height) {
  const double dx = std::abs(p.real() - x);
  const double dy = std::max(0.0, std::abs(p.imag()) - half_height);
  return std::hypot(dx, dy);
}

// Distance from a point to the closest branch point of any *other* cut.
double foreign_clearance(const HyperellipticCurve& c, int cut_index) {
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < static_cast<int>(c.cuts.size()); ++j) {
    if (j == cut_index) continue;
    for (cplx bp : {c.cuts[j].lower, c.cuts[j].upper}) {
      best = std::min(best, dist_point_to_vertical_segment(
                                bp, c.cuts[cut_index].abscissa(), c.cuts[cut_index].height()));
    }
  }
  return best;
}

}  // namespace

void MainSpectrum::validate() const {
  if (points.empty()) throw Error("MainSpectrum: needs at least one eigenvalue");
  double scale = 0.0;
  for (cplx p : points) {
    if (!std::isfinite(p.real()) || !std::isfinite(p.imag()))
      throw Error("MainSpectrum: non-finite eigenvalue");
    scale = std::max({scale, std::abs(p.real()), std::abs(p.imag())});
  }
  for (cplx p : points) {
    if (p.imag() <= 1e-12 * scale)
      throw DegenerateSpectrum("eigenvalue touches the real axis (collides with its conjugate)");
  }
  for (size_t i = 0; i < points.size(); ++i) {
    for (size_t j = i + 1; j < points.size(); ++j) {
      if (std::abs(points[i] - points[j]) < 1e-12 * scale)
        throw DegenerateSpectrum("two prescribed eigenvalues coincide");
    }
  }
}

HyperellipticCurve build_curve(const MainSpectrum& spectrum) {
  spectrum.validate();
  HyperellipticCurve c;
  c.spectrum = spectrum;
  std::sort(c.spectrum.points.begin(), c.spectrum.points.end(), [](cplx a, cplx b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  c.genus = c.spectrum.genus();

  for (cplx p : c.spectrum.points) {
    c.cuts.push_back(BranchCut{std::conj(p), p});
    c.branch_points.push_back(p);
    c.branch_points.push_back(std::conj(p));
  }
  for (size_t i = 0; i < c.branch_points.size(); ++i)
    for (size_t j = i + 1; j < c.branch_points.size(); ++j)
      c.diameter = std::max(c.diameter, std::abs(c.branch_points[i] - c.branch_points[j]));
  c.eps_bp = 1e-9 * c.diameter;

  // Vertical cuts overlap exactly when two pairs share an abscissa (every
  // cut straddles the real axis, so equal abscissae always collide).
  for (size_t i = 0; i + 1 < c.cuts.size(); ++i) {
    if (std::abs(c.cuts[i + 1].abscissa() - c.cuts[i].abscissa()) <= 1e-9 * c.diameter)
      throw OverlappingCuts("two vertical branch cuts share an abscissa");
  }

  // Real coefficients of P(lambda) = prod (lambda^2 - 2 c_j lambda + |e_j|^2).
  Eigen::VectorXd poly(1);
  poly(0) = 1.0;
  for (const BranchCut& cut : c.cuts) {
    const double cj = cut.abscissa(), hj = cut.height();
    Eigen::Vector3d quad(cj * cj + hj * hj, -2.0 * cj, 1.0);
    Eigen::VectorXd next = Eigen::VectorXd::Zero(poly.size() + 2);
    for (int i = 0; i < poly.size(); ++i)
      for (int k = 0; k < 3; ++k) next(i + k) += poly(i) * quad(k);
    poly = next;
  }
  c.P_coeffs = poly;
  return c;
}

cplx sqrt_P(const HyperellipticCurve& curve, cplx lambda, int sheet) {
  for (cplx bp : curve.branch_points) {
    if (std::abs(lambda - bp) < curve.eps_bp)
      throw AtBranchPoint("evaluation requested within the branch-point exclusion radius");
  }
  // One factor per conjugate pair: (lambda - c) * sqrt(1 + h^2 / (lambda - c)^2).
  // Each factor is continuous off its own vertical cut, and the product
  // tends to +lambda^{g+1} on the positive real axis east of every cut.
  cplx w0(1.0, 0.0);
  for (const BranchCut& cut : curve.cuts) {
    const cplx z = lambda - cplx(cut.abscissa(), 0.0);
    const cplx ratio = cplx(0.0, cut.height()) / z;
    w0 *= z * std::sqrt(1.0 - ratio * ratio);
  }
  return (sheet >= 0) ? w0 : -w0;
}

cplx PathSegment::point(double s) const {
  if (kind == Kind::line) return p0 + s * (p1 - p0);
  const double th = t0 + s * (t1 - t0);
  return center + cplx(rx * std::cos(th), ry * std::sin(th));
}

cplx PathSegment::velocity(double s) const {
  if (kind == Kind::line) return p1 - p0;
  const double th = t0 + s * (t1 - t0);
  return cplx(-rx * std::sin(th), ry * std::cos(th)) * (t1 - t0);
}

PathSegment PathSegment::reversed() const {
  PathSegment r = *this;
  if (kind == Kind::line) {
    r.p0 = p1;
    r.p1 = p0;
  } else {
    r.t0 = t1;
    r.t1 = t0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Homology
// ---------------------------------------------------------------------------

namespace {

PathSegment line_seg(cplx a, cplx b, int sheet) {
  PathSegment s;
  s.kind = PathSegment::Kind::line;
  s.p0 = a;
  s.p1 = b;
  s.sheet = sheet;
  return s;
}

PathSegment arc_seg(cplx center, double rx, double ry, double t0, double t1, int sheet) {
  PathSegment s;
  s.kind = PathSegment::Kind::ellipse_arc;
  s.center = center;
  s.rx = rx;
  s.ry = ry;
  s.t0 = t0;
  s.t1 = t1;
  s.sheet = sheet;
  return s;
}

struct Piece {
  double ax, ay, bx, by;
  int sheet;
};

void polygonalize(const CyclePath& path, std::vector<Piece>& out) {
  for (const PathSegment& seg : path.segments) {
    const int n = (seg.kind == PathSegment::Kind::line)
                      ? 1
                      : std::max(64, static_cast<int>(std::ceil(std::abs(seg.t1 - seg.t0) *
                                                                (512.0 / (2.0 * kPi)))));
    cplx prev = seg.point(0.0);
    for (int i = 1; i <= n; ++i) {
      cplx cur = seg.point(static_cast<double>(i) / n);
      out.push_back(Piece{prev.real(), prev.imag(), cur.real(), cur.imag(), seg.sheet});
      prev = cur;
    }
  }
}

long long signed_crossings(const std::vector<Piece>& P, const std::vector<Piece>& Q) {
  long long total = 0;
  for (const Piece& p : P) {
    const double rx = p.bx - p.ax, ry = p.by - p.ay;
    for (const Piece& q : Q) {
      if (q.sheet != p.sheet) continue;
      const double sx = q.bx - q.ax, sy = q.by - q.ay;
      const double denom = rx * sy - ry * sx;
      if (std::abs(denom) < 1e-300) continue;
      const double wx = q.ax - p.ax, wy = q.ay - p.ay;
      const double t = (wx * sy - wy * sx) / denom;
      const double u = (wx * ry - wy * rx) / -denom * -1.0;  // cross(w, r) / denom
      if (t >= 0.0 && t < 1.0 && u >= 0.0 && u < 1.0) total += (denom > 0.0) ? 1 : -1;
    }
  }
  return total;
}

CyclePath reversed_path(const CyclePath& p) {
  CyclePath r;
  for (auto it = p.segments.rbegin(); it != p.segments.rend(); ++it)
    r.segments.push_back(it->reversed());
  return r;
}

}  // namespace

int intersection_number(const CyclePath& p, const CyclePath& q) {
  std::vector<Piece> P, Q;
  polygonalize(p, P);
  polygonalize(q, Q);
  const long long n = signed_crossings(P, Q);
  return static_cast<int>(n);
}

HomologyBasis canonical_homology_basis(const HyperellipticCurve& curve) {
  HomologyBasis basis;
  const int g = curve.genus;
  if (g == 0) {
    basis.a_dot_b.resize(0, 0);
    return basis;
  }

  const int n_cuts = g + 1;
  std::vector<double> cx(n_cuts), hh(n_cuts), rx(n_cuts), mu(n_cuts);
  for (int j = 0; j < n_cuts; ++j) {
    cx[j] = curve.cuts[j].abscissa();
    hh[j] = curve.cuts[j].height();
    const double clearance = foreign_clearance(curve, j);
    rx[j] = 0.25 * clearance;
    if (!(rx[j] > 1e-8 * curve.diameter))
      throw BasisConstructionFailed("cut too close to a foreign branch point");
    mu[j] = 0.5 * rx[j];
  }

  // a_j: counter-clockwise ellipse around cut j (the first g cuts) on the
  // principal sheet, split into quadrants for quadrature and crossing tests.
  for (int j = 0; j < g; ++j) {
    CyclePath a;
    const cplx ctr(cx[j], 0.0);
    const double ry = hh[j] + rx[j];
    for (int q = 0; q < 4; ++q)
      a.segments.push_back(arc_seg(ctr, rx[j], ry, q * kPi / 2.0, (q + 1) * kPi / 2.0, +1));
    basis.a_cycles.push_back(std::move(a));
  }

  // Chain loop j ties cuts j and j+1: a rectangular staple whose middle leg
  // passes through both cuts (two sheet changes) and whose long return leg
  // goes around the cut tips.  Staples alternate above/below the real axis
  // so that consecutive loops never meet on the same sheet.
  for (int j = 0; j < g; ++j) {
    const int l = j, r = j + 1;
    const bool up = (j % 2 == 0);
    const double sgn = up ? 1.0 : -1.0;
    const double y_top = sgn * (std::max(hh[l] + rx[l], hh[r] + rx[r]) + 0.5 * std::min(rx[l], rx[r]));
    const double y_mid = -sgn * 0.2 * std::min(hh[l], hh[r]);
    const double xw = cx[l] - mu[l], xe = cx[r] + mu[r];

    CyclePath beta;
    beta.segments.push_back(line_seg(cplx(xw, y_top), cplx(xe, y_top), +1));
    beta.segments.push_back(line_seg(cplx(xe, y_top), cplx(xe, y_mid), +1));
    beta.segments.push_back(line_seg(cplx(xe, y_mid), cplx(cx[r], y_mid), +1));
    beta.segments.push_back(line_seg(cplx(cx[r], y_mid), cplx(cx[l], y_mid), -1));
    beta.segments.push_back(line_seg(cplx(cx[l], y_mid), cplx(xw, y_mid), +1));
    beta.segments.push_back(line_seg(cplx(xw, y_mid), cplx(xw, y_top), +1));
    basis.chain_loops.push_back(std::move(beta));
  }

  // Verify the raw intersection pattern a_i . beta_j = sigma (delta_ij - delta_{i,j+1})
  // by counting signed same-sheet crossings, then orient so sigma = +1.
  Eigen::MatrixXi M(g, g);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j)
      M(i, j) = intersection_number(basis.a_cycles[i], basis.chain_loops[j]);

  const int sigma = M(0, 0);
  if (sigma != 1 && sigma != -1)
    throw BasisConstructionFailed("unexpected a/chain intersection count");
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      const int expect = sigma * ((i == j ? 1 : 0) - (i == j + 1 ? 1 : 0));
      if (M(i, j) != expect)
        throw BasisConstructionFailed("a/chain intersection pattern is not canonical");
    }
  if (sigma == -1)
    for (CyclePath& beta : basis.chain_loops) beta = reversed_path(beta);

  // b_j = sum of chain loops j .. g-1 (a formal union of closed components).
  for (int j = 0; j < g; ++j) {
    CyclePath b;
    for (int m = j; m < g; ++m)
      b.segments.insert(b.segments.end(), basis.chain_loops[m].segments.begin(),
                        basis.chain_loops[m].segments.end());
    basis.b_cycles.push_back(std::move(b));
  }

  basis.a_dot_b.resize(g, g);
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      basis.a_dot_b(i, j) = intersection_number(basis.a_cycles[i], basis.b_cycles[j]);
      if (basis.a_dot_b(i, j) != (i == j ? 1 : 0))
        throw BasisConstructionFailed("a.b intersection matrix is not the identity");
    }
  for (int i = 0; i < g; ++i)
    for (int j = i + 1; j < g; ++j) {
      if (intersection_number(basis.a_cycles[i], basis.a_cycles[j]) != 0 ||
          intersection_number(basis.b_cycles[i], basis.b_cycles[j]) != 0)
        throw BasisConstructionFailed("a.a or b.b intersections are nonzero");
    }
  return basis;
}

// ---------------------------------------------------------------------------
// Periods
// ---------------------------------------------------------------------------

namespace {

// Integral over one path of the vector (lambda^k dlambda / w), k = 0..dim-1.
Eigen::VectorXcd moment_integral(const HyperellipticCurve& curve, const CyclePath& path, int dim,
                                 const QuadratureSpec& quad, double& err_acc) {
  Eigen::VectorXcd total = Eigen::VectorXcd::Zero(dim);
  for (const PathSegment& seg : path.segments) {
    auto f = [&](double s) {
      const cplx lam = seg.point(s);
      const cplx w = sqrt_P(curve, lam, seg.sheet);
      Eigen::VectorXcd row(dim);
      cplx pw = seg.velocity(s) / w;
      for (int k = 0; k < dim; ++k) {
        row(k) = pw;
        pw *= lam;
      }
      return row;
    };
    double err = 0.0;
    total += integrate_adaptive(f, 0.0, 1.0, dim, quad, &err);
    err_acc += err;
  }
  return total;
}

}  // namespace

PeriodData period_matrices(const HyperellipticCurve& curve, const HomologyBasis& basis,
                           const QuadratureSpec& quad) {
  const int g = curve.genus;
  PeriodData pd;
  pd.curve = curve;
  pd.basis = basis;
  pd.ext_moments.resize(g + 3, g);
  pd.A.resize(g, g);
  pd.B.resize(g, g);

  double err_acc = 0.0;
  for (int j = 0; j < g; ++j)
    pd.ext_moments.col(j) = moment_integral(curve, basis.a_cycles[j], g + 3, quad, err_acc);
  pd.A = pd.ext_moments.topRows(g);

  Eigen::MatrixXcd chain_moments(g, g);
  for (int m = 0; m < g; ++m)
    chain_moments.col(m) = moment_integral(curve, basis.chain_loops[m], g, quad, err_acc);
  for (int j = 0; j < g; ++j) {
    Eigen::VectorXcd col = Eigen::VectorXcd::Zero(g);
    for (int m = j; m < g; ++m) col += chain_moments.col(m);
    pd.B.col(j) = col;
  }
  pd.max_quad_error = err_acc;

  if (g > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pd.A);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    pd.cond_A = (smin > 0.0) ? smax / smin : std::numeric_limits<double>::infinity();
    if (!(pd.cond_A < 1e12))
      throw IllConditionedA("a-period matrix condition number exceeds 1e12");
    pd.A_inv = pd.A.fullPivLu().inverse();
    pd.tau = pd.A_inv * pd.B;
    pd.tau_asymmetry = (pd.tau - pd.tau.transpose()).cwiseAbs().maxCoeff();
    pd.tau = 0.5 * (pd.tau + pd.tau.transpose()).eval();
    Eigen::MatrixXd imt = pd.tau.imag();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (imt + imt.transpose()));
    pd.min_im_tau_eig = es.eigenvalues().minCoeff();
  } else {
    pd.cond_A = 1.0;
    pd.A_inv.resize(0, 0);
    pd.tau.resize(0, 0);
  }
  return pd;
}

cplx abelian_integral(const HyperellipticCurve& curve, const CyclePath& path,
                      const Eigen::VectorXcd& poly, const QuadratureSpec& quad) {
  // Refuse paths that graze a branch point: the integrand is not square
  // integrable there and the sheet tags become meaningless.
  for (const PathSegment& seg : path.segments) {
    for (int i = 0; i <= 64; ++i) {
      const cplx p = seg.point(i / 64.0);
      for (cplx bp : curve.branch_points)
        if (std::abs(p - bp) < 10.0 * curve.eps_bp)
          throw PathThroughBranchPoint("integration path passes through a branch point");
    }
  }
  cplx total = 0.0;
  for (const PathSegment& seg : path.segments) {
    auto f = [&](double s) {
      const cplx lam = seg.point(s);
      cplx val = 0.0;
      for (int k = static_cast<int>(poly.size()) - 1; k >= 0; --k) val = val * lam + poly(k);
      return val * seg.velocity(s) / sqrt_P(curve, lam, seg.sheet);
    };
    total += integrate_adaptive_scalar(f, 0.0, 1.0, quad, nullptr);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Regularized integrals to infinity
// ---------------------------------------------------------------------------

namespace {

using RSeries = std::vector<double>;
using CSeries = std::vector<cplx>;

constexpr int kSeriesLen = 32;

RSeries series_mul(const RSeries& a, const RSeries& b) {
  RSeries out(kSeriesLen, 0.0);
  for (int i = 0; i < kSeriesLen; ++i) {
    if (i >= static_cast<int>(a.size())) break;
    for (int k = 0; k + i < kSeriesLen; ++k) {
      if (k >= static_cast<int>(b.size())) break;
      out[i + k] += a[i] * b[k];
    }
  }
  return out;
}

RSeries series_sqrt(const RSeries& w2) {
  RSeries s(kSeriesLen, 0.0);
  s[0] = 1.0;
  for (int n = 1; n < kSeriesLen; ++n) {
    double acc = (n < static_cast<int>(w2.size())) ? w2[n] : 0.0;
    for (int k = 1; k < n; ++k) acc -= s[k] * s[n - k];
    s[n] = 0.5 * acc;
  }
  return s;
}

RSeries series_inv(const RSeries& a) {
  RSeries v(kSeriesLen, 0.0);
  v[0] = 1.0;
  for (int n = 1; n < kSeriesLen; ++n) {
    double acc = 0.0;
    for (int k = 1; k <= n; ++k) acc += a[k] * v[n - k];
    v[n] = -acc;
  }
  return v;
}

// Middle part of the shared infinity path: starts at E on the lower sheet,
// pierces the last cut once, loops over its upper tip, and returns to E on
// the principal sheet.  The two remaining legs run from u = 0 (infinity)
// to u = 1/E along the real axis east of every cut.
struct InfinityPath {
  std::vector<PathSegment> middle;
  double E = 0.0;
};

InfinityPath build_infinity_path(const HyperellipticCurve& curve) {
  const BranchCut& last = curve.cuts.back();
  const double c = last.abscissa(), h = last.height();
  double clearance = h;
  if (curve.genus > 0)
    clearance = std::min(clearance, foreign_clearance(curve, curve.genus));
  const double rho = 0.25 * clearance;

  InfinityPath path;
  path.E = std::max(c + 0.5 * (curve.diameter + h), 0.1 * curve.diameter);

  const cplx E_pt(path.E, 0.0), X(c, 0.0), W(c - rho, 0.0);
  const cplx T1(c - rho, h + rho), T2(c + rho, h + rho), Es(c + rho, 0.0);
  path.middle.push_back(line_seg(E_pt, X, -1));
  path.middle.push_back(line_seg(X, W, +1));
  path.middle.push_back(line_seg(W, T1, +1));
  path.middle.push_back(line_seg(T1, T2, +1));
  path.middle.push_back(line_seg(T2, Es, +1));
  path.middle.push_back(line_seg(Es, E_pt, +1));
  return path;
}

// w(1/u) u^{g+1} on the positive real axis east of all cuts: a smooth,
// strictly positive function of u in (0, 1/E].
double w_hat(const HyperellipticCurve& curve, double u) {
  double out = 1.0;
  for (const BranchCut& cut : curve.cuts) {
    const double a = 1.0 - cut.abscissa() * u;
    const double b = cut.height() * u;
    out *= std::sqrt(a * a + b * b);
  }
  return out;
}

}  // namespace

InfinityIntegrals infinity_integrals(const PeriodData& periods, const QuadratureSpec& quad) {
  const HyperellipticCurve& curve = periods.curve;
  const int g = curve.genus;
  const int m = g + 3;

  double s1 = 0.0;
  for (const BranchCut& cut : curve.cuts) s1 += cut.abscissa();

  // Series of 1/w_hat(u) about u = 0 (even part of the curve at infinity).
  RSeries W2(1);
  W2[0] = 1.0;
  for (const BranchCut& cut : curve.cuts) {
    const double c = cut.abscissa(), h = cut.height();
    W2 = series_mul(W2, RSeries{1.0, -2.0 * c, c * c + h * h});
  }
  const RSeries vser = series_inv(series_sqrt(W2));
  if (std::abs(vser[1] - s1) > 1e-9 * (1.0 + std::abs(s1)))
    throw DivergentWithoutRegularization("series normalization of the curve at infinity failed");
  const double d2 = s1 * s1 - vser[2];

  // Differentials, ascending powers of lambda.  The holomorphic vector dV is
  // read off the inverse a-period matrix; the second/third-kind polynomials
  // get their lower coefficients from the a-normalization conditions
  // A^T q = rhs, solved with the already-computed inverse.
  std::vector<Eigen::VectorXcd> polys;
  for (int j = 0; j < g; ++j) {
    Eigen::VectorXcd dv = Eigen::VectorXcd::Zero(std::max(g, 1));
    for (int p = 0; p < g; ++p) dv(p) = periods.A_inv(j, p);
    polys.push_back(dv);
  }
  {
    const Eigen::MatrixXcd& ext = periods.ext_moments;
    Eigen::VectorXcd q = Eigen::VectorXcd::Zero(g), qt = Eigen::VectorXcd::Zero(g),
                     r = Eigen::VectorXcd::Zero(g);
    if (g > 0) {
      Eigen::VectorXcd rhs_p(g), rhs_e(g), rhs_o(g);
      for (int j = 0; j < g; ++j) {
        rhs_p(j) = -(ext(g + 1, j) - s1 * ext(g, j));
        rhs_e(j) = -(ext(g + 2, j) - s1 * ext(g + 1, j) + d2 * ext(g, j));
        rhs_o(j) = -ext(g, j);
      }
      const Eigen::MatrixXcd At_inv = periods.A_inv.transpose();
      q = At_inv * rhs_p;
      qt = At_inv * rhs_e;
      r = At_inv * rhs_o;
    }
    Eigen::VectorXcd dp = Eigen::VectorXcd::Zero(g + 2);
    for (int p = 0; p < g; ++p) dp(p) = q(p);
    dp(g) += -s1;
    dp(g + 1) = 1.0;
    polys.push_back(dp);

    Eigen::VectorXcd dE = Eigen::VectorXcd::Zero(g + 3);
    for (int p = 0; p < g; ++p) dE(p) = 4.0 * qt(p);
    dE(g) += 4.0 * d2;
    dE(g + 1) += -4.0 * s1;
    dE(g + 2) = 4.0;
    polys.push_back(dE);

    Eigen::VectorXcd dOm = Eigen::VectorXcd::Zero(g + 1);
    for (int p = 0; p < g; ++p) dOm(p) = r(p);
    dOm(g) = 1.0;
    polys.push_back(dOm);
  }

  // Formal pole orders sigma = deg - g + 1 of the u-leg integrand u^{-sigma} T(u):
  // dV -> 0 (or below), dp -> 2, dE -> 3, dOm -> 1 (log).
  std::vector<int> sigma(m, 0);
  for (int i = 0; i < g; ++i) sigma[i] = 0;
  sigma[g] = 2;
  sigma[g + 1] = 3;
  sigma[g + 2] = 1;

  const InfinityPath ipath = build_infinity_path(curve);
  const double u_E = 1.0 / ipath.E;

  double max_abs_e = 0.0;
  for (cplx bp : curve.branch_points) max_abs_e = std::max(max_abs_e, std::abs(bp));
  const double u_cut = std::min(max_abs_e > 0.0 ? 0.25 / max_abs_e : u_E, u_E);

  // Taylor coefficients T_i of T(u) = P(1/u) u^deg / w_hat(u) for each
  // differential, with the analytically-zero residue coefficients checked
  // and then zeroed so the subtracted tails are exact.
  std::vector<CSeries> T(m, CSeries(kSeriesLen, cplx(0.0, 0.0)));
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXcd& pc = polys[i];
    const int deg = static_cast<int>(pc.size()) - 1;
    CSeries ptilde(deg + 1);
    for (int k = 0; k <= deg; ++k) ptilde[k] = pc(deg - k);
    for (int a = 0; a <= deg && a < kSeriesLen; ++a)
      for (int b = 0; a + b < kSeriesLen; ++b) T[i][a + b] += ptilde[a] * vser[b];

    const double lead = std::abs(T[i][0]);
    for (int k = 1; k < sigma[i]; ++k) {
      if (std::abs(T[i][k]) > 1e-8 * std::max(1.0, lead))
        throw DivergentWithoutRegularization(
            "residue of a second-kind differential at infinity does not vanish");
      T[i][k] = 0.0;
    }
  }

  // Two u-legs (one per sheet, both traversed away from the cut structure)
  // contribute twice the regularized integral from 0 to u_E.
  Eigen::VectorXcd total = Eigen::VectorXcd::Zero(m);
  for (int i = 0; i < m; ++i) {
    const int sg = sigma[i];
    cplx reg = 0.0;
    for (int k = 0; k <= sg - 1; ++k) {
      if (k == sg - 1)
        reg += T[i][k] * std::log(u_E);
      else
        reg += T[i][k] * std::pow(u_E, k - sg + 1) / static_cast<double>(k - sg + 1);
    }
    cplx smooth = 0.0;
    for (int k = std::max(sg, 0); k < kSeriesLen; ++k)
      smooth += T[i][k] * std::pow(u_cut, k - sg + 1) / static_cast<double>(k - sg + 1);
    total(i) += 2.0 * (reg + smooth);
  }
  if (u_cut < u_E) {
    auto f = [&](double u) {
      const double wh = w_hat(curve, u);
      Eigen::VectorXcd row(m);
      for (int i = 0; i < m; ++i) {
        const Eigen::VectorXcd& pc = polys[i];
        const int deg = static_cast<int>(pc.size()) - 1;
        cplx pt = 0.0;
        for (int a = 0; a <= deg; ++a) pt = pt * u + pc(a);  // sum pc[deg-k] u^k
        cplx sub = 0.0;
        for (int k = 0; k < sigma[i]; ++k) sub += T[i][k] * std::pow(u, k);
        row(i) = (pt / wh - sub) * std::pow(u, -sigma[i]);
      }
      return row;
    };
    double err = 0.0;
    total += 2.0 * integrate_adaptive(f, u_cut, u_E, m, quad, &err);
  }

  // Middle legs: plain vector quadrature with sheet tracking.
  for (const PathSegment& seg : ipath.middle) {
    auto f = [&](double s) {
      const cplx lam = seg.point(s);
      const cplx w = sqrt_P(curve, lam, seg.sheet);
      const cplx dl = seg.velocity(s);
      Eigen::VectorXcd row(m);
      for (int i = 0; i < m; ++i) {
        const Eigen::VectorXcd& pc = polys[i];
        cplx val = 0.0;
        for (int k = static_cast<int>(pc.size()) - 1; k >= 0; --k) val = val * lam + pc(k);
        row(i) = val * dl / w;
      }
      return row;
    };
    double err = 0.0;
    total += integrate_adaptive(f, 0.0, 1.0, m, quad, &err);
  }

  InfinityIntegrals out;
  out.delta = total.head(g);
  out.I_p = total(g);
  out.I_E = total(g + 1);
  out.I_Omega = total(g + 2);
  return out;
}

}  // namespace fgnls

#pragma once

// Reference values for coplanar triangle-pair integrals, computed in relative
// coordinates z = x - y:
//   J = int_0^{2pi} int_0^inf F(rho) / (4 pi) A(rho e_theta) drho dtheta,
//   A(z) = int_{Tx cap (Ty + z)} phi_i(x) phi_j(x - z) dx.
// A is evaluated by exact polygon clipping, so for fixed theta the rho
// integrand is a polynomial between topology changes and Gauss is exact there.
// The theta integral is adaptive. Nothing here shares code with the
// production polar/fan quadrature.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "tdbem/gauss.hpp"
#include "tdbem/mesh.hpp"
#include "tdbem/quadrature.hpp"
#include "tdbem/space_basis.hpp"

namespace oracle {

using V2 = Eigen::Vector2d;
using Polygon = std::vector<V2>;

inline double cross2(const V2& a, const V2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Sutherland-Hodgman clip of a polygon by a counter-clockwise convex polygon.
inline Polygon clip(const Polygon& subject, const Polygon& window) {
  Polygon out = subject;
  for (std::size_t e = 0; e < window.size() && !out.empty(); ++e) {
    const V2 a = window[e], b = window[(e + 1) % window.size()];
    auto inside = [&](const V2& p) { return cross2(b - a, p - a) >= 0.0; };
    Polygon in = out;
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const V2 p = in[i], q = in[(i + 1) % in.size()];
      const bool ip = inside(p), iq = inside(q);
      if (ip) out.push_back(p);
      if (ip != iq) {
        const double dp = cross2(b - a, p - a), dq = cross2(b - a, q - a);
        out.push_back(p + (q - p) * (dp / (dp - dq)));
      }
    }
  }
  return out;
}

struct CoplanarPair {
  std::array<V2, 3> x, y;  // counter-clockwise in a common plane frame
  tdbem::ReferenceBasis bx, by;
  int i, j;
  Eigen::Matrix2d to_ref_x, to_ref_y;
  tdbem::TriangleRule tri;

  CoplanarPair(const std::array<tdbem::Point3, 3>& tx, const std::array<tdbem::Point3, 3>& ty, int qx, int qy,
               int i_, int j_)
      : bx(qx), by(qy), i(i_), j(j_) {
    const tdbem::Point3 n = (tx[1] - tx[0]).cross(tx[2] - tx[0]).normalized();
    const tdbem::Point3 e1 = (tx[1] - tx[0]).normalized(), e2 = n.cross(e1);
    auto proj = [&](const tdbem::Point3& p) { return V2((p - tx[0]).dot(e1), (p - tx[0]).dot(e2)); };
    for (int k = 0; k < 3; ++k) {
      x[k] = proj(tx[k]);
      y[k] = proj(ty[k]);
    }
    auto inv = [](const std::array<V2, 3>& t) {
      Eigen::Matrix2d J;
      J.col(0) = t[1] - t[0];
      J.col(1) = t[2] - t[0];
      return Eigen::Matrix2d(J.inverse());
    };
    to_ref_x = inv(x);
    to_ref_y = inv(y);
    tri = tdbem::triangle_rule((qx + qy) / 2 + 2);
  }

  static Polygon ccw(const std::array<V2, 3>& t) {
    Polygon p(t.begin(), t.end());
    if (cross2(p[1] - p[0], p[2] - p[0]) < 0.0) std::swap(p[1], p[2]);
    return p;
  }

  double overlap(const V2& z) const {
    Polygon ys = ccw(y);
    for (auto& p : ys) p += z;
    const Polygon poly = clip(ccw(x), ys);
    if (poly.size() < 3) return 0.0;
    std::vector<double> vx(bx.size()), vy(by.size());
    double sum = 0.0;
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      const V2 a = poly[0], b = poly[k], c = poly[k + 1];
      const double area2 = std::abs(cross2(b - a, c - a));
      for (int q = 0; q < tri.size(); ++q) {
        const V2 p = a + tri.u[q] * (b - a) + tri.v[q] * (c - a);
        const V2 ux = to_ref_x * (p - x[0]);
        const V2 uy = to_ref_y * (p - z - y[0]);
        bx.eval(ux.x(), ux.y(), vx);
        by.eval(uy.x(), uy.y(), vy);
        sum += tri.w[q] * area2 * vx[i] * vy[j];
      }
    }
    return sum;
  }

  // rho values where the clipped polygon changes topology along direction e
  void breakpoints(const V2& e, std::vector<double>& out) const {
    for (int a = 0; a < 3; ++a) {
      const V2 dx = x[(a + 1) % 3] - x[a], dy = y[(a + 1) % 3] - y[a];
      for (int b = 0; b < 3; ++b) {
        const double cx = cross2(dx, e);
        if (std::abs(cx) > 1e-14) out.push_back(cross2(dx, x[a] - y[b]) / cx);
        const double cy = cross2(dy, e);
        if (std::abs(cy) > 1e-14) out.push_back(cross2(dy, x[b] - y[a]) / cy);
      }
    }
  }

  double theta_integrand(double theta, const tdbem::RadialFunction& F) const {
    const V2 e(std::cos(theta), std::sin(theta));
    double rmax = 0.0;
    for (const auto& a : x)
      for (const auto& b : y) rmax = std::max(rmax, (a - b).norm());
    std::vector<double> cuts{0.0, rmax};
    breakpoints(e, cuts);
    for (int k = F.first; k <= F.last() + 1; ++k) cuts.push_back(k * F.width);
    std::sort(cuts.begin(), cuts.end());
    const int deg = bx.degree() + by.degree() + 2 + F.max_degree();
    const auto& g = tdbem::gauss_legendre(deg / 2 + 2);
    double sum = 0.0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double lo = std::max(0.0, cuts[c]), hi = std::min(rmax, cuts[c + 1]);
      if (hi - lo < 1e-15) continue;
      for (int q = 0; q < g.size(); ++q) {
        const double rho = lo + (hi - lo) * g.nodes[q];
        const double f = F(rho);
        if (f == 0.0) continue;
        sum += g.weights[q] * (hi - lo) * f * overlap(rho * e);
      }
    }
    return sum / (4.0 * std::numbers::pi);
  }

  // critical directions: vertex differences and edge directions
  std::vector<double> critical_angles() const {
    std::vector<double> out{0.0, 2.0 * std::numbers::pi};
    auto add = [&](const V2& d) {
      if (d.norm() < 1e-14) return;
      double a = std::atan2(d.y(), d.x());
      for (double s : {a, a + std::numbers::pi}) {
        double t = std::fmod(s + 4.0 * std::numbers::pi, 2.0 * std::numbers::pi);
        out.push_back(t);
      }
    };
    for (const auto& a : x)
      for (const auto& b : y) add(a - b);
    for (int k = 0; k < 3; ++k) {
      add(x[(k + 1) % 3] - x[k]);
      add(y[(k + 1) % 3] - y[k]);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(), [](double a, double b) { return b - a < 1e-13; }), out.end());
    return out;
  }
};

inline double adaptive(const std::function<double(double)>& f, double a, double b, double tol, int depth,
                       double whole) {
  const auto& g = tdbem::gauss_legendre(10);
  auto gauss = [&](double lo, double hi) {
    double s = 0.0;
    for (int q = 0; q < g.size(); ++q) s += g.weights[q] * f(lo + (hi - lo) * g.nodes[q]);
    return s * (hi - lo);
  };
  const double m = 0.5 * (a + b);
  const double left = gauss(a, m), right = gauss(m, b);
  if (depth <= 0 || std::abs(left + right - whole) <= tol) return left + right;
  return adaptive(f, a, m, 0.5 * tol, depth - 1, left) + adaptive(f, m, b, 0.5 * tol, depth - 1, right);
}

/// Reference value of int_Tx int_Ty phi_i phi_j F(r) / (4 pi r) for coplanar triangles.
inline double coplanar_pair_integral(const std::array<tdbem::Point3, 3>& tx, const std::array<tdbem::Point3, 3>& ty,
                                     int qx, int i, int qy, int j, const tdbem::RadialFunction& F,
                                     double tol = 1e-12) {
  const CoplanarPair P(tx, ty, qx, qy, i, j);
  const auto angles = P.critical_angles();
  auto f = [&](double th) { return P.theta_integrand(th, F); };
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < angles.size(); ++k) {
    const double a = angles[k], b = angles[k + 1];
    if (b - a < 1e-14) continue;
    const auto& g = tdbem::gauss_legendre(10);
    double whole = 0.0;
    for (int q = 0; q < g.size(); ++q) whole += g.weights[q] * f(a + (b - a) * g.nodes[q]);
    total += adaptive(f, a, b, tol, 12, whole * (b - a));
  }
  return total;
}

/// Plain tensor-product Gauss over both triangles (only meaningful for
/// well-separated pairs and smooth F).
inline double tensor_pair_integral(const std::array<tdbem::Point3, 3>& tx, const std::array<tdbem::Point3, 3>& ty,
                                   int qx, int i, int qy, int j, const std::function<double(double)>& F, int n) {
  const auto rule = tdbem::triangle_rule(n);
  const tdbem::ReferenceBasis bx(qx), by(qy);
  const double ax = (tx[1] - tx[0]).cross(tx[2] - tx[0]).norm(), ay = (ty[1] - ty[0]).cross(ty[2] - ty[0]).norm();
  double sum = 0.0;
  for (int a = 0; a < rule.size(); ++a) {
    const auto px = tx[0] + rule.u[a] * (tx[1] - tx[0]) + rule.v[a] * (tx[2] - tx[0]);
    const double fx = bx.eval(rule.u[a], rule.v[a])[i] * rule.w[a] * ax;
    for (int b = 0; b < rule.size(); ++b) {
      const auto py = ty[0] + rule.u[b] * (ty[1] - ty[0]) + rule.v[b] * (ty[2] - ty[0]);
      const double r = (px - py).norm();
      sum += fx * by.eval(rule.u[b], rule.v[b])[j] * rule.w[b] * ay * F(r) / (4.0 * std::numbers::pi * r);
    }
  }
  return sum;
}

}  // namespace oracle

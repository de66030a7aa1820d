#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tdbem/error.hpp"
#include "tdbem/gauss.hpp"
#include "tdbem/mesh.hpp"
#include "tdbem/space_basis.hpp"

namespace tdbem {

/// Accuracy controls for triangle-pair and right-hand-side integration.
struct QuadratureSpec {
  double tol = 1e-4;      ///< bound on the estimated error of the coarser of the two compared levels
  int max_depth = 4;      ///< highest refinement level tried
  int base_order = 8;     ///< Gauss points per direction at level 0
  int start_level = 0;    ///< first level compared against the next one
  bool estimate = true;   ///< compare two levels; if false, use start_level as is
  int kink_levels = 8;    ///< geometric grading levels toward time kinks (rhs)
  double near_field = 1.0;  ///< separated pairs closer than this times the triangle size get a split outer rule
  bool cone_splits = true;  ///< split the inner rule at the light-cone circles (off only for regression checks)
};

enum class PairClass { coincident, edge_adjacent, vertex_adjacent, separated };

inline const char* to_string(PairClass c) {
  switch (c) {
    case PairClass::coincident: return "coincident";
    case PairClass::edge_adjacent: return "edge-adjacent";
    case PairClass::vertex_adjacent: return "vertex-adjacent";
    case PairClass::separated: return "separated";
  }
  return "?";
}

/// Relation of two triangles, with the shared vertices in the local numbering
/// of each triangle (shared_x[s] corresponds to shared_y[s]).
struct PairGeometry {
  PairClass kind = PairClass::separated;
  int n_shared = 0;
  std::array<int, 3> shared_x{-1, -1, -1};
  std::array<int, 3> shared_y{-1, -1, -1};
};

inline PairGeometry classify_pair(const TriangleIndices& tx, const TriangleIndices& ty) {
  PairGeometry g;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (tx[a] == ty[b]) {
        g.shared_x[g.n_shared] = a;
        g.shared_y[g.n_shared] = b;
        ++g.n_shared;
      }
  static constexpr PairClass kinds[] = {PairClass::separated, PairClass::vertex_adjacent,
                                        PairClass::edge_adjacent, PairClass::coincident};
  g.kind = kinds[g.n_shared];
  return g;
}

/// Same classification from coordinates (vertices coincide when bitwise equal
/// up to a relative 1e-12).
inline PairGeometry classify_pair(const std::array<Point3, 3>& tx, const std::array<Point3, 3>& ty) {
  double scale = 0.0;
  for (const auto& p : tx) scale = std::max(scale, p.norm());
  for (const auto& p : ty) scale = std::max(scale, p.norm());
  TriangleIndices ix{0, 1, 2}, iy{-1, -1, -1};
  int next = 3;
  for (int b = 0; b < 3; ++b) {
    for (int a = 0; a < 3; ++a)
      if ((tx[a] - ty[b]).norm() <= 1e-12 * std::max(scale, 1.0)) iy[b] = a;
    if (iy[b] < 0) iy[b] = next++;
  }
  return classify_pair(ix, iy);
}

/// Piecewise polynomial in r with uniform breakpoints r_k = k * width.
/// pieces[i] holds the ascending coefficients in x = r/width - (first + i) on
/// [first + i, first + i + 1) * width; zero elsewhere.
struct RadialFunction {
  double width = 1.0;
  int first = 0;
  std::vector<std::vector<double>> pieces;

  int last() const { return first + static_cast<int>(pieces.size()) - 1; }
  int max_degree() const {
    int d = 0;
    for (const auto& p : pieces) d = std::max(d, static_cast<int>(p.size()) - 1);
    return d;
  }
  double operator()(double r) const {
    const int k = static_cast<int>(std::floor(r / width));
    if (k < first || k > last()) return 0.0;
    const double x = r / width - k;
    const auto& c = pieces[k - first];
    double v = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
    return v;
  }
  static RadialFunction constant(double value, double extent) {
    return RadialFunction{extent, 0, {{value}}};
  }
};

/// Radial moments of a triangle pair:
///   M[k][i][j][m] = int_Tx int_Ty phi_i(x) phi_j(y) s^m chi_k(r) / (4 pi r) dy dx,
/// with r = |x - y|, s = r/width - k and chi_k the indicator of [k, k+1) * width.
/// Any radial function that is polynomial on these intervals integrates
/// against the pair by contracting these moments.
struct RadialMoments {
  double width = 1.0;
  int k_lo = 0, k_hi = -1;
  int degree = 0;
  int nx = 0, ny = 0;
  std::vector<double> data;

  int n_intervals() const { return k_hi - k_lo + 1; }
  std::size_t index(int k, int i, int j, int m) const {
    return ((static_cast<std::size_t>(k - k_lo) * nx + i) * ny + j) * (degree + 1) + m;
  }
  double at(int k, int i, int j, int m) const { return data[index(k, i, j, m)]; }
  bool empty() const { return k_hi < k_lo; }

  /// Integral of phi_i(x) phi_j(y) f(r) / (4 pi r) for a radial function f.
  double contract(const RadialFunction& f, int i, int j) const {
    double sum = 0.0;
    for (int k = std::max(k_lo, f.first); k <= std::min(k_hi, f.last()); ++k) {
      const auto& c = f.pieces[k - f.first];
      for (int m = 0; m < std::min<int>(c.size(), degree + 1); ++m) sum += c[m] * at(k, i, j, m);
    }
    return sum;
  }
};

namespace detail {

// Rule sizes used at one refinement level. The outer rule is composite:
// `pieces` uniform cells per fan direction, plus `geometric` cells graded
// toward singular edges and vertices, each with an `outer`-point Gauss rule.
struct LevelOrders {
  int outer, pieces, geometric, t_geometric, angular, radial_coplanar, radial_general;
  int layer_drop = 1;  // order decrease per geometric layer toward the singularity
  double z_ratio = 4.0;  // geometric ratio of the radial cells near rho = 0 when off-plane
};

inline LevelOrders level_orders(const QuadratureSpec& spec, int level, int qx, int qy, int degree) {
  const int exact = (qy + degree) / 2 + 1;
  LevelOrders o;
  // each level raises the order by two and halves the cells, so the estimate
  // sees both the smooth part and the cone kinks inside the cells
  o.outer = std::max(3, spec.base_order / 2) + (qx + qy + degree) / 4 + 2 * level;
  o.pieces = 2 << level;
  o.geometric = 4 + level;
  o.t_geometric = 4 + level;
  o.angular = spec.base_order + level + (qy + degree) / 4;
  o.radial_coplanar = exact;
  o.radial_general = std::max(exact, spec.base_order) + level;
  return o;
}

inline constexpr double kGeometricRatio = 0.15;

// Cells of [0, 1] with their Gauss orders: uniform cells of order n, plus
// geometric layers toward 0 and/or 1 whose order drops by one per layer
// toward the singular end (hp grading).
struct GradedCells {
  std::vector<double> breaks;
  std::vector<int> orders;
};

// Layer k counted from the singular end (k = 0 smallest) gets order
// max(2, n - drop * (geometric - k)).
inline GradedCells graded_cells(int pieces, int geometric, bool at0, bool at1, int n, int drop) {
  GradedCells g;
  const double u = 1.0 / pieces;
  auto layer_order = [&](int k) { return std::max(2, n - drop * (geometric - k)); };
  auto push = [&](double right, int order) {
    g.breaks.push_back(right);
    g.orders.push_back(order);
  };
  g.breaks.push_back(0.0);
  if (at0)
    for (int k = 0; k < geometric; ++k) push(u * std::pow(kGeometricRatio, geometric - k), layer_order(k));
  for (int j = 1; j < pieces; ++j) push(j * u, n);
  if (at1) {
    push(1.0 - u * kGeometricRatio, n);
    for (int k = geometric - 1; k >= 1; --k) push(1.0 - u * std::pow(kGeometricRatio, geometric - k + 1), layer_order(k));
    push(1.0, layer_order(0));
  } else {
    push(1.0, n);
  }
  if (at1 && geometric == 0) {  // nothing graded: drop the duplicate break
    g.breaks.erase(g.breaks.end() - 2);
    g.orders.erase(g.orders.end() - 2);
  }
  return g;
}

struct OuterPoint {
  Point3 x;
  double u, v;  // reference coordinates in Tx
  double w;     // physical weight
};

// Fan parametrisation in reference coordinates of Tx:
//   (u, v) = A + lambda (P0 + t (P1 - P0) - A),  Jacobian lambda |det(P0 - A, P1 - P0)|
// Each tensor cell uses the smaller of its two one-dimensional orders.
inline void append_fan(const std::array<Point3, 3>& tx, Eigen::Vector2d A, Eigen::Vector2d P0,
                       Eigen::Vector2d P1, const GradedCells& lam, const GradedCells& tc,
                       std::vector<OuterPoint>& out) {
  const double area2 = (tx[1] - tx[0]).cross(tx[2] - tx[0]).norm();
  const Eigen::Vector2d e = P1 - P0, b = P0 - A;
  const double det = std::abs(b.x() * e.y() - b.y() * e.x());
  for (std::size_t i = 0; i + 1 < lam.breaks.size(); ++i) {
    const double l0 = lam.breaks[i], dl = lam.breaks[i + 1] - l0;
    for (std::size_t j = 0; j + 1 < tc.breaks.size(); ++j) {
      const double t0 = tc.breaks[j], dt = tc.breaks[j + 1] - t0;
      const auto& g = gauss_legendre(std::min(lam.orders[i], tc.orders[j]));
      for (int a = 0; a < g.size(); ++a) {
        const double lambda = l0 + dl * g.nodes[a];
        for (int c = 0; c < g.size(); ++c) {
          const double t = t0 + dt * g.nodes[c];
          const Eigen::Vector2d uv = A + lambda * (b + t * e);
          OuterPoint p;
          p.u = uv.x();
          p.v = uv.y();
          p.x = tx[0] + p.u * (tx[1] - tx[0]) + p.v * (tx[2] - tx[0]);
          p.w = g.weights[a] * g.weights[c] * dl * dt * lambda * det * area2;
          out.push_back(p);
        }
      }
    }
  }
}

inline std::vector<OuterPoint> outer_points(const std::array<Point3, 3>& tx, const PairGeometry& pair,
                                            const LevelOrders& ord, bool near = false) {
  const Eigen::Vector2d V[3] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  const int m = ord.pieces, n = ord.outer, d = ord.layer_drop;
  const auto lam_edge = [&] { return graded_cells(m, ord.geometric, false, true, n, d); };
  const auto t_both = [&] { return graded_cells(m, ord.t_geometric, true, true, n, d); };
  std::vector<OuterPoint> pts;
  switch (pair.kind) {
    case PairClass::coincident: {
      const Eigen::Vector2d c(1.0 / 3.0, 1.0 / 3.0);
      const auto lam = lam_edge(), t = t_both();
      for (int e = 0; e < 3; ++e) append_fan(tx, c, V[e], V[(e + 1) % 3], lam, t, pts);
      break;
    }
    case PairClass::edge_adjacent: {
      const int a = pair.shared_x[0], b = pair.shared_x[1];
      append_fan(tx, V[3 - a - b], V[a], V[b], lam_edge(), t_both(), pts);
      break;
    }
    case PairClass::vertex_adjacent: {
      const int s = pair.shared_x[0];
      append_fan(tx, V[s], V[(s + 1) % 3], V[(s + 2) % 3], graded_cells(m, ord.geometric, true, false, n, d),
                 graded_cells(m, 0, false, false, n, d), pts);
      break;
    }
    case PairClass::separated: {
      const auto u = graded_cells(near ? 2 * m : m, 0, false, false, n, d);
      append_fan(tx, V[0], V[1], V[2], u, u, pts);
      break;
    }
  }
  return pts;
}

// Frame of the target triangle Ty used by the polar inner integration.
struct TargetFrame {
  Point3 origin, e1, e2, normal;
  std::array<Eigen::Vector2d, 3> vert;  // in-plane coordinates, counter-clockwise
  Eigen::Matrix2d to_ref;               // plane coords (relative to vert[0]) -> (u, v)
  double size = 0.0;

  explicit TargetFrame(const std::array<Point3, 3>& ty) {
    origin = ty[0];
    const Point3 n = (ty[1] - ty[0]).cross(ty[2] - ty[0]);
    normal = n.normalized();
    e1 = (ty[1] - ty[0]).normalized();
    e2 = normal.cross(e1);
    for (int i = 0; i < 3; ++i) vert[i] = {(ty[i] - origin).dot(e1), (ty[i] - origin).dot(e2)};
    Eigen::Matrix2d J;
    J.col(0) = vert[1] - vert[0];
    J.col(1) = vert[2] - vert[0];
    to_ref = J.inverse();
    size = std::max({(ty[1] - ty[0]).norm(), (ty[2] - ty[1]).norm(), (ty[0] - ty[2]).norm()});
  }
};

// Scratch buffers for one inner integration.
struct InnerWork {
  std::vector<double> H;  // [k][j][m]
  std::vector<char> touched;
  std::vector<double> cuts, rcuts, vals, spow;
};

// H[k][j][m] = int_Ty phi_j(y) s^m chi_k(r) / r dy for a fixed outer point x,
// by signed polar decomposition around the projection of x onto the plane of Ty.
inline void inner_moments(const Point3& x, const TargetFrame& F, const ReferenceBasis& basis_y, double width,
                          int k_lo, int k_hi, int degree, const LevelOrders& ord, InnerWork& W,
                          bool cone_splits = true) {
  const int ny = basis_y.size();
  const int nm = degree + 1;
  const int nk = k_hi - k_lo + 1;
  W.H.assign(static_cast<std::size_t>(nk) * ny * nm, 0.0);
  W.touched.assign(nk, 0);
  W.vals.resize(ny);
  W.spow.resize(nm);

  const Point3 rel = x - F.origin;
  double z = std::abs(rel.dot(F.normal));
  if (z < 1e-13 * F.size) z = 0.0;
  const Eigen::Vector2d xp(rel.dot(F.e1), rel.dot(F.e2));

  const double r_lo = k_lo * width, r_hi = (k_hi + 1) * width;
  if (r_hi <= z) return;
  auto rho_of = [z](double r) { return r <= z ? 0.0 : std::sqrt((r - z) * (r + z)); };
  const double rho_lo = rho_of(r_lo), rho_hi = rho_of(r_hi);

  // radial breakpoints in rho (light-cone circles in the plane of Ty)
  W.rcuts.clear();
  for (int k = k_lo + 1; k <= k_hi && cone_splits; ++k) {
    const double r = k * width;
    if (r > z) W.rcuts.push_back(rho_of(r));
  }
  if (z > 0.0)
    for (double g = z; g < rho_hi; g *= ord.z_ratio) W.rcuts.push_back(g);
  std::sort(W.rcuts.begin(), W.rcuts.end());

  const Rule1D& gw = gauss_legendre(ord.angular);
  const Rule1D& gr = gauss_legendre(z > 0.0 ? ord.radial_general : ord.radial_coplanar);

  for (int e = 0; e < 3; ++e) {
    const Eigen::Vector2d P = F.vert[e], Q = F.vert[(e + 1) % 3];
    const Eigen::Vector2d a = P - xp, b = Q - xp;
    const double cross = a.x() * b.y() - a.y() * b.x();
    const double L = (Q - P).norm();
    const double d = std::abs(cross) / L;
    if (d <= 1e-13 * F.size) continue;
    const double sign = cross > 0.0 ? 1.0 : -1.0;
    const Eigen::Vector2d epar = (Q - P) / L;
    const Eigen::Vector2d foot = P + (xp - P).dot(epar) * epar;
    const Eigen::Vector2d eperp = (foot - xp) / d;
    const double wa = std::asinh((P - foot).dot(epar) / d);
    const double wb = std::asinh((Q - foot).dot(epar) / d);

    // angular breakpoints: foot, geometric grading along the edge, light-cone crossings
    W.cuts.assign({wa, wb});
    auto add = [&](double w) {
      if (w > wa && w < wb) W.cuts.push_back(w);
    };
    add(0.0);
    const double wmax = std::max(std::abs(wa), std::abs(wb));
    for (double s = 1.0; std::asinh(s) < wmax; s *= 2.0) {
      add(std::asinh(s));
      add(-std::asinh(s));
    }
    auto add_circle = [&](double rho) {
      if (rho > d) {
        const double w = std::acosh(rho / d);
        add(w);
        add(-w);
      }
    };
    for (double rho : W.rcuts) add_circle(rho);
    if (cone_splits) {
      if (rho_lo > 0.0) add_circle(rho_lo);
      add_circle(rho_hi);
    }
    std::sort(W.cuts.begin(), W.cuts.end());

    for (std::size_t c = 0; c + 1 < W.cuts.size(); ++c) {
      const double w0 = W.cuts[c], w1 = W.cuts[c + 1];
      if (w1 - w0 < 1e-14) continue;
      for (int qa = 0; qa < gw.size(); ++qa) {
        const double w = w0 + (w1 - w0) * gw.nodes[qa];
        const double ch = std::cosh(w), sh = std::sinh(w);
        const Eigen::Vector2d dir = (eperp + sh * epar) / ch;
        const double R = d * ch;
        const double wang = sign * gw.weights[qa] * (w1 - w0) / ch;
        const double lo = rho_lo, hi = std::min(R, rho_hi);
        if (hi <= lo) continue;
        // radial pieces between lo and hi
        double prev = lo;
        auto it = std::upper_bound(W.rcuts.begin(), W.rcuts.end(), lo);
        while (prev < hi) {
          double next = hi;
          if (it != W.rcuts.end() && *it < hi) next = *it++;
          if (next - prev > 1e-15 * width) {
            const double rmid = std::sqrt(0.25 * (prev + next) * (prev + next) + z * z);
            const int kmid = std::clamp(static_cast<int>(std::floor(rmid / width)), k_lo, k_hi);
            for (int qr = 0; qr < gr.size(); ++qr) {
              const double rho = prev + (next - prev) * gr.nodes[qr];
              const double r = z > 0.0 ? std::sqrt(rho * rho + z * z) : rho;
              int k = kmid;
              if (!cone_splits) {
                k = static_cast<int>(std::floor(r / width));
                if (k < k_lo || k > k_hi) continue;
              }
              double* Hk = W.H.data() + static_cast<std::size_t>(k - k_lo) * ny * nm;
              W.touched[k - k_lo] = 1;
              const double wt = wang * gr.weights[qr] * (next - prev) * (z > 0.0 ? rho / r : 1.0);
              const Eigen::Vector2d y = xp + rho * dir - F.vert[0];
              const Eigen::Vector2d uv = F.to_ref * y;
              basis_y.eval(uv.x(), uv.y(), W.vals);
              const double s = r / width - k;
              double sp = wt;
              for (int m = 0; m < nm; ++m) {
                W.spow[m] = sp;
                sp *= s;
              }
              for (int j = 0; j < ny; ++j) {
                const double vj = W.vals[j];
                double* row = Hk + static_cast<std::size_t>(j) * nm;
                for (int m = 0; m < nm; ++m) row[m] += vj * W.spow[m];
              }
            }
          }
          prev = next;
        }
      }
    }
  }
}

inline double pair_min_distance_bound(const std::array<Point3, 3>& tx, const std::array<Point3, 3>& ty) {
  const Point3 cx = (tx[0] + tx[1] + tx[2]) / 3.0, cy = (ty[0] + ty[1] + ty[2]) / 3.0;
  double rx = 0.0, ry = 0.0;
  for (int i = 0; i < 3; ++i) {
    rx = std::max(rx, (tx[i] - cx).norm());
    ry = std::max(ry, (ty[i] - cy).norm());
  }
  return std::max(0.0, (cx - cy).norm() - rx - ry);
}

inline double pair_max_distance(const std::array<Point3, 3>& tx, const std::array<Point3, 3>& ty) {
  double d = 0.0;
  for (const auto& a : tx)
    for (const auto& b : ty) d = std::max(d, (a - b).norm());
  return d;
}

}  // namespace detail

inline double mesh_scale(const std::array<Point3, 3>& t) {
  return std::max({(t[1] - t[0]).norm(), (t[2] - t[1]).norm(), (t[0] - t[2]).norm()});
}

/// Radial moments of a pair at one refinement level. Intervals outside the
/// pair's distance range stay zero; k_lo/k_hi are the requested range.
inline RadialMoments radial_moments_with(const std::array<Point3, 3>& tx, const std::array<Point3, 3>& ty,
                                         const PairGeometry& pair, const ReferenceBasis& basis_x,
                                         const ReferenceBasis& basis_y, double width, int k_lo, int k_hi, int degree,
                                         const detail::LevelOrders& ord, const QuadratureSpec& spec) {
  RadialMoments M;
  M.width = width;
  M.k_lo = k_lo;
  M.k_hi = k_hi;
  M.degree = degree;
  M.nx = basis_x.size();
  M.ny = basis_y.size();
  M.data.assign(static_cast<std::size_t>(std::max(0, M.n_intervals())) * M.nx * M.ny * (degree + 1), 0.0);
  if (M.empty()) return M;

  // restrict to the intervals the pair can reach
  const double dmin = pair.kind == PairClass::separated ? detail::pair_min_distance_bound(tx, ty) : 0.0;
  const double dmax = detail::pair_max_distance(tx, ty);
  const int lo = std::max(k_lo, static_cast<int>(std::floor(dmin / width)));
  const int hi = std::min(k_hi, static_cast<int>(std::floor(dmax / width)));
  if (hi < lo) return M;

  const bool near = pair.kind == PairClass::separated &&
                    dmin < spec.near_field * std::max(mesh_scale(tx), mesh_scale(ty));
  const auto outer = detail::outer_points(tx, pair, ord, near);
  const detail::TargetFrame frame(ty);
  detail::InnerWork work;
  std::vector<double> px(M.nx);
  const int nm = degree + 1;
  const std::size_t block = static_cast<std::size_t>(M.ny) * nm;
  for (const auto& op : outer) {
    detail::inner_moments(op.x, frame, basis_y, width, lo, hi, degree, ord, work, spec.cone_splits);
    basis_x.eval(op.u, op.v, px);
    for (int k = lo; k <= hi; ++k) {
      if (!work.touched[k - lo]) continue;
      const double* Hk = work.H.data() + static_cast<std::size_t>(k - lo) * block;
      for (int i = 0; i < M.nx; ++i) {
        const double f = op.w * px[i] / (4.0 * std::numbers::pi);
        double* dst = M.data.data() + M.index(k, i, 0, 0);
        for (std::size_t q = 0; q < block; ++q) dst[q] += f * Hk[q];
      }
    }
  }
  return M;
}

inline RadialMoments radial_moments_at_level(const std::array<Point3, 3>& tx, const std::array<Point3, 3>& ty,
                                             const PairGeometry& pair, const ReferenceBasis& basis_x,
                                             const ReferenceBasis& basis_y, double width, int k_lo, int k_hi,
                                             int degree, const QuadratureSpec& spec, int level) {
  return radial_moments_with(tx, ty, pair, basis_x, basis_y, width, k_lo, k_hi, degree,
                             detail::level_orders(spec, level, basis_x.degree(), basis_y.degree(), degree), spec);
}

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

}  // namespace detail

struct MomentResult {
  RadialMoments moments;
  std::vector<double> reduced;  ///< the checked quantities at the accepted level
  double error_estimate = 0.0;  ///< max-norm difference of `reduced` between the two finest levels, relative
  int level = 0;
};

using MomentReduction = std::function<void(const RadialMoments&, std::vector<double>&)>;

/// Adaptive radial moments: raises the level until `reduce` (by default the
/// moments themselves) agrees between two consecutive levels to spec.tol,
/// relative to its largest component. Throws NumericalError when max_depth is
/// hit.
inline MomentResult radial_moments(const std::array<Point3, 3>& tx, const std::array<Point3, 3>& ty,
                                   const PairGeometry& pair, const ReferenceBasis& basis_x,
                                   const ReferenceBasis& basis_y, double width, int k_lo, int k_hi, int degree,
                                   const QuadratureSpec& spec, const MomentReduction& reduce = {}) {
  auto apply = [&](const RadialMoments& M, std::vector<double>& out) {
    if (reduce)
      reduce(M, out);
    else
      out = M.data;
  };
  MomentResult res;
  res.level = spec.start_level;
  res.moments = radial_moments_at_level(tx, ty, pair, basis_x, basis_y, width, k_lo, k_hi, degree, spec, res.level);
  apply(res.moments, res.reduced);
  if (!spec.estimate) return res;
  std::vector<double> next;
  for (int level = spec.start_level + 1; level <= spec.max_depth; ++level) {
    auto finer = radial_moments_at_level(tx, ty, pair, basis_x, basis_y, width, k_lo, k_hi, degree, spec, level);
    apply(finer, next);
    double scale = 0.0, diff = 0.0;
    for (std::size_t q = 0; q < next.size(); ++q) {
      scale = std::max(scale, std::abs(next[q]));
      diff = std::max(diff, std::abs(next[q] - res.reduced[q]));
    }
    res.error_estimate = scale > 0.0 ? diff / scale : 0.0;
    res.moments = std::move(finer);
    std::swap(res.reduced, next);
    res.level = level;
    if (diff <= spec.tol * scale || scale == 0.0) return res;
  }
  throw NumericalError("pair quadrature did not reach tol " + detail::sci(spec.tol) + " (estimate " +
                       detail::sci(res.error_estimate) + ", class " + to_string(pair.kind) + ")");
}

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
};

/// int_Tx int_Ty phi_i(x) phi_j(y) f(|x - y|) / (4 pi |x - y|) dy dx for one
/// pair of local shape functions, with per-entry relative error control.
inline QuadratureResult integrate_pair(const std::array<Point3, 3>& tx, const std::array<Point3, 3>& ty,
                                       const ReferenceBasis& basis_x, int shape_x, const ReferenceBasis& basis_y,
                                       int shape_y, const RadialFunction& f, const QuadratureSpec& spec) {
  const auto pair = classify_pair(tx, ty);
  const int degree = f.max_degree();
  auto value_at = [&](int level) {
    const auto M = radial_moments_at_level(tx, ty, pair, basis_x, basis_y, f.width, f.first, f.last(), degree,
                                           spec, level);
    return M.contract(f, shape_x, shape_y);
  };
  QuadratureResult res;
  res.value = value_at(spec.start_level);
  if (!spec.estimate) return res;
  const double floor = 1e-14 * (std::abs(res.value) + 1e-300);
  for (int level = spec.start_level + 1; level <= spec.max_depth; ++level) {
    const double finer = value_at(level);
    const double diff = std::abs(finer - res.value);
    res.error_estimate = finer != 0.0 ? diff / std::abs(finer) : diff;
    res.value = finer;
    if (diff <= spec.tol * std::abs(finer) + floor) return res;
  }
  throw NumericalError("integrate_pair did not reach tol " + detail::sci(spec.tol) + " (estimate " +
                       detail::sci(res.error_estimate) + ")");
}

// ---------------------------------------------------------------------------
// Right-hand side cells

using SpaceTimeFunction = std::function<double(double, const Point3&)>;

/// Time quadrature nodes on [a, b], split at kinks inside the interval and
/// geometrically graded toward each kink.
inline void time_rule(double a, double b, std::span<const double> kinks, int order, int kink_levels,
                      std::vector<double>& t, std::vector<double>& w) {
  t.clear();
  w.clear();
  std::vector<double> cuts{a, b};
  std::vector<double> inside;
  for (double k : kinks)
    if (k > a && k < b) inside.push_back(k);
  for (double k : inside) cuts.push_back(k);
  // grading toward every kink, including kinks on the interval ends
  std::vector<double> all_kinks = inside;
  for (double k : kinks)
    if (k == a || k == b) all_kinks.push_back(k);
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> refined;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i], hi = cuts[i + 1];
    refined.push_back(lo);
    const bool kink_lo = std::find(all_kinks.begin(), all_kinks.end(), lo) != all_kinks.end();
    const bool kink_hi = std::find(all_kinks.begin(), all_kinks.end(), hi) != all_kinks.end();
    std::vector<double> extra;
    double len = hi - lo;
    if (kink_lo && kink_hi) len *= 0.5;
    for (int l = 1; l <= kink_levels; ++l) {
      const double off = len * std::pow(0.25, l);
      if (kink_lo) extra.push_back(lo + off);
      if (kink_hi) extra.push_back(hi - off);
    }
    if (kink_lo && kink_hi) extra.push_back(0.5 * (lo + hi));
    std::sort(extra.begin(), extra.end());
    for (double e : extra) refined.push_back(e);
  }
  refined.push_back(cuts.back());
  const Rule1D& g = gauss_legendre(order);
  for (std::size_t i = 0; i + 1 < refined.size(); ++i) append_composite(g, refined[i], refined[i + 1], t, w);
}

/// int_{t_interval} int_T f(t, x) dtest(t) phi_shape(x) dx dt by tensor Gauss,
/// split and graded at the declared time kinks.
inline double integrate_rhs_cell(const std::array<Point3, 3>& tri, double t0, double t1, const SpaceTimeFunction& f,
                                 const std::function<double(double)>& test_time_derivative,
                                 const ReferenceBasis& basis, int shape, const QuadratureSpec& spec,
                                 std::span<const double> kinks = {}) {
  std::vector<double> ts, tw;
  time_rule(t0, t1, kinks, spec.base_order + 4, spec.kink_levels, ts, tw);
  const auto rule = triangle_rule(spec.base_order + 4);
  const double area2 = (tri[1] - tri[0]).cross(tri[2] - tri[0]).norm();
  std::vector<double> vals(basis.size());
  double sum = 0.0;
  for (int q = 0; q < rule.size(); ++q) {
    basis.eval(rule.u[q], rule.v[q], vals);
    const Point3 x = tri[0] + rule.u[q] * (tri[1] - tri[0]) + rule.v[q] * (tri[2] - tri[0]);
    double inner = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) inner += tw[i] * f(ts[i], x) * test_time_derivative(ts[i]);
    sum += rule.w[q] * area2 * vals[shape] * inner;
  }
  return sum;
}

}  // namespace tdbem

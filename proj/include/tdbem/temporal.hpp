#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "tdbem/error.hpp"
#include "tdbem/gauss.hpp"
#include "tdbem/polynomial.hpp"

namespace tdbem {

/// Uniform time grid t_k = k * dt, k = 0 .. n_steps.
struct TimeGrid {
  double dt = 0.0;
  int n_steps = 0;

  TimeGrid() = default;
  TimeGrid(double dt_, int n_steps_) : dt(dt_), n_steps(n_steps_) {
    require(dt > 0.0, "time step must be positive");
    require(n_steps >= 1, "need at least one time step");
  }
  double end_time() const { return dt * n_steps; }
  double node(int k) const { return dt * k; }
};

using LongPoly = Polynomial<long double>;

/// A function on the reference group support s in [-1, 1] (s = t/dt - m),
/// stored as two polynomials in the local variable tau in [0, 1]:
/// pieces[0] on s = -1 + tau, pieces[1] on s = tau.
struct LocalTimeFunction {
  std::array<LongPoly, 2> pieces;

  double value(double s) const {
    if (s < -1.0 || s >= 1.0) return 0.0;
    if (s < 0.0) return static_cast<double>(pieces[0](s + 1.0L));
    return static_cast<double>(pieces[1](static_cast<long double>(s)));
  }
  LocalTimeFunction derivative() const {
    return {{pieces[0].derivative(), pieces[1].derivative()}};
  }
};

/// C0 piecewise polynomial time basis of degree p vanishing at t = 0.
///
/// Group m = 1..N_t holds p functions: local index 0 is the nodal function at
/// t_m (support [t_{m-1}, t_{m+1}]); indices 1..p-1 are bubbles on
/// [t_{m-1}, t_m] attached to the interior Gauss-Lobatto nodes. Group m is the
/// translate of group 1 by (m-1) dt. Global dof = (m-1) p + local.
class TemporalBasis {
 public:
  TemporalBasis(int degree, TimeGrid grid) : degree_(degree), grid_(grid) {
    require(degree >= 1, "time basis degree must be >= 1 (continuous ansatz)");
    const auto nodes = gauss_lobatto_nodes(degree + 1);
    local_.resize(degree);
    local_[0].pieces[0] = LongPoly::lagrange(nodes, degree);
    local_[0].pieces[1] = LongPoly::lagrange(nodes, 0);
    for (int a = 1; a < degree; ++a) {
      local_[a].pieces[0] = LongPoly::lagrange(nodes, a);
      local_[a].pieces[1] = LongPoly::constant(0.0L);
    }
  }

  int degree() const { return degree_; }
  const TimeGrid& grid() const { return grid_; }
  int n_dofs() const { return degree_ * grid_.n_steps; }
  int group_of(int dof) const { return dof / degree_ + 1; }
  int local_of(int dof) const { return dof % degree_; }
  const std::vector<LocalTimeFunction>& local_functions() const { return local_; }

  /// Support of a dof: [t_{m-1}, t_{m+1}] for nodal functions, [t_{m-1}, t_m] for bubbles.
  std::pair<double, double> support(int dof) const {
    const int m = group_of(dof);
    const double hi = local_of(dof) == 0 ? grid_.node(m + 1) : grid_.node(m);
    return {grid_.node(m - 1), hi};
  }

  double eval(int dof, double t) const {
    const double s = t / grid_.dt - group_of(dof);
    return local_[local_of(dof)].value(s);
  }

  /// Piecewise derivative, right-continuous at the grid nodes.
  double eval_derivative(int dof, double t) const {
    const double s = t / grid_.dt - group_of(dof);
    if (s < -1.0 || s >= 1.0) return 0.0;
    const auto& f = local_[local_of(dof)];
    const int piece = s < 0.0 ? 0 : 1;
    const long double tau = piece == 0 ? s + 1.0L : static_cast<long double>(s);
    return static_cast<double>(f.pieces[piece].derivative()(tau)) / grid_.dt;
  }

 private:
  int degree_;
  TimeGrid grid_;
  std::vector<LocalTimeFunction> local_;
};

inline TemporalBasis build_time_basis(int degree, const TimeGrid& grid) {
  return TemporalBasis(degree, grid);
}

/// Which time test functions pair with the ansatz in the retarded integral.
enum class TestKind {
  galerkin,           ///< time derivative of the C0 basis itself
  piecewise_constant  ///< discontinuous degree p-1 on [t_{n-1}, t_n] (marching-on-in-time)
};

/// Local time-derivative test family in units of 1/dt, expressed as
/// LocalTimeFunction pieces on the reference group support.
inline std::vector<LocalTimeFunction> test_derivative_family(const TemporalBasis& basis, TestKind kind) {
  std::vector<LocalTimeFunction> out;
  const int p = basis.degree();
  if (kind == TestKind::galerkin) {
    for (const auto& f : basis.local_functions()) out.push_back(f.derivative());
  } else {
    // Legendre P_a(2 tau - 1) on [t_{n-1}, t_n]; a = 0 is the indicator.
    for (int a = 0; a < p; ++a) {
      LongPoly x = LongPoly::linear(-1.0L, 2.0L);
      LongPoly p0 = LongPoly::constant(1.0L), p1 = x;
      LongPoly pa = p0;
      if (a == 1) pa = p1;
      for (int k = 2; k <= a; ++k) {
        LongPoly pk = (x * p1) * ((2.0L * k - 1.0L) / k) + p0 * (-(k - 1.0L) / k);
        p0 = p1;
        p1 = pk;
        pa = pk;
      }
      out.push_back({{pa, LongPoly::constant(0.0L)}});
    }
  }
  return out;
}

namespace detail {

inline long double binom(int n, int k) {
  long double r = 1.0L;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// R0(x) = int_0^{1-x} A(u) B(u + x) du
inline LongPoly overlap_lower(const LongPoly& A, const LongPoly& B) {
  LongPoly result = LongPoly::constant(0.0L);
  const LongPoly one_minus_x = LongPoly::linear(1.0L, -1.0L);
  for (int j = 0; j <= B.degree(); ++j) {
    if (B.coeff(j) == 0.0L) continue;
    for (int i = 0; i <= j; ++i) {
      const LongPoly xpow = LongPoly::linear(0.0L, 1.0L).pow(j - i);
      for (int k = 0; k <= A.degree(); ++k) {
        if (A.coeff(k) == 0.0L) continue;
        const int n = k + i + 1;
        const long double c = B.coeff(j) * binom(j, i) * A.coeff(k) / n;
        result += (xpow * one_minus_x.pow(n)) * c;
      }
    }
  }
  return result;
}

// R1(x) = int_{1-x}^{1} A(u) B(u - 1 + x) du
inline LongPoly overlap_upper(const LongPoly& A, const LongPoly& B) {
  LongPoly result = LongPoly::constant(0.0L);
  const LongPoly one_minus_x = LongPoly::linear(1.0L, -1.0L);
  const LongPoly x_minus_one = LongPoly::linear(-1.0L, 1.0L);
  for (int j = 0; j <= B.degree(); ++j) {
    if (B.coeff(j) == 0.0L) continue;
    for (int i = 0; i <= j; ++i) {
      const LongPoly shift = x_minus_one.pow(j - i);
      for (int k = 0; k <= A.degree(); ++k) {
        if (A.coeff(k) == 0.0L) continue;
        const int n = k + i + 1;
        const long double c = B.coeff(j) * binom(j, i) * A.coeff(k) / n;
        result += (shift * (LongPoly::constant(1.0L) + one_minus_x.pow(n) * -1.0L)) * c;
      }
    }
  }
  return result;
}

}  // namespace detail

/// Exact tables of I_{l,a,b}(r) = int_0^inf gamma_b^m(t - r) d/dt gamma_a^n(t) dt,
/// l = n - m, for test local index a and ansatz local index b.
///
/// I depends on r only through rho = r / dt. On each light-cone interval
/// rho in [k, k+1] it is a polynomial of degree <= 2p in x = rho - k, stored in
/// ascending powers. Support: rho in [max(0, l-2), l+2].
class RetardedTimeIntegral {
 public:
  RetardedTimeIntegral(const TemporalBasis& basis, int l_min, int l_max, TestKind kind = TestKind::galerkin)
      : degree_(basis.degree()), l_min_(l_min), l_max_(l_max), kind_(kind) {
    require(l_max >= l_min, "empty shift range");
    const int p = degree_;
    const auto& ansatz = basis.local_functions();
    const auto test = test_derivative_family(basis, kind);
    coeffs_.assign(static_cast<std::size_t>(l_max - l_min + 1) * p * p * kPieces * (2 * p + 1), 0.0);
    for (int l = l_min; l <= l_max; ++l) {
      for (int a = 0; a < p; ++a) {
        for (int b = 0; b < p; ++b) {
          for (int k = first_piece(l); k < first_piece(l) + kPieces; ++k) {
            if (k < 0) continue;
            LongPoly acc = LongPoly::constant(0.0L);
            for (int ja = 0; ja < 2; ++ja) {
              const LongPoly& A = ansatz[b].pieces[ja];
              if (A.degree() == 0 && A.coeff(0) == 0.0L) continue;
              for (int jb = 0; jb < 2; ++jb) {
                const LongPoly& B = test[a].pieces[jb];
                if (B.degree() == 0 && B.coeff(0) == 0.0L) continue;
                const int c = (jb - 1) + l - k - (ja - 1);
                if (c == 0) acc += detail::overlap_lower(A, B);
                if (c == 1) acc += detail::overlap_upper(A, B);
              }
            }
            double* dst = slot(l, a, b, k);
            for (int d = 0; d <= 2 * p; ++d) dst[d] = static_cast<double>(acc.coeff(d));
          }
        }
      }
    }
  }

  int degree() const { return degree_; }
  int l_min() const { return l_min_; }
  int l_max() const { return l_max_; }
  TestKind kind() const { return kind_; }

  /// First light-cone interval index of shift l; pieces cover k = first .. first+3.
  static int first_piece(int l) { return l - 2; }
  static constexpr int kPieces = 4;

  /// Coefficients (ascending in x = r/dt - k) of piece k; zero outside the support window.
  std::span<const double> piece(int l, int a, int b, int k) const {
    static const std::vector<double> zeros(64, 0.0);
    if (l < l_min_ || l > l_max_ || k < std::max(0, first_piece(l)) || k >= first_piece(l) + kPieces)
      return {zeros.data(), static_cast<std::size_t>(2 * degree_ + 1)};
    return {const_cast<RetardedTimeIntegral*>(this)->slot(l, a, b, k),
            static_cast<std::size_t>(2 * degree_ + 1)};
  }

  /// Value at distance r for time step dt.
  double eval(int l, int a, int b, double r, double dt) const {
    if (r < 0.0) return 0.0;
    const double rho = r / dt;
    int k = static_cast<int>(std::floor(rho));
    double x = rho - k;
    // close the support at its upper end
    if (k == first_piece(l) + kPieces && x == 0.0) {
      k -= 1;
      x = 1.0;
    }
    const auto c = piece(l, a, b, k);
    double v = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * x + *it;
    return v;
  }

 private:
  double* slot(int l, int a, int b, int k) {
    const int p = degree_;
    const std::size_t idx =
        ((static_cast<std::size_t>(l - l_min_) * p + a) * p + b) * kPieces + (k - first_piece(l));
    return coeffs_.data() + idx * (2 * p + 1);
  }

  int degree_;
  int l_min_, l_max_;
  TestKind kind_;
  std::vector<double> coeffs_;
};

inline RetardedTimeIntegral retarded_integral_table(const TemporalBasis& basis, int l_min, int l_max,
                                                    TestKind kind = TestKind::galerkin) {
  return RetardedTimeIntegral(basis, l_min, l_max, kind);
}

}  // namespace tdbem

#pragma once

// Best approximation of singular powers y^a on [0, 1] by discontinuous
// piecewise polynomials in the norms
//   ||u||_s^2 = (1 / 2 pi) int_R (1 + xi^2)^s |u^(xi)|^2 dxi,  u^(xi) = int_0^1 u(y) e^{-i xi y} dy.

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tdbem/error.hpp"
#include "tdbem/gauss.hpp"
#include "tdbem/postprocess.hpp"

namespace tdbem::lab {

using cplx = std::complex<double>;

/// Leading behaviour coeff * e^{-i xi y} (i xi)^{-beta} of a transform as xi -> +inf.
struct Asymptote {
  double y;
  cplx coeff;
  double beta;
};

/// y^a on (0, 1], zero-extended.
struct PowerFunction {
  double a = 0.5;

  double operator()(double y) const { return y <= 0.0 ? (a == 0.0 ? 1.0 : 0.0) : std::pow(y, a); }

  /// int_0^1 y^a e^{-i xi y} dy for xi >= 0.
  cplx fourier(double xi) const {
    const double b = a + 1.0;
    if (xi <= 4.0) {
      cplx term = 1.0, sum = 0.0;
      for (int n = 0; n < 200; ++n) {
        const cplx add = term / (b + n);
        sum += add;
        if (std::abs(add) < 1e-18 * std::abs(sum) && n > 4) break;
        term *= cplx(0.0, -xi) / double(n + 1);
      }
      return sum;
    }
    // (i xi)^{-b} [Gamma(b) - Gamma(b, i xi)], upper incomplete gamma by continued fraction
    const cplx z(0.0, xi);
    const double tiny = 1e-300;
    cplx bb = z + 1.0 - b, c = 1.0 / tiny, d = 1.0 / bb, h = d;
    for (int i = 1; i < 2000; ++i) {
      const double an = -i * (i - b);
      bb += 2.0;
      d = an * d + bb;
      if (std::abs(d) < tiny) d = tiny;
      c = bb + an / c;
      if (std::abs(c) < tiny) c = tiny;
      d = 1.0 / d;
      const cplx del = d * c;
      h *= del;
      if (std::abs(del - 1.0) < 1e-16) break;
    }
    // Gamma(b, z) = e^{-z} z^b h
    const cplx zb = std::pow(z, -b);
    return zb * std::tgamma(b) - std::exp(-z) * h;
  }

  std::vector<Asymptote> asymptotes() const {
    std::vector<Asymptote> out{{1.0, -1.0, 1.0}};
    out.push_back({0.0, std::tgamma(a + 1.0), a + 1.0});
    return out;
  }
};

namespace detail {

inline double double_factorial_odd(int n) {  // (2n+1)!!
  double r = 1.0;
  for (int k = 3; k <= 2 * n + 1; k += 2) r *= k;
  return r;
}

// spherical Bessel j_n(x) for x >= 0, with a series for small arguments
inline double sph_j(int n, double x) {
  if (x < 0.5 + 0.1 * n) {
    const double x2 = 0.5 * x * x;
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 60; ++k) {
      term *= -x2 / (k * (2.0 * n + 2 * k + 1));
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return std::pow(x, n) / double_factorial_odd(n) * sum;
  }
  return std::sph_bessel(n, x);
}

inline double legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return 1.0;
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

}  // namespace detail

/// Discontinuous piecewise polynomial on a uniform mesh of [0, 1], in the
/// L2-orthonormal element basis sqrt((2n+1)/h) P_n(2 (y - c)/h).
struct PiecewisePolynomial {
  int n_elems = 1;
  int degree = 0;
  Eigen::VectorXd coeffs;  // element-major

  PiecewisePolynomial() = default;
  PiecewisePolynomial(int n, int p) : n_elems(n), degree(p), coeffs(Eigen::VectorXd::Zero(n * (p + 1))) {}

  int size() const { return n_elems * (degree + 1); }
  double h() const { return 1.0 / n_elems; }

  static double basis(int n, double h, double x_local) {  // x_local in [-1, 1]
    return std::sqrt((2 * n + 1) / h) * detail::legendre(n, x_local);
  }

  double operator()(double y) const {
    if (y < 0.0 || y > 1.0) return 0.0;
    const int e = std::min(n_elems - 1, static_cast<int>(y * n_elems));
    const double c = (e + 0.5) * h();
    double v = 0.0;
    for (int n = 0; n <= degree; ++n) v += coeffs[e * (degree + 1) + n] * basis(n, h(), 2.0 * (y - c) / h());
    return v;
  }

  /// Transform of basis function (e, n).
  static cplx basis_fourier(int e, int n, double h, double xi) {
    const double c = (e + 0.5) * h;
    static const cplx mi[4] = {1.0, cplx(0, -1), -1.0, cplx(0, 1)};
    return std::sqrt((2 * n + 1) * h) * mi[n % 4] * std::exp(cplx(0.0, -xi * c)) * detail::sph_j(n, 0.5 * xi * h);
  }

  /// All basis transforms at xi, element-major. j_n is shared by the
  /// elements and the phases follow a recurrence.
  static void basis_fourier_all(int n_elems, int degree, double xi, Eigen::VectorXcd& out) {
    static const cplx mi[4] = {1.0, cplx(0, -1), -1.0, cplx(0, 1)};
    const double h = 1.0 / n_elems;
    out.resize(n_elems * (degree + 1));
    require(degree < 64, "degree too large");
    cplx amp[64];
    for (int n = 0; n <= degree; ++n)
      amp[n] = std::sqrt((2 * n + 1) * h) * mi[n % 4] * detail::sph_j(n, 0.5 * xi * h);
    cplx phase = std::exp(cplx(0.0, -0.5 * xi * h));
    const cplx step = std::exp(cplx(0.0, -xi * h));
    for (int e = 0; e < n_elems; ++e) {
      if (e % 16 == 0) phase = std::exp(cplx(0.0, -xi * (e + 0.5) * h));  // limit drift
      for (int n = 0; n <= degree; ++n) out[e * (degree + 1) + n] = amp[n] * phase;
      phase *= step;
    }
  }

  cplx fourier(double xi) const {
    Eigen::VectorXcd phi;
    basis_fourier_all(n_elems, degree, xi, phi);
    return phi.cwiseProduct(coeffs.cast<cplx>()).sum();
  }

  /// Jumps u(y+) - u(y-) at the breakpoints, zero extension outside [0, 1].
  std::vector<Asymptote> asymptotes() const {
    std::vector<Asymptote> out;
    auto side = [&](int e, double x) {
      double v = 0.0;
      for (int n = 0; n <= degree; ++n) v += coeffs[e * (degree + 1) + n] * basis(n, h(), x);
      return v;
    };
    for (int j = 0; j <= n_elems; ++j) {
      const double right = j < n_elems ? side(j, -1.0) : 0.0;
      const double left = j > 0 ? side(j - 1, 1.0) : 0.0;
      if (right != left) out.push_back({j * h(), right - left, 1.0});
    }
    return out;
  }

  double l2_norm() const { return coeffs.norm(); }
};

/// Controls of the frequency integration.
struct FourierRule {
  double xi_max = 2e4;  ///< explicit quadrature on [0, xi_max], asymptotic tail beyond
  double cell = 2.0;    ///< cell width (the transforms oscillate with period >= 2 pi)
  int order = 12;
};

namespace detail {

// (1 / pi) int_{xi_max}^inf (1 + xi^2)^s Re(A conj B) for the asymptotic expansions A, B
inline double tail(const std::vector<Asymptote>& A, const std::vector<Asymptote>& B, double s, double xi_max) {
  double sum = 0.0;
  for (const auto& a : A)
    for (const auto& b : B) {
      if (std::abs(a.y - b.y) > 1e-14) continue;  // oscillating cross terms average out
      const double expo = 2.0 * s - a.beta - b.beta;
      if (expo >= -1.0) return std::numeric_limits<double>::infinity();
      // (i xi)^{-beta} = xi^{-beta} e^{-i pi beta / 2}
      const cplx phase = std::exp(cplx(0.0, -0.5 * std::numbers::pi * (a.beta - b.beta)));
      sum += std::real(a.coeff * std::conj(b.coeff) * phase) * std::pow(xi_max, expo + 1.0) / (-(expo + 1.0));
    }
  return sum / std::numbers::pi;
}

template <class F>
void for_each_xi(const FourierRule& r, F&& f) {
  const auto& g = gauss_legendre(r.order);
  const int cells = static_cast<int>(std::ceil(r.xi_max / r.cell));
  const double w = r.xi_max / cells;
  for (int c = 0; c < cells; ++c)
    for (int q = 0; q < g.size(); ++q) f(w * (c + g.nodes[q]), w * g.weights[q]);
}

}  // namespace detail

/// ||u||_s^2 by the frequency route.
inline double fourier_norm_sq(const PiecewisePolynomial& u, double s, const FourierRule& rule = {}) {
  double sum = 0.0;
  detail::for_each_xi(rule, [&](double xi, double w) { sum += w * std::pow(1.0 + xi * xi, s) * std::norm(u.fourier(xi)); });
  const auto as = u.asymptotes();
  return sum / std::numbers::pi + detail::tail(as, as, s, rule.xi_max);
}

inline double fourier_norm(const PiecewisePolynomial& u, double s, const FourierRule& rule = {}) {
  return std::sqrt(fourier_norm_sq(u, s, rule));
}

struct BestApproximation {
  PiecewisePolynomial v;
  double error = 0.0;  ///< ||f - v||_s
};

namespace detail {

// Gauss points on [0, 1] per element, graded geometrically toward y = 0 in the first element.
inline void physical_rule(int n_elems, int order, std::vector<double>& y, std::vector<double>& w) {
  y.clear();
  w.clear();
  const auto& g = gauss_legendre(order);
  const double h = 1.0 / n_elems;
  std::vector<double> br{0.0};
  for (int j = 40; j >= 1; --j) br.push_back(h * std::pow(0.15, j));
  for (int e = 1; e <= n_elems; ++e) br.push_back(e * h);
  for (std::size_t i = 0; i + 1 < br.size(); ++i) append_composite(g, br[i], br[i + 1], y, w);
}

}  // namespace detail

/// Minimiser of ||f - v||_s over degree-p discontinuous piecewise polynomials
/// on n_elems uniform elements. s = 0 is done in physical space (L2
/// projection); other s by the frequency route with the H^s Gram matrix.
inline BestApproximation best_approx(const PowerFunction& f, int p, int n_elems, double s,
                                     const FourierRule& rule = {}) {
  require(p >= 0 && n_elems >= 1, "best_approx: need p >= 0 and at least one element");
  require(s >= -1.0 && s <= 1.0, "best_approx: s must lie in [-1, 1]");
  require(f.a > -0.5 + s || (s < 0.0 && f.a > -0.5), "best_approx: ||y^a||_s is infinite for these a and s");
  BestApproximation res;
  res.v = PiecewisePolynomial(n_elems, p);
  const int nb = res.v.size();
  const double h = res.v.h();
  if (s == 0.0) {
    std::vector<double> ys, ws;
    detail::physical_rule(n_elems, std::max(20, p + 12), ys, ws);
    for (std::size_t q = 0; q < ys.size(); ++q) {
      const int e = std::min(n_elems - 1, static_cast<int>(ys[q] * n_elems));
      const double xl = 2.0 * (ys[q] - (e + 0.5) * h) / h;
      for (int n = 0; n <= p; ++n) res.v.coeffs[e * (p + 1) + n] += ws[q] * f(ys[q]) * PiecewisePolynomial::basis(n, h, xl);
    }
    double err = 0.0;
    for (std::size_t q = 0; q < ys.size(); ++q) {
      const double d = f(ys[q]) - res.v(ys[q]);
      err += ws[q] * d * d;
    }
    res.error = std::sqrt(err);
    return res;
  }

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(nb);
  Eigen::VectorXcd phi(nb);
  detail::for_each_xi(rule, [&](double xi, double w) {
    const double wt = w * std::pow(1.0 + xi * xi, s) / std::numbers::pi;
    PiecewisePolynomial::basis_fourier_all(n_elems, p, xi, phi);
    const cplx fh = f.fourier(xi);
    G.selfadjointView<Eigen::Lower>().rankUpdate(phi.real(), wt);
    G.selfadjointView<Eigen::Lower>().rankUpdate(phi.imag(), wt);
    r += wt * (phi.real() * fh.real() + phi.imag() * fh.imag());
  });
  G = G.selfadjointView<Eigen::Lower>();
  // tails through the jump expansions of single basis functions
  std::vector<std::vector<Asymptote>> basis_as(nb);
  for (int k = 0; k < nb; ++k) {
    PiecewisePolynomial b(n_elems, p);
    b.coeffs[k] = 1.0;
    basis_as[k] = b.asymptotes();
  }
  const auto fas = f.asymptotes();
  for (int i = 0; i < nb; ++i) {
    r[i] += detail::tail(fas, basis_as[i], s, rule.xi_max);
    for (int j = 0; j < nb; ++j) G(i, j) += detail::tail(basis_as[i], basis_as[j], s, rule.xi_max);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G, Eigen::EigenvaluesOnly);
  const double cond = eig.eigenvalues().maxCoeff() / std::max(eig.eigenvalues().minCoeff(), 1e-300);
  if (!(cond < 1e13))
    throw NumericalError("H^s Gram matrix is ill conditioned (condition " + std::to_string(cond) +
                         "); use a smaller p or fewer elements");
  res.v.coeffs = G.ldlt().solve(r);

  // ||f - v||_s^2 directly, without cancellation against ||f||_s
  double err = 0.0;
  detail::for_each_xi(rule, [&](double xi, double w) {
    err += w * std::pow(1.0 + xi * xi, s) * std::norm(f.fourier(xi) - res.v.fourier(xi));
  });
  auto diff_as = res.v.asymptotes();
  for (auto& a : diff_as) a.coeff = -a.coeff;
  for (const auto& a : fas) diff_as.push_back(a);
  res.error = std::sqrt(std::max(0.0, err / std::numbers::pi + detail::tail(diff_as, diff_as, s, rule.xi_max)));
  return res;
}

enum class SweepMode { h, p };

struct RateExperiment {
  std::vector<double> params;  ///< h = 1 / n_elems, or p
  std::vector<double> abscissa;  ///< h resp. p + 1, what the rate is fitted against
  std::vector<double> errors;
  double rate = 0.0;
  double predicted = 0.0;
  std::string warning;  ///< set when the errors are not monotone
};

/// Exponent e of the approximation estimates: a + 1/2 - s for a < 0,
/// min(a + 1/2 - s, 2 - s) for a > 0; the p-version doubles it.
inline double predicted_rate(double a, double s, SweepMode mode) {
  const double e = a < 0.0 ? a + 0.5 - s : std::min(a + 0.5 - s, 2.0 - s);
  return mode == SweepMode::p ? 2.0 * e : e;
}

/// Runs best_approx along a ladder (element counts for h, degrees for p) and
/// fits log(error) against log(1/h) resp. log(p + 1). The estimates scale
/// with h / (p + 1)^2, so p + 1 is the natural abscissa at low degree.
inline RateExperiment lemma_rate_experiment(const PowerFunction& f, double s, SweepMode mode,
                                            const std::vector<int>& ladder, int fixed,
                                            const FourierRule& rule = {}) {
  require(ladder.size() >= 4, "rate experiment needs a ladder of at least 4 points");
  RateExperiment out;
  out.predicted = predicted_rate(f.a, s, mode);
  for (int v : ladder) {
    const int p = mode == SweepMode::p ? v : fixed;
    const int n = mode == SweepMode::h ? v : fixed;
    const auto ba = best_approx(f, p, n, s, rule);
    out.params.push_back(mode == SweepMode::h ? 1.0 / n : p);
    out.abscissa.push_back(mode == SweepMode::h ? 1.0 / n : p + 1.0);
    out.errors.push_back(ba.error);
  }
  for (std::size_t i = 1; i < out.errors.size(); ++i)
    if (out.errors[i] > out.errors[i - 1]) out.warning = "errors are not monotone";
  for (double e : out.errors)
    if (!(e > 1e-13)) out.warning = "errors at round-off level (the function is reproduced exactly)";
  std::vector<double> errs = out.errors;
  for (double& e : errs) e = std::max(e, 1e-300);
  out.rate = fit_rate(out.abscissa, errs, mode == SweepMode::h ? Abscissa::h : Abscissa::p);
  return out;
}

}  // namespace tdbem::lab

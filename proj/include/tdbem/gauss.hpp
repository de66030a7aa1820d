#pragma once

#include <cmath>
#include <mutex>
#include <numbers>
#include <vector>

namespace tdbem {

/// One-dimensional quadrature rule on [0, 1].
struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
  int size() const { return static_cast<int>(nodes.size()); }
};

namespace detail {

// Legendre P_n and P_n' at x, by the three-term recurrence.
inline void legendre_with_derivative(int n, long double x, long double& p, long double& dp) {
  long double p0 = 1.0L, p1 = x;
  if (n == 0) {
    p = 1.0L;
    dp = 0.0L;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    long double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  p = p1;
  dp = n * (x * p1 - p0) / (x * x - 1.0L);
}

inline Rule1D make_gauss_legendre(int n) {
  Rule1D rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    long double x = std::cos(std::numbers::pi_v<long double> * (i + 0.75L) / (n + 0.5L));
    long double p = 0, dp = 0;
    for (int it = 0; it < 100; ++it) {
      legendre_with_derivative(n, x, p, dp);
      long double dx = p / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-19L) break;
    }
    legendre_with_derivative(n, x, p, dp);
    long double w = 2.0L / ((1.0L - x * x) * dp * dp);
    // map [-1,1] -> [0,1], ascending order
    rule.nodes[n - 1 - i] = static_cast<double>((1.0L + x) / 2.0L);
    rule.weights[n - 1 - i] = static_cast<double>(w / 2.0L);
  }
  return rule;
}

}  // namespace detail

/// Gauss-Legendre rule with n points on [0, 1]; exact for degree 2n-1.
inline const Rule1D& gauss_legendre(int n) {
  static constexpr int kMax = 128;
  static std::vector<Rule1D> cache = [] {
    std::vector<Rule1D> rules(kMax + 1);
    for (int k = 1; k <= kMax; ++k) rules[k] = detail::make_gauss_legendre(k);
    return rules;
  }();
  if (n < 1) n = 1;
  if (n > kMax) n = kMax;
  return cache[n];
}

/// Gauss-Lobatto nodes (n >= 2 points, endpoints included) on [0, 1], ascending.
inline std::vector<long double> gauss_lobatto_nodes(int n) {
  std::vector<long double> nodes(n);
  nodes[0] = 0.0L;
  nodes[n - 1] = 1.0L;
  const int deg = n - 1;
  // interior nodes are the roots of P'_{deg}
  for (int i = 1; i < n - 1; ++i) {
    long double x = -std::cos(std::numbers::pi_v<long double> * i / deg);
    for (int it = 0; it < 100; ++it) {
      long double p, dp;
      detail::legendre_with_derivative(deg, x, p, dp);
      // P'' from the Legendre ODE: (1-x^2)P'' = 2xP' - n(n+1)P
      long double d2p = (2.0L * x * dp - deg * (deg + 1) * p) / (1.0L - x * x);
      long double dx = dp / d2p;
      x -= dx;
      if (std::fabs(dx) < 1e-19L) break;
    }
    nodes[i] = (1.0L + x) / 2.0L;
  }
  return nodes;
}

/// Piecewise composite of a rule over the given sorted breakpoints.
inline void append_composite(const Rule1D& rule, double a, double b, std::vector<double>& x,
                             std::vector<double>& w) {
  const double len = b - a;
  for (int i = 0; i < rule.size(); ++i) {
    x.push_back(a + len * rule.nodes[i]);
    w.push_back(len * rule.weights[i]);
  }
}

}  // namespace tdbem

namespace tdbem {

/// Collapsed-coordinate product rule on the reference triangle; weights sum to 1/2.
struct TriangleRule {
  std::vector<double> u, v, w;
  int size() const { return static_cast<int>(w.size()); }
};

/// Exact for total degree <= 2n - 2.
inline TriangleRule triangle_rule(int n) {
  const auto& g = gauss_legendre(n);
  TriangleRule r;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double eta = g.nodes[j];
      r.u.push_back(g.nodes[i] * (1.0 - eta));
      r.v.push_back(eta);
      r.w.push_back(g.weights[i] * g.weights[j] * (1.0 - eta));
    }
  return r;
}

}  // namespace tdbem

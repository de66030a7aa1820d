#pragma once

// Time-axis oracles for the retarded time integrals, shared by the unit tests
// and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <vector>

#include "tdbem/gauss.hpp"
#include "tdbem/temporal.hpp"

namespace oracle {

using namespace tdbem;

// Hand-derived p = 1 closed form, with l = n - m and E_j = [t_j, t_{j+1}].
inline double closed_form_p1(int l, double r, double dt) {
  auto t = [dt](int j) { return j * dt; };
  auto in = [&](int j) { return r >= t(j) && r <= t(j + 1); };
  const double s = 1.0 / (dt * dt);
  double v = 0.0;
  if (in(l + 1)) v += -0.5 * s * std::pow(t(l + 2) - r, 2);
  if (in(l)) v += s * std::pow(t(l + 1) - r, 2) + 0.5 * s * std::pow(t(l) - r, 2) - 1.0;
  if (in(l - 1)) v -= s * std::pow(t(l - 1) - r, 2) + 0.5 * s * std::pow(t(l) - r, 2) - 1.0;
  if (in(l - 2)) v += 0.5 * s * std::pow(t(l - 2) - r, 2);
  return v;
}

// Defining integral by piecewise-exact Gauss quadrature on the time axis.
inline double quadrature_oracle(const TemporalBasis& basis, int l, int a, int b, double r, TestKind kind, int m = 6) {
  const int p = basis.degree();
  const double dt = basis.grid().dt;
  const int n = m + l;
  if (n < 1) return 0.0;
  const auto test = test_derivative_family(basis, kind);
  std::vector<double> cuts;
  for (int k = -2; k <= 2; ++k) {
    cuts.push_back((n + k) * dt);
    cuts.push_back((m + k) * dt + r);
  }
  std::sort(cuts.begin(), cuts.end());
  const auto& rule = gauss_legendre(2 * p + 4);
  double sum = 0.0;
  const int ansatz_dof = (m - 1) * p + b;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = std::max(0.0, cuts[i]), hi = cuts[i + 1];
    if (hi <= lo) continue;
    for (int q = 0; q < rule.size(); ++q) {
      const double t = lo + (hi - lo) * rule.nodes[q];
      const double w = (hi - lo) * rule.weights[q];
      const double s = t / dt - n;
      sum += w * basis.eval(ansatz_dof, t - r) * test[a].value(s) / dt;
    }
  }
  return sum;
}

}  // namespace oracle

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace tdbem {

/// Dense univariate polynomial, coefficients in ascending powers.
template <typename T>
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<T> coeffs) : c_(std::move(coeffs)) {}
  static Polynomial constant(T v) { return Polynomial(std::vector<T>{v}); }
  /// (a + b x)
  static Polynomial linear(T a, T b) { return Polynomial(std::vector<T>{a, b}); }

  const std::vector<T>& coeffs() const { return c_; }
  int degree() const { return static_cast<int>(c_.size()) - 1; }
  T coeff(int k) const { return k < static_cast<int>(c_.size()) ? c_[k] : T(0); }

  T operator()(T x) const {
    T v = 0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) v = v * x + *it;
    return v;
  }

  Polynomial derivative() const {
    if (c_.size() <= 1) return Polynomial::constant(0);
    std::vector<T> d(c_.size() - 1);
    for (std::size_t k = 1; k < c_.size(); ++k) d[k - 1] = static_cast<T>(k) * c_[k];
    return Polynomial(std::move(d));
  }

  Polynomial& operator+=(const Polynomial& o) {
    if (o.c_.size() > c_.size()) c_.resize(o.c_.size(), T(0));
    for (std::size_t k = 0; k < o.c_.size(); ++k) c_[k] += o.c_[k];
    return *this;
  }
  Polynomial& operator*=(T s) {
    for (auto& v : c_) v *= s;
    return *this;
  }
  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator*(Polynomial a, T s) { return a *= s; }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    if (a.c_.empty() || b.c_.empty()) return Polynomial();
    std::vector<T> r(a.c_.size() + b.c_.size() - 1, T(0));
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      for (std::size_t j = 0; j < b.c_.size(); ++j) r[i + j] += a.c_[i] * b.c_[j];
    return Polynomial(std::move(r));
  }

  Polynomial pow(int n) const {
    Polynomial r = Polynomial::constant(1);
    for (int i = 0; i < n; ++i) r = r * *this;
    return r;
  }

  /// Lagrange basis polynomial equal to 1 at nodes[i] and 0 at the others.
  static Polynomial lagrange(const std::vector<T>& nodes, std::size_t i) {
    Polynomial r = Polynomial::constant(1);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (j == i) continue;
      const T denom = nodes[i] - nodes[j];
      r = r * Polynomial::linear(-nodes[j] / denom, T(1) / denom);
    }
    return r;
  }

  template <typename U>
  Polynomial<U> cast() const {
    std::vector<U> out(c_.begin(), c_.end());
    return Polynomial<U>(std::move(out));
  }

 private:
  std::vector<T> c_;
};

}  // namespace tdbem

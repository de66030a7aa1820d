#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tdbem/error.hpp"
#include "tdbem/mesh.hpp"

namespace tdbem {

using SpaceTimeFunction = std::function<double(double, const Point3&)>;

/// Dirichlet datum f(t, x) with the information quadrature needs about it.
struct RhsSpec {
  std::string name;
  SpaceTimeFunction f;
  std::vector<double> kinks;          ///< times where f is not smooth
  int spatial_refinement = 0;         ///< uniform splits of each triangle for spatially rough data
  std::map<std::string, double> params;  ///< parameters echoed into manifests
};

/// Overrides for the catalogue defaults; unset entries keep the defaults.
struct RhsParams {
  std::optional<Point3> k;
  std::optional<double> alpha;
};

namespace detail {

inline double sin5(double t) {
  const double s = std::sin(t);
  return s * s * s * s * s;
}

// exp(-2/t^2), extended by 0 at t <= 0
inline double smooth_onset(double t) { return t <= 0.0 ? 0.0 : std::exp(-2.0 / (t * t)); }

}  // namespace detail

/// Catalogue of the data used in the experiments:
///   f1        sin^5(t) x^2
///   f2, f3    exp(-2/t^2) cos(w t - k.x), w = |k|, k = (2, .5, .1) resp. (6, .5, .1)
///   f4        sin^5(t) |1 - t|^alpha cos(k.x), alpha = 1/2, k = (6, .5, .1), kink at t = 1
///   icosa_f2  plane wave as f2 with k = (3, .5, .1)
///   icosa_f3  sin^5(t) |sin(k.x)|^alpha, alpha = 1/2, k = (2, .5, .1)
///   zero      0
inline RhsSpec builtin_rhs(const std::string& name, const RhsParams& params = {}) {
  RhsSpec spec;
  spec.name = name;
  auto record_k = [&](const Point3& k) {
    spec.params["k1"] = k[0];
    spec.params["k2"] = k[1];
    spec.params["k3"] = k[2];
  };
  if (name == "zero") {
    spec.f = [](double, const Point3&) { return 0.0; };
  } else if (name == "f1") {
    spec.f = [](double t, const Point3& x) { return detail::sin5(t) * x[0] * x[0]; };
  } else if (name == "f2" || name == "f3" || name == "icosa_f2") {
    const Point3 k = params.k.value_or(name == "f2" ? Point3(2.0, 0.5, 0.1)
                                       : name == "f3" ? Point3(6.0, 0.5, 0.1)
                                                      : Point3(3.0, 0.5, 0.1));
    const double omega = k.norm();
    record_k(k);
    spec.params["omega"] = omega;
    spec.f = [k, omega](double t, const Point3& x) {
      return detail::smooth_onset(t) * std::cos(omega * t - k.dot(x));
    };
  } else if (name == "f4") {
    const Point3 k = params.k.value_or(Point3(6.0, 0.5, 0.1));
    const double alpha = params.alpha.value_or(0.5);
    record_k(k);
    spec.params["alpha"] = alpha;
    spec.f = [k, alpha](double t, const Point3& x) {
      return detail::sin5(t) * std::pow(std::abs(1.0 - t), alpha) * std::cos(k.dot(x));
    };
    spec.kinks = {1.0};
  } else if (name == "icosa_f3") {
    const Point3 k = params.k.value_or(Point3(2.0, 0.5, 0.1));
    const double alpha = params.alpha.value_or(0.5);
    record_k(k);
    spec.params["alpha"] = alpha;
    spec.f = [k, alpha](double t, const Point3& x) {
      return detail::sin5(t) * std::pow(std::abs(std::sin(k.dot(x))), alpha);
    };
    spec.spatial_refinement = 3;
  } else {
    throw ValidationError("unknown right-hand side '" + name + "' (known: zero, f1, f2, f3, f4, icosa_f2, icosa_f3)");
  }
  return spec;
}

/// Wraps a user callback; kinks are optional.
inline RhsSpec custom_rhs(std::string name, SpaceTimeFunction f, std::vector<double> kinks = {}) {
  RhsSpec spec;
  spec.name = std::move(name);
  spec.f = std::move(f);
  spec.kinks = std::move(kinks);
  return spec;
}

}  // namespace tdbem

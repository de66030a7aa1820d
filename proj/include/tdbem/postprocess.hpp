#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tdbem/assembly.hpp"
#include "tdbem/error.hpp"
#include "tdbem/solver.hpp"
#include "tdbem/space_basis.hpp"
#include "tdbem/temporal.hpp"

namespace tdbem {

/// |c^T A c|^{1/2} with A the full assembled space-time matrix.
inline double energy_norm(const BlockToeplitzSystem& sys, const Eigen::VectorXd& c) {
  return std::sqrt(std::abs(c.dot(sys.apply(c))));
}

inline double energy_norm(const BlockToeplitzSystem& sys, const DensitySolution& s) { return energy_norm(sys, s.c); }

struct EnergyReport {
  std::vector<double> t;  ///< t_0 .. t_N
  std::vector<double> E;  ///< E(t_n) = 1/2 <V psi, d_t psi>_{[0, t_n]} - <f, d_t psi>_{[0, t_n]}
  double Q = 0.0;         ///< c^T A c
};

/// Partial energies at the grid times. A test dof enters E(t_n) once its
/// support lies in [0, t_n]: nodal functions of group m from n = m + 1 on,
/// bubbles of group m from n = m on (piecewise constant tests: from n = m).
inline EnergyReport energy_series(const BlockToeplitzSystem& sys, const DensitySolution& s, const Eigen::VectorXd& b) {
  require(s.c.size() == sys.n_unknowns() && b.size() == sys.n_unknowns(), "sizes do not match the system");
  const Eigen::VectorXd Ac = sys.apply(s.c);
  const int N = sys.n_steps(), p = sys.p, Ns = sys.n_space;
  EnergyReport rep;
  rep.Q = s.c.dot(Ac);
  std::vector<double> gain(N + 2, 0.0);  // contribution entering at step n
  for (int m = 1; m <= N; ++m)
    for (int a = 0; a < p; ++a) {
      const int enters = (a == 0 && sys.kind == TestKind::galerkin) ? m + 1 : m;
      const auto seg = (static_cast<Eigen::Index>(m - 1) * p + a) * Ns;
      gain[enters] += 0.5 * s.c.segment(seg, Ns).dot(Ac.segment(seg, Ns)) - s.c.segment(seg, Ns).dot(b.segment(seg, Ns));
    }
  double acc = 0.0;
  for (int n = 0; n <= N; ++n) {
    acc += gain[n];
    rep.t.push_back(n * sys.grid.dt);
    rep.E.push_back(acc);
  }
  return rep;
}

/// sqrt(|Q_sol - Q_ref|) / sqrt(|Q_ref|).
inline double relative_error_energy(double Q_sol, double Q_ref) {
  if (Q_ref == 0.0) throw ValidationError("reference energy is zero");
  return std::sqrt(std::abs(Q_sol - Q_ref)) / std::sqrt(std::abs(Q_ref));
}

/// psi(t, x) = sum c_m^i gamma^m(t) psi^i(x) at points of the surface.
inline std::vector<double> evaluate_density(const SpatialBasis& space, const TemporalBasis& time,
                                            const DensitySolution& s, double t, const std::vector<Point3>& points) {
  require(s.n_space == space.n_dofs() && s.p == time.degree(), "solution does not match the bases");
  const int nloc = space.local_count();
  std::vector<double> out;
  out.reserve(points.size());
  std::vector<double> shape(nloc);
  // time basis values of all dofs alive at t
  std::vector<std::pair<int, double>> alive;
  for (int d = 0; d < time.n_dofs(); ++d) {
    const auto [lo, hi] = time.support(d);
    if (t < lo || t > hi) continue;
    const double v = time.eval(d, t);
    if (v != 0.0) alive.emplace_back(d, v);
  }
  for (const auto& x : points) {
    int tri = -1;
    for (int k = 0; k < space.mesh().n_triangles() && tri < 0; ++k)
      if (space.contains(k, x)) tri = k;
    if (tri < 0)
      throw ValidationError("point (" + std::to_string(x[0]) + ", " + std::to_string(x[1]) + ", " +
                            std::to_string(x[2]) + ") is on no triangle");
    const auto uv = space.to_reference(tri, x);
    space.reference().eval(uv[0], uv[1], shape);
    double v = 0.0;
    for (const auto& [d, g] : alive) {
      const int m = time.group_of(d), a = time.local_of(d);
      for (int i = 0; i < nloc; ++i) v += g * s.coefficient(m, a, space.dof(tri, i)) * shape[i];
    }
    out.push_back(v);
  }
  return out;
}

enum class Abscissa { p, h, dof };

inline const char* to_string(Abscissa a) { return a == Abscissa::p ? "p" : a == Abscissa::h ? "h" : "dof"; }

struct StudyRecord {
  std::string label;
  double param = 0.0;  ///< p or h
  long n_dof = 0;
  double energy = 0.0;  ///< Q = c^T A c
  double rel_err = 0.0;
};

struct ConvergenceStudy {
  std::string name;
  Abscissa abscissa = Abscissa::p;
  std::vector<StudyRecord> records;
  double rate = 0.0;
  int fit_first = 1;  ///< first record in the fit window
  int fit_last = -1;  ///< last record in the fit window (-1: last record with a positive error)
};

/// Least-squares slope of log(err) against -log(p), log(h) or -log(dof), so
/// that a convergent method has a positive rate in each case.
inline double fit_rate(const std::vector<double>& abscissa, const std::vector<double>& errors, Abscissa kind) {
  require(abscissa.size() == errors.size(), "fit_rate: size mismatch");
  require(abscissa.size() >= 2, "fit_rate: need at least two points");
  const double sgn = kind == Abscissa::h ? 1.0 : -1.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(abscissa.size());
  for (std::size_t i = 0; i < abscissa.size(); ++i) {
    require(abscissa[i] > 0.0 && errors[i] > 0.0, "fit_rate: abscissa and errors must be positive");
    const double x = sgn * std::log(abscissa[i]), y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (std::abs(den) <= 1e-14 * std::max(1.0, n * sxx)) throw ValidationError("fit_rate: degenerate abscissa");
  return (n * sxy - sx * sy) / den;
}

/// Fits the study's window, storing and returning the rate. Needs at least
/// three records in the window.
inline double fit_rate(ConvergenceStudy& study) {
  const int last = study.fit_last >= 0 ? study.fit_last : [&] {
    int k = static_cast<int>(study.records.size()) - 1;
    while (k >= 0 && !(study.records[k].rel_err > 0.0)) --k;
    return k;
  }();
  require(study.fit_first >= 0 && last - study.fit_first + 1 >= 3,
          "rate fit needs at least three records in the window");
  std::vector<double> x, y;
  for (int k = study.fit_first; k <= last; ++k) {
    const auto& r = study.records[k];
    x.push_back(study.abscissa == Abscissa::dof ? static_cast<double>(r.n_dof) : r.param);
    y.push_back(r.rel_err);
  }
  study.rate = fit_rate(x, y, study.abscissa);
  return study.rate;
}

/// Fills rel_err of every record against the benchmark energy.
inline void apply_benchmark(ConvergenceStudy& study, double Q_ref) {
  for (auto& r : study.records) r.rel_err = relative_error_energy(r.energy, Q_ref);
}

struct Extrapolation {
  double Q_inf = 0.0;
  double beta = 0.0;
};

/// Q(x) = Q_inf + C x^-beta through the last three points, x increasing with
/// fidelity (p, or 1/h). Needs strictly contracting, same-sign differences.
inline Extrapolation extrapolate_energy(const std::vector<double>& x, const std::vector<double>& Q) {
  require(x.size() == Q.size() && x.size() >= 3, "extrapolation needs three energies");
  const std::size_t k = x.size() - 3;
  const double x1 = x[k], x2 = x[k + 1], x3 = x[k + 2];
  require(0.0 < x1 && x1 < x2 && x2 < x3, "extrapolation needs increasing fidelity");
  const double d1 = Q[k] - Q[k + 1], d2 = Q[k + 1] - Q[k + 2];
  if (!(d1 * d2 > 0.0)) throw ValidationError("energies do not converge monotonically; no extrapolation");
  const double R = d1 / d2;
  auto ratio = [&](double b) { return (std::pow(x1, -b) - std::pow(x2, -b)) / (std::pow(x2, -b) - std::pow(x3, -b)); };
  double lo = 1e-6, hi = 60.0;
  if (!(R > ratio(lo) && R < ratio(hi))) throw ValidationError("energy differences do not fit a power law");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (ratio(mid) < R ? lo : hi) = mid;
  }
  Extrapolation e;
  e.beta = 0.5 * (lo + hi);
  const double C = d2 / (std::pow(x2, -e.beta) - std::pow(x3, -e.beta));
  e.Q_inf = Q[k + 2] - C * std::pow(x3, -e.beta);
  return e;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(12);
  return out;
}

/// label,param,n_dof,energy,rel_err,rel_err_sq
inline void write_study_csv(const ConvergenceStudy& s, const std::string& path) {
  auto out = open_csv(path);
  out << "label,param,n_dof,energy,rel_err,rel_err_sq\n";
  for (const auto& r : s.records)
    out << r.label << ',' << r.param << ',' << r.n_dof << ',' << r.energy << ',' << r.rel_err << ','
        << r.rel_err * r.rel_err << '\n';
}

inline void write_energy_csv(const EnergyReport& e, const std::string& path) {
  auto out = open_csv(path);
  out << "t,E\n";
  for (std::size_t i = 0; i < e.t.size(); ++i) out << e.t[i] << ',' << e.E[i] << '\n';
}

inline void write_density_csv(const std::vector<Point3>& points, double t, const std::vector<double>& values,
                              const std::string& path, bool append = false) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(12);
  if (!append) out << "x,y,z,t,value\n";
  for (std::size_t i = 0; i < points.size(); ++i)
    out << points[i][0] << ',' << points[i][1] << ',' << points[i][2] << ',' << t << ',' << values[i] << '\n';
}

}  // namespace tdbem

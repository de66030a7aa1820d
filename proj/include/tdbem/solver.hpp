#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tdbem/assembly.hpp"
#include "tdbem/error.hpp"

namespace tdbem {

/// Coefficients c_m^i of the space-time density, in the unknown ordering of
/// BlockToeplitzSystem: ((m-1) p + a) N_s + I.
struct DensitySolution {
  int p = 1;
  int n_space = 0;
  int n_steps = 0;
  double dt = 0.0;
  Eigen::VectorXd c;

  int block_size() const { return p * n_space; }
  auto group(int m) const { return c.segment(static_cast<Eigen::Index>(m - 1) * block_size(), block_size()); }
  double coefficient(int m, int a, int I) const {
    return c[(static_cast<Eigen::Index>(m - 1) * p + a) * n_space + I];
  }
};

enum class SolverMethod { automatic, block_lu, gmres, mot };
enum class Preconditioner { none, block_diagonal };

inline const char* to_string(SolverMethod m) {
  switch (m) {
    case SolverMethod::automatic: return "auto";
    case SolverMethod::block_lu: return "block_lu";
    case SolverMethod::gmres: return "gmres";
    case SolverMethod::mot: return "mot";
  }
  return "?";
}

inline SolverMethod parse_solver_method(const std::string& s) {
  if (s == "auto") return SolverMethod::automatic;
  if (s == "block_lu") return SolverMethod::block_lu;
  if (s == "gmres") return SolverMethod::gmres;
  if (s == "mot") return SolverMethod::mot;
  throw ValidationError("unknown solver method '" + s + "' (auto, block_lu, gmres, mot)");
}

struct SolverOptions {
  SolverMethod method = SolverMethod::automatic;
  double tol = 1e-9;
  int restart = 60;
  int max_iterations = 5000;
  Preconditioner preconditioner = Preconditioner::none;
  int direct_limit = 20000;  ///< automatic picks block LU up to this many unknowns
};

struct SolverReport {
  std::string method;
  int iterations = 0;
  double residual = 0.0;  ///< ||b - A c|| / ||b|| (0 for b = 0)
  double seconds = 0.0;
};

namespace detail {

inline DensitySolution make_solution(const BlockToeplitzSystem& sys, Eigen::VectorXd c) {
  DensitySolution s;
  s.p = sys.p;
  s.n_space = sys.n_space;
  s.n_steps = sys.n_steps();
  s.dt = sys.grid.dt;
  s.c = std::move(c);
  return s;
}

inline double relative_residual(const BlockToeplitzSystem& sys, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
  const double nb = b.norm();
  const double r = (b - sys.apply(c)).norm();
  return nb > 0.0 ? r / nb : r;
}

inline Eigen::PartialPivLU<Eigen::MatrixXd> factor_checked(const Eigen::MatrixXd& D, int step) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(D);
  const auto& U = lu.matrixLU();
  const double scale = std::max(D.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < U.rows(); ++i)
    if (!(std::abs(U(i, i)) > 1e-14 * scale))
      throw NumericalError("singular diagonal block at time step " + std::to_string(step));
  return lu;
}

}  // namespace detail

/// Direct solve of the block lower Hessenberg system sum_m V^{n-m} c_m = b^n.
///
/// Block Gaussian elimination without pivoting across blocks (partial
/// pivoting inside each diagonal block). Since only V^{-1} lies above the
/// diagonal, eliminating column k changes just column k+1 of the rows below,
/// so each pending row carries one update block and memory stays at
/// O((L + N) B^2).
inline std::pair<DensitySolution, SolverReport> solve_block_lu(const BlockToeplitzSystem& sys,
                                                               const Eigen::VectorXd& b) {
  const auto t0 = std::chrono::steady_clock::now();
  require(b.size() == sys.n_unknowns(), "right-hand side size does not match the system");
  const int N = sys.n_steps(), B = sys.block_size(), L = sys.l_max;
  const bool upper = sys.has_block(-1) && sys.block(-1).cwiseAbs().maxCoeff() > 0.0;
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(B, B);
  const Eigen::MatrixXd& Vm1 = upper ? sys.block(-1) : zero;

  Eigen::VectorXd y = b;
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> diag;
  diag.reserve(N);
  // carry[i] is the accumulated update to A(i, k) for the column k being eliminated
  std::vector<Eigen::MatrixXd> carry(N + 1);
  for (int k = 1; k <= N; ++k) {
    Eigen::MatrixXd D = sys.block(0);
    if (carry[k].size()) D += carry[k];
    carry[k].resize(0, 0);
    diag.push_back(detail::factor_checked(D, k));
    const auto& lu = diag.back();
    const Eigen::VectorXd w = lu.solve(y.segment((k - 1) * B, B));
    Eigen::MatrixXd X;
    if (upper && k < N) X = lu.solve(Vm1);
    for (int i = k + 1; i <= std::min(N, k + L); ++i) {
      Eigen::MatrixXd Aik = sys.block(i - k);
      if (carry[i].size()) Aik += carry[i];
      y.segment((i - 1) * B, B).noalias() -= Aik * w;
      if (upper && k < N) carry[i] = -Aik * X;
      else carry[i].resize(0, 0);
    }
  }
  Eigen::VectorXd c(b.size());
  for (int k = N; k >= 1; --k) {
    Eigen::VectorXd rhs = y.segment((k - 1) * B, B);
    if (upper && k < N) rhs.noalias() -= Vm1 * c.segment(k * B, B);
    c.segment((k - 1) * B, B) = diag[k - 1].solve(rhs);
  }
  SolverReport rep;
  rep.method = "block_lu";
  rep.residual = detail::relative_residual(sys, b, c);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {detail::make_solution(sys, std::move(c)), rep};
}

/// Forward block substitution for block lower triangular systems (V^{-1} = 0),
/// reusing one factorisation of V^0.
inline std::pair<DensitySolution, SolverReport> solve_mot(const BlockToeplitzSystem& sys, const Eigen::VectorXd& b) {
  const auto t0 = std::chrono::steady_clock::now();
  require(b.size() == sys.n_unknowns(), "right-hand side size does not match the system");
  require(!sys.has_block(-1) || sys.block(-1).cwiseAbs().maxCoeff() == 0.0,
          "marching-on-in-time needs V^{-1} = 0 (piecewise constant test functions)");
  const int N = sys.n_steps(), B = sys.block_size();
  const auto lu = detail::factor_checked(sys.block(0), 1);
  Eigen::VectorXd c(b.size());
  for (int n = 1; n <= N; ++n) {
    Eigen::VectorXd rhs = b.segment((n - 1) * B, B);
    for (int l = 1; l <= std::min(sys.l_max, n - 1); ++l) rhs.noalias() -= sys.block(l) * c.segment((n - l - 1) * B, B);
    c.segment((n - 1) * B, B) = lu.solve(rhs);
  }
  SolverReport rep;
  rep.method = "mot";
  rep.residual = detail::relative_residual(sys, b, c);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {detail::make_solution(sys, std::move(c)), rep};
}

/// Restarted GMRES on the block Toeplitz operator, right preconditioned so the
/// monitored residual is the true one.
inline std::pair<DensitySolution, SolverReport> solve_gmres(const BlockToeplitzSystem& sys, const Eigen::VectorXd& b,
                                                            const SolverOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  require(opt.tol > 0.0, "GMRES tolerance must be positive");
  require(opt.restart >= 1, "GMRES restart must be >= 1");
  require(b.size() == sys.n_unknowns(), "right-hand side size does not match the system");
  const int B = sys.block_size(), N = sys.n_steps();
  const Eigen::Index n = b.size();

  std::optional<Eigen::PartialPivLU<Eigen::MatrixXd>> pre;
  if (opt.preconditioner == Preconditioner::block_diagonal) pre = detail::factor_checked(sys.block(0), 1);
  auto precondition = [&](const Eigen::VectorXd& v) {
    if (!pre) return v;
    Eigen::VectorXd out(v.size());
    for (int k = 0; k < N; ++k) out.segment(k * B, B) = pre->solve(v.segment(k * B, B));
    return out;
  };

  SolverReport rep;
  rep.method = "gmres";
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  const double nb = b.norm();
  if (nb == 0.0) {
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {detail::make_solution(sys, x), rep};
  }
  double best = 1.0;
  const int m = opt.restart;
  Eigen::MatrixXd V(n, m + 1), H = Eigen::MatrixXd::Zero(m + 1, m);
  Eigen::VectorXd cs(m), sn(m), g(m + 1);
  while (rep.iterations < opt.max_iterations) {
    Eigen::VectorXd r = b - sys.apply(x);
    double beta = r.norm();
    best = std::min(best, beta / nb);
    if (beta / nb <= opt.tol) break;
    V.col(0) = r / beta;
    H.setZero();
    g.setZero();
    g[0] = beta;
    int j = 0;
    for (; j < m && rep.iterations < opt.max_iterations; ++j) {
      ++rep.iterations;
      Eigen::VectorXd w = sys.apply(precondition(V.col(j)));
      for (int i = 0; i <= j; ++i) {
        H(i, j) = V.col(i).dot(w);
        w -= H(i, j) * V.col(i);
      }
      H(j + 1, j) = w.norm();
      if (H(j + 1, j) > 0.0) V.col(j + 1) = w / H(j + 1, j);
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      const double den = std::hypot(H(j, j), H(j + 1, j));
      cs[j] = H(j, j) / den;
      sn[j] = H(j + 1, j) / den;
      H(j, j) = den;
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      best = std::min(best, std::abs(g[j + 1]) / nb);
      if (std::abs(g[j + 1]) / nb <= opt.tol) {
        ++j;
        break;
      }
    }
    const Eigen::VectorXd yk =
        H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    x += precondition(V.leftCols(j) * yk);
  }
  rep.residual = detail::relative_residual(sys, b, x);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (rep.residual > opt.tol * (1.0 + 1e-6))
    throw NumericalError("GMRES did not converge in " + std::to_string(rep.iterations) +
                         " iterations (best relative residual " + std::to_string(best) + ")");
  return {detail::make_solution(sys, std::move(x)), rep};
}

/// Dispatches on opt.method; automatic picks block LU below opt.direct_limit
/// unknowns and GMRES above.
inline std::pair<DensitySolution, SolverReport> solve(const BlockToeplitzSystem& sys, const Eigen::VectorXd& b,
                                                      const SolverOptions& opt = {}) {
  switch (opt.method) {
    case SolverMethod::block_lu: return solve_block_lu(sys, b);
    case SolverMethod::gmres: return solve_gmres(sys, b, opt);
    case SolverMethod::mot: return solve_mot(sys, b);
    case SolverMethod::automatic:
      return sys.n_unknowns() <= opt.direct_limit ? solve_block_lu(sys, b) : solve_gmres(sys, b, opt);
  }
  throw ValidationError("unknown solver method");
}

/// CSV with columns m, i, c (i is the composite local-time/space index).
inline void write_solution_csv(const DensitySolution& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "m,i,c\n";
  for (int m = 1; m <= s.n_steps; ++m)
    for (int i = 0; i < s.block_size(); ++i) out << m << ',' << i << ',' << s.group(m)[i] << '\n';
}

}  // namespace tdbem

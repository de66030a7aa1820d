#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tdbem/assembly.hpp"
#include "tdbem/rhs.hpp"
#include "tdbem/solver.hpp"

using namespace tdbem;

namespace {

// Random block Toeplitz Hessenberg system with a well conditioned diagonal block.
BlockToeplitzSystem synthetic(int B, int N, int L, bool hessenberg, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BlockToeplitzSystem s;
  s.grid = TimeGrid(0.5, N);
  s.p = 1;
  s.n_space = B;
  s.l_min = -1;
  s.l_max = L;
  for (int l = -1; l <= L; ++l) {
    Eigen::MatrixXd V = Eigen::MatrixXd::NullaryExpr(B, B, [&] { return u(rng); }) / (1.0 + l + 1);
    if (l == 0) V += 4.0 * B * Eigen::MatrixXd::Identity(B, B);
    if (l == -1 && !hessenberg) V.setZero();
    s.blocks.push_back(V);
  }
  return s;
}

const BlockToeplitzSystem& screen_system() {
  static const BlockToeplitzSystem sys = [] {
    const auto mesh = make_square_screen(2);
    QuadratureSpec spec;
    spec.estimate = false;
    return assemble_blocks(SpatialBasis(mesh, 0), TemporalBasis(2, TimeGrid(0.5, 8)), spec);
  }();
  return sys;
}

Eigen::VectorXd random_vector(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  return Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
}

}  // namespace

TEST(Solver, IdentitySystem) {
  BlockToeplitzSystem s;
  s.grid = TimeGrid(1.0, 5);
  s.n_space = 3;
  s.l_min = -1;
  s.l_max = 0;
  s.blocks = {Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Identity(3, 3)};
  const Eigen::VectorXd b = random_vector(15, 1);
  for (auto m : {SolverMethod::block_lu, SolverMethod::gmres, SolverMethod::mot}) {
    SolverOptions opt;
    opt.method = m;
    EXPECT_LT((solve(s, b, opt).first.c - b).norm(), 1e-14) << to_string(m);
  }
}

TEST(Solver, BlockLuMatchesDenseSolveOnSyntheticHessenberg) {
  const auto s = synthetic(5, 9, 3, true, 2);
  const Eigen::VectorXd b = random_vector(s.n_unknowns(), 3);
  const Eigen::VectorXd ref = s.dense().partialPivLu().solve(b);
  const auto [sol, rep] = solve_block_lu(s, b);
  EXPECT_LT((sol.c - ref).norm(), 1e-12 * ref.norm());
  EXPECT_LT(rep.residual, 1e-13);
}

TEST(Solver, ManufacturedSolutionOnAssembledScreen) {
  const auto& sys = screen_system();
  const Eigen::VectorXd c = random_vector(sys.n_unknowns(), 4);
  const Eigen::VectorXd b = sys.apply(c);
  const auto [sol, rep] = solve_block_lu(sys, b);
  EXPECT_LT((sol.c - c).norm() / c.norm(), 1e-10);
}

TEST(Solver, GmresAgreesWithBlockLu) {
  const auto& sys = screen_system();
  const Eigen::VectorXd b = random_vector(sys.n_unknowns(), 5);
  SolverOptions opt;
  opt.tol = 1e-10;
  const auto lu = solve_block_lu(sys, b).first;
  for (auto pre : {Preconditioner::none, Preconditioner::block_diagonal}) {
    opt.preconditioner = pre;
    const auto [gm, rep] = solve_gmres(sys, b, opt);
    EXPECT_LE(rep.residual, opt.tol);
    EXPECT_LT((gm.c - lu.c).norm() / lu.c.norm(), 10.0 * opt.tol);
  }
}

TEST(Solver, GmresReportsNonConvergence) {
  const auto s = synthetic(4, 6, 2, true, 6);
  const Eigen::VectorXd b = random_vector(s.n_unknowns(), 7);
  SolverOptions opt;
  opt.max_iterations = 2;
  opt.restart = 2;
  opt.tol = 1e-14;
  EXPECT_THROW(solve_gmres(s, b, opt), NumericalError);
}

TEST(Solver, SolutionIsLinearInTheData) {
  const auto& sys = screen_system();
  const Eigen::VectorXd b1 = random_vector(sys.n_unknowns(), 8), b2 = random_vector(sys.n_unknowns(), 9);
  const auto x1 = solve_block_lu(sys, b1).first.c, x2 = solve_block_lu(sys, b2).first.c;
  const auto x = solve_block_lu(sys, 2.0 * b1 - 3.0 * b2).first.c;
  EXPECT_LT((x - (2.0 * x1 - 3.0 * x2)).norm(), 1e-11 * x.norm());
}

namespace {

// Largest group norm among groups m with t_{m+1} <= 2, relative to the largest group norm.
double early_ratio(int p, double dt, TestKind kind) {
  const auto mesh = make_square_screen(2);
  const SpatialBasis space(mesh, 0);
  const int N = static_cast<int>(std::lround(5.0 / dt));
  const TemporalBasis time(p, TimeGrid(dt, N));
  QuadratureSpec spec;
  spec.estimate = false;
  const auto sys = assemble_blocks(space, time, spec, kind);
  const auto f = builtin_rhs("f1");
  const auto late = custom_rhs("late", [&](double t, const Point3& x) { return t < 2.0 ? 0.0 : f.f(t - 2.0, x); }, {2.0});
  const auto sol = solve_block_lu(sys, assemble_rhs(late, space, time, spec, kind)).first;
  double early = 0.0, all = 0.0;
  for (int m = 1; m <= N; ++m) {
    all = std::max(all, sol.group(m).norm());
    if ((m + 1) * dt <= 2.0 + 1e-12) early = std::max(early, sol.group(m).norm());
  }
  return early / all;
}

}  // namespace

TEST(Solver, DelayedDataLeavesEarlyGroupsZeroForTriangularSystems) {
  EXPECT_LE(early_ratio(1, 0.5, TestKind::piecewise_constant), 1e-8);
}

// The Galerkin system couples step n to n + 1, so the discrete solution sees a
// little of the future; the leak shrinks under time refinement.
TEST(Solver, GalerkinAcausalLeakShrinksWithTheTimeStep) {
  const double coarse = early_ratio(1, 0.5, TestKind::galerkin);
  const double fine = early_ratio(1, 0.25, TestKind::galerkin);
  EXPECT_LT(fine, 0.1 * coarse);
}

TEST(Solver, RepeatedSolvesAreBitwiseIdentical) {
  const auto& sys = screen_system();
  const Eigen::VectorXd b = random_vector(sys.n_unknowns(), 10);
  EXPECT_EQ((solve_block_lu(sys, b).first.c - solve_block_lu(sys, b).first.c).norm(), 0.0);
}

TEST(Solver, MarchingOnInTimeForLowerTriangularSystems) {
  const auto s = synthetic(4, 7, 3, false, 11);
  const Eigen::VectorXd b = random_vector(s.n_unknowns(), 12);
  const auto mot = solve_mot(s, b).first.c;
  const auto lu = solve_block_lu(s, b).first.c;
  EXPECT_LT((mot - lu).norm(), 1e-12 * lu.norm());
  EXPECT_THROW(solve_mot(synthetic(4, 7, 3, true, 11), b), ValidationError);
}

TEST(Solver, SingularDiagonalBlockIsReported) {
  auto s = synthetic(3, 4, 1, false, 13);
  s.block(0).setZero();
  try {
    solve_block_lu(s, random_vector(s.n_unknowns(), 14));
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("time step 1"), std::string::npos) << e.what();
  }
}

TEST(Solver, ParsesMethodNames) {
  EXPECT_EQ(parse_solver_method("gmres"), SolverMethod::gmres);
  EXPECT_THROW(parse_solver_method("cg"), ValidationError);
}

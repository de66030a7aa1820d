#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pair_oracle.hpp"
#include "tdbem/mesh.hpp"
#include "tdbem/quadrature.hpp"
#include "tdbem/temporal.hpp"

using namespace tdbem;

namespace {

std::array<Point3, 3> tri(const TriangleMesh& m, int t) { return m.corners(t); }

// I_{l,a,b}(r / dt) as a radial function
RadialFunction time_kernel(const RetardedTimeIntegral& table, int l, int a, int b, double dt) {
  RadialFunction f;
  f.width = dt;
  f.first = std::max(0, RetardedTimeIntegral::first_piece(l));
  for (int k = f.first; k < RetardedTimeIntegral::first_piece(l) + RetardedTimeIntegral::kPieces; ++k) {
    const auto c = table.piece(l, a, b, k);
    f.pieces.emplace_back(c.begin(), c.end());
  }
  return f;
}

const std::array<Point3, 3> unit_tri{Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 1, 0)};

}  // namespace

TEST(Classify, SharedVertexCount) {
  const auto m = make_square_screen(3);
  // triangles 0 and 1 form the lower-left cell
  EXPECT_EQ(classify_pair(m.triangles()[0], m.triangles()[0]).kind, PairClass::coincident);
  EXPECT_EQ(classify_pair(m.triangles()[0], m.triangles()[1]).kind, PairClass::edge_adjacent);
  int last = m.n_triangles() - 1;
  EXPECT_EQ(classify_pair(m.triangles()[0], m.triangles()[last]).kind, PairClass::separated);
  EXPECT_EQ(classify_pair(tri(m, 0), tri(m, 1)).kind, PairClass::edge_adjacent);
  int vertex_pairs = 0;
  for (int t = 0; t < m.n_triangles(); ++t)
    vertex_pairs += classify_pair(m.triangles()[0], m.triangles()[t]).kind == PairClass::vertex_adjacent;
  EXPECT_GT(vertex_pairs, 0);
}

TEST(IntegratePair, ZeroRadialFunctionGivesZero) {
  const ReferenceBasis b(1);
  RadialFunction zero{0.5, 0, {{0.0}, {0.0, 0.0}}};
  const auto r = integrate_pair(unit_tri, unit_tri, b, 0, b, 2, zero, QuadratureSpec{});
  EXPECT_EQ(r.value, 0.0);
}

TEST(IntegratePair, SeparatedMatchesTensorGauss) {
  const std::array<Point3, 3> ty{Point3(3, 0.2, 0.5), Point3(4, 0.1, 0.4), Point3(3.2, 1.1, 0.3)};
  const ReferenceBasis b0(0);
  const auto one = RadialFunction::constant(1.0, 100.0);
  QuadratureSpec spec;
  spec.tol = 1e-9;
  const double value = integrate_pair(unit_tri, ty, b0, 0, b0, 0, one, spec).value;
  const double ref = oracle::tensor_pair_integral(unit_tri, ty, 0, 0, 0, 0, [](double) { return 1.0; }, 40);
  EXPECT_NEAR(value / ref, 1.0, 1e-8);

  // higher shapes and a smooth polynomial radial function; the entry is small
  // from cancellation, so it is checked less tightly
  spec.tol = 1e-7;
  const ReferenceBasis b2(2);
  RadialFunction poly{100.0, 0, {{1.0, 30.0, -200.0}}};
  const double v2 = integrate_pair(unit_tri, ty, b2, 4, b2, 3, poly, spec).value;
  const double r2 = oracle::tensor_pair_integral(
      unit_tri, ty, 2, 4, 2, 3, [](double r) { return 1.0 + 0.3 * r - 0.02 * r * r; }, 40);
  EXPECT_NEAR(v2 / r2, 1.0, 1e-6);
}

TEST(IntegratePair, CoincidentSelfTermMatchesRelativeCoordinateOracle) {
  const ReferenceBasis b0(0);
  const auto one = RadialFunction::constant(1.0, 100.0);
  QuadratureSpec spec;
  spec.tol = 1e-9;
  const double value = integrate_pair(unit_tri, unit_tri, b0, 0, b0, 0, one, spec).value;
  const double ref = oracle::coplanar_pair_integral(unit_tri, unit_tri, 0, 0, 0, 0, one);
  EXPECT_NEAR(value / ref, 1.0, 1e-6);
}

TEST(IntegratePair, AllCoplanarClassesMatchOracleWithLightConeKernel) {
  const auto mesh = make_square_screen(2);
  const double dt = 0.5;
  const int p = 2;
  const TemporalBasis basis(p, TimeGrid(dt, 8));
  const RetardedTimeIntegral table(basis, -1, 4);
  const ReferenceBasis bq(2);
  QuadratureSpec spec;
  spec.tol = 1e-9;
  std::mt19937 rng(7);
  int checked[4] = {0, 0, 0, 0};
  for (int ty = 0; ty < mesh.n_triangles(); ++ty) {
    const auto pair = classify_pair(mesh.triangles()[0], mesh.triangles()[ty]);
    if (checked[static_cast<int>(pair.kind)] >= 2) continue;
    ++checked[static_cast<int>(pair.kind)];
    const int l = std::uniform_int_distribution<int>(-1, 3)(rng);
    const int a = rng() % p, b = rng() % p;
    const int i = rng() % bq.size(), j = rng() % bq.size();
    const auto f = time_kernel(table, l, a, b, dt);
    const double value = integrate_pair(tri(mesh, 0), tri(mesh, ty), bq, i, bq, j, f, spec).value;
    const double ref = oracle::coplanar_pair_integral(tri(mesh, 0), tri(mesh, ty), 2, i, 2, j, f);
    const double scale = std::max(std::abs(ref), 1e-6 * mesh.area(0) * mesh.area(ty));
    EXPECT_LT(std::abs(value - ref) / scale, 1e-6) << to_string(pair.kind) << " l=" << l << " ref=" << ref;
  }
  for (int c = 0; c < 4; ++c) EXPECT_GT(checked[c], 0);
}

TEST(IntegratePair, NonCoplanarAdjacentPairsConverge) {
  // convergence is algebraic here, so the reference is a fixed fine level
  const auto ico = make_icosahedron(1.0);
  const ReferenceBasis b1(1);
  RadialFunction f{0.5, 0, {{0.0, 0.0, 1.0}, {1.0, 2.0, -1.0}, {2.0, 0.0, 0.0}}};
  QuadratureSpec adaptive, fine;
  adaptive.tol = 1e-5;
  fine.estimate = false;
  fine.start_level = 3;
  bool edge = false, vertex = false;
  for (int t = 1; t < ico.n_triangles(); ++t) {
    const auto kind = classify_pair(ico.triangles()[0], ico.triangles()[t]).kind;
    if ((kind == PairClass::edge_adjacent && edge) || (kind == PairClass::vertex_adjacent && vertex) || kind == PairClass::separated)
      continue;
    (kind == PairClass::edge_adjacent ? edge : vertex) = true;
    const double a = integrate_pair(ico.corners(0), ico.corners(t), b1, 1, b1, 2, f, adaptive).value;
    const double b = integrate_pair(ico.corners(0), ico.corners(t), b1, 1, b1, 2, f, fine).value;
    EXPECT_NEAR(a, b, 1e-6 * std::abs(b)) << to_string(kind);
  }
  EXPECT_TRUE(edge && vertex);
}

// Some of these entries nearly cancel, so the check is normwise over the set,
// the way assembly controls its error. Level 2 is good to about 1e-5.
TEST(IntegratePair, SymmetricUnderSwap) {
  const auto ico = make_icosahedron(1.0);
  const ReferenceBasis b2(2);
  RadialFunction f{0.4, 0, {{0.0, 1.0}, {1.0, 0.5, -0.5}, {1.0}, {0.5, -0.5}}};
  QuadratureSpec spec;
  spec.estimate = false;
  spec.start_level = 2;
  std::vector<double> ab, ba;
  for (int t : {0, 1, 5, 9, 17}) {
    ab.push_back(integrate_pair(ico.corners(0), ico.corners(t), b2, 1, b2, 4, f, spec).value);
    ba.push_back(integrate_pair(ico.corners(t), ico.corners(0), b2, 4, b2, 1, f, spec).value);
  }
  double scale = 0.0;
  for (double v : ab) scale = std::max(scale, std::abs(v));
  for (std::size_t k = 0; k < ab.size(); ++k) EXPECT_NEAR(ab[k], ba[k], 3e-5 * scale) << k;
}

TEST(IntegratePair, TighterToleranceNeverWorsensEstimate) {
  const auto mesh = make_square_screen(2);
  const ReferenceBasis b1(1);
  RadialFunction f{0.5, 0, {{0.0, 0.0, 1.0}, {1.0, 2.0, -1.0}}};
  for (int t = 0; t < 4; ++t) {
    double previous = 1.0;
    for (double tol : {1e-3, 1e-4, 1e-5, 1e-6}) {
      QuadratureSpec spec;
      spec.tol = tol;
      spec.max_depth = 5;
      const double est = integrate_pair(tri(mesh, 0), tri(mesh, t), b1, 0, b1, 1, f, spec).error_estimate;
      EXPECT_LE(est, previous * (1 + 1e-12));
      previous = est;
    }
  }
}

TEST(IntegratePair, ThrowsWhenDepthBudgetIsExhausted) {
  QuadratureSpec spec;
  spec.tol = 1e-15;
  spec.max_depth = 1;
  spec.base_order = 2;
  const ReferenceBasis b0(0);
  const auto one = RadialFunction::constant(1.0, 100.0);
  try {
    integrate_pair(unit_tri, unit_tri, b0, 0, b0, 0, one, spec);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("estimate"), std::string::npos);
  }
}

TEST(IntegratePair, ConeAwareRuleBeatsObliviousRule) {
  // separated pairs on a fine screen, crossed by several light-cone circles
  const auto mesh = make_square_screen(4);
  const double dt = 0.15;
  const TemporalBasis basis(2, TimeGrid(dt, 20));
  const RetardedTimeIntegral table(basis, 0, 8);
  const ReferenceBasis b1(1);
  QuadratureSpec aware, oblivious;
  aware.estimate = oblivious.estimate = false;
  aware.start_level = oblivious.start_level = 0;
  oblivious.cone_splits = false;
  int wins = 0, total = 0;
  std::mt19937 rng(3);
  for (int s = 0; s < 20; ++s) {
    const int tx = rng() % mesh.n_triangles(), ty = rng() % mesh.n_triangles();
    if (classify_pair(mesh.triangles()[tx], mesh.triangles()[ty]).kind != PairClass::separated) continue;
    const double dist = ((mesh.corners(tx)[0] - mesh.corners(ty)[0])).norm();
    const int l = std::clamp(static_cast<int>(dist / dt) + 1, 0, 8);
    const auto f = time_kernel(table, l, 1, 0, dt);
    const double ref = oracle::coplanar_pair_integral(tri(mesh, tx), tri(mesh, ty), 1, 0, 1, 1, f, 1e-13);
    if (std::abs(ref) < 1e-9) continue;
    const double ea = std::abs(integrate_pair(tri(mesh, tx), tri(mesh, ty), b1, 0, b1, 1, f, aware).value - ref);
    const double eo = std::abs(integrate_pair(tri(mesh, tx), tri(mesh, ty), b1, 0, b1, 1, f, oblivious).value - ref);
    ++total;
    wins += ea * 10.0 <= eo;
  }
  ASSERT_GE(total, 5);
  EXPECT_GE(wins, 0.9 * total) << wins << "/" << total;
}

TEST(RhsCell, ZeroFunction) {
  const ReferenceBasis b(0);
  const auto v = integrate_rhs_cell(unit_tri, 0.0, 1.0, [](double, const Point3&) { return 0.0; },
                                    [](double) { return 1.0; }, b, 0, QuadratureSpec{});
  EXPECT_EQ(v, 0.0);
}

TEST(RhsCell, LinearInTimeAgainstHatDerivative) {
  // int t * d/dt hat_n dt = -dt for an interior hat; the constant shape is sqrt 2
  const double dt = 0.25;
  const TemporalBasis basis(1, TimeGrid(dt, 8));
  const int dof = 2;  // hat at t_3
  const auto [t0, t1] = basis.support(dof);
  const ReferenceBasis b(0);
  auto f = [](double t, const Point3&) { return t; };
  auto dg = [&](double t) { return basis.eval_derivative(dof, t); };
  double v = 0.0;
  v += integrate_rhs_cell(unit_tri, t0, t0 + dt, f, dg, b, 0, QuadratureSpec{});
  v += integrate_rhs_cell(unit_tri, t0 + dt, t1, f, dg, b, 0, QuadratureSpec{});
  EXPECT_NEAR(v, -dt * std::sqrt(2.0) * 0.5, 1e-13);
}

TEST(RhsCell, KinkSplitMatchesRefinedRule) {
  auto f4 = [](double t, const Point3& x) {
    return std::pow(std::sin(t), 5) * std::sqrt(std::abs(1.0 - t)) * std::cos(6.0 * x[0] + 0.5 * x[1] + 0.1 * x[2]);
  };
  const ReferenceBasis b(1);
  auto dg = [](double t) { return 1.0 - t; };
  const double kink[] = {1.0};
  QuadratureSpec spec;
  const double split = integrate_rhs_cell(unit_tri, 0.5, 1.5, f4, dg, b, 1, spec, kink);
  // reference: unsplit interval, 4x finer time rule, deep grading handled by many subintervals
  double ref = 0.0;
  const int n = 4 * 64;
  for (int s = 0; s < n; ++s) {
    const double a = 0.5 + s / double(n), c = 0.5 + (s + 1) / double(n);
    const double local_kink[] = {1.0};
    QuadratureSpec fine = spec;
    fine.kink_levels = 20;
    ref += integrate_rhs_cell(unit_tri, a, c, f4, dg, b, 1, fine, local_kink);
  }
  EXPECT_NEAR(split, ref, 1e-7 * std::max(1.0, std::abs(ref)));
}

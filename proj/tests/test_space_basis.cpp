#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "tdbem/gauss.hpp"
#include "tdbem/space_basis.hpp"

using namespace tdbem;

TEST(ReferenceBasis, ConstantNormalisation) {
  const auto b = reference_basis(0);
  ASSERT_EQ(b.size(), 1);
  EXPECT_NEAR(b.eval(0.2, 0.3)[0], std::sqrt(2.0), 1e-15);
  EXPECT_EQ(reference_basis(2).size(), 6);
}

TEST(ReferenceBasis, GramMatrixIsIdentity) {
  for (int q = 0; q <= 10; ++q) {
    const auto b = reference_basis(q);
    const auto rule = triangle_rule(q + 4);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(b.size(), b.size());
    std::vector<double> vals(b.size());
    for (int k = 0; k < rule.size(); ++k) {
      b.eval(rule.u[k], rule.v[k], vals);
      Eigen::Map<Eigen::VectorXd> phi(vals.data(), b.size());
      gram += rule.w[k] * phi * phi.transpose();
    }
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(b.size(), b.size())).cwiseAbs().maxCoeff(), 1e-12) << "q=" << q;
  }
}

TEST(ReferenceBasis, FiniteAtApex) {
  const auto b = reference_basis(6);
  for (double x : b.eval(0.0, 1.0)) EXPECT_TRUE(std::isfinite(x));
}

TEST(SpatialBasis, DofCounts) {
  EXPECT_EQ(global_dof_map(make_square_screen(2), 1).n_dofs(), 24);
  EXPECT_EQ(global_dof_map(make_icosahedron(1.0), 0).n_dofs(), 20);
  EXPECT_EQ(global_dof_map(make_square_screen(2), 6).n_dofs(), 224);
  const auto b = global_dof_map(make_square_screen(3), 2);
  EXPECT_EQ(b.dof(4, 3), 4 * 6 + 3);
  EXPECT_EQ(b.triangle_of(b.dof(4, 3)), 4);
}

TEST(SpatialBasis, PullbackEvaluation) {
  const auto basis = global_dof_map(make_icosahedron(1.0), 2);
  const auto ref = basis.reference();
  for (int t : {0, 7, 19}) {
    const auto c = basis.mesh().corners(t);
    const Point3 centroid = (c[0] + c[1] + c[2]) / 3.0;
    const auto vals = ref.eval(1.0 / 3.0, 1.0 / 3.0);
    for (int l = 0; l < ref.size(); ++l) EXPECT_NEAR(basis.eval_shape(basis.dof(t, l), centroid), vals[l], 1e-12);
  }
  const auto p0 = global_dof_map(make_square_screen(2), 0);
  EXPECT_NEAR(p0.eval_shape(0, p0.from_reference(0, 0.1, 0.2)), std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(p0.eval_shape(0, p0.from_reference(0, 0.6, 0.3)), std::sqrt(2.0), 1e-14);
  EXPECT_THROW(p0.eval_shape(0, Point3(0.4, 0.4, 0.0)), ValidationError);
}

TEST(SpatialBasis, PhysicalMassIsScaledIdentity) {
  const auto basis = global_dof_map(make_icosahedron(1.7), 3);
  const auto rule = triangle_rule(6);
  for (int t : {0, 11}) {
    const double area = basis.mesh().area(t);
    const int n = basis.local_count();
    Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < rule.size(); ++k) {
      const Point3 x = basis.from_reference(t, rule.u[k], rule.v[k]);
      Eigen::VectorXd phi(n);
      for (int l = 0; l < n; ++l) phi[l] = basis.eval_shape(basis.dof(t, l), x);
      mass += rule.w[k] * 2.0 * area * phi * phi.transpose();
    }
    EXPECT_LT((mass - 2.0 * area * Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SpatialBasis, PolynomialReproduction) {
  // L2 projection of a global polynomial of degree <= q is exact on every triangle.
  const auto basis = global_dof_map(make_square_screen(2), 3);
  auto f = [](const Point3& x) { return 1.0 - 2.0 * x.x() + x.x() * x.y() * x.y() + 3.0 * x.y() * x.y() * x.y(); };
  const auto rule = triangle_rule(8);
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const int n = basis.local_count();
  for (int t = 0; t < basis.mesh().n_triangles(); ++t) {
    std::vector<double> coef(n, 0.0), vals(n);
    for (int k = 0; k < rule.size(); ++k) {
      basis.reference().eval(rule.u[k], rule.v[k], vals);
      const double fx = f(basis.from_reference(t, rule.u[k], rule.v[k]));
      for (int l = 0; l < n; ++l) coef[l] += rule.w[k] * fx * vals[l];
    }
    for (int s = 0; s < 5; ++s) {
      double u = U(gen), v = U(gen);
      if (u + v > 1.0) { u = 1.0 - u; v = 1.0 - v; }
      basis.reference().eval(u, v, vals);
      double approx = 0.0;
      for (int l = 0; l < n; ++l) approx += coef[l] * vals[l];
      EXPECT_NEAR(approx, f(basis.from_reference(t, u, v)), 1e-12);
    }
  }
}

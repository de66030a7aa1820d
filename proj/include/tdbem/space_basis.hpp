#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tdbem/error.hpp"
#include "tdbem/mesh.hpp"

namespace tdbem {

/// L2-orthonormal polynomial basis of total degree q on the reference
/// triangle {(u, v) : u, v >= 0, u + v <= 1} (Dubiner/Koornwinder form).
///
/// Functions are ordered by total degree n = i + j, then by i; the function
/// (i, j) is c_ij * P_i(xi) ((1 - eta)/2)^i * P_j^{(2i+1,0)}(eta) in collapsed
/// coordinates, evaluated through homogenised recurrences so the apex v = 1
/// needs no special case.
class ReferenceBasis {
 public:
  explicit ReferenceBasis(int degree) : degree_(degree) {
    require(degree >= 0, "spatial degree must be >= 0");
    for (int n = 0; n <= degree; ++n)
      for (int i = 0; i <= n; ++i) {
        index_i_.push_back(i);
        index_j_.push_back(n - i);
        norm_.push_back(std::sqrt(2.0 * (2 * i + 1) * (n + 1)));
      }
  }

  int degree() const { return degree_; }
  int size() const { return static_cast<int>(index_i_.size()); }
  static int count(int degree) { return (degree + 1) * (degree + 2) / 2; }

  /// Values of all basis functions at (u, v); out.size() >= size().
  void eval(double u, double v, std::span<double> out) const {
    const int q = degree_;
    // Q_i = P_i(xi) * (1 - v)^i
    double qi[32];
    const double s = 1.0 - v, a = 2.0 * u + v - 1.0;
    qi[0] = 1.0;
    if (q >= 1) qi[1] = a;
    for (int i = 1; i < q; ++i) qi[i + 1] = ((2 * i + 1) * a * qi[i] - i * s * s * qi[i - 1]) / (i + 1);
    const double eta = 2.0 * v - 1.0;
    int idx = 0;
    double pj[32][32];  // pj[i][j] = P_j^{(2i+1,0)}(eta)
    for (int i = 0; i <= q; ++i) {
      const double alpha = 2 * i + 1;
      pj[i][0] = 1.0;
      if (q - i >= 1) pj[i][1] = (alpha + 1.0) + (alpha + 2.0) * (eta - 1.0) / 2.0;
      for (int n = 2; n <= q - i; ++n) {
        const double c = 2.0 * n + alpha;
        const double a1 = 2.0 * n * (n + alpha) * (c - 2.0);
        const double a2 = (c - 1.0) * (c * (c - 2.0) * eta + alpha * alpha);
        const double a3 = 2.0 * (n + alpha - 1.0) * (n - 1.0) * c;
        pj[i][n] = (a2 * pj[i][n - 1] - a3 * pj[i][n - 2]) / a1;
      }
    }
    for (int n = 0; n <= q; ++n)
      for (int i = 0; i <= n; ++i, ++idx) out[idx] = norm_[idx] * qi[i] * pj[i][n - i];
  }

  std::vector<double> eval(double u, double v) const {
    std::vector<double> out(size());
    eval(u, v, out);
    return out;
  }

 private:
  int degree_;
  std::vector<int> index_i_, index_j_;
  std::vector<double> norm_;
};

inline ReferenceBasis reference_basis(int degree) { return ReferenceBasis(degree); }

/// Discontinuous degree-q basis on a triangle mesh. Global dof index =
/// triangle * local_count + local.
class SpatialBasis {
 public:
  SpatialBasis(TriangleMesh mesh, int degree) : mesh_(std::move(mesh)), reference_(degree) {
    require(degree <= 20, "spatial degree above 20 is not supported");
  }

  const TriangleMesh& mesh() const { return mesh_; }
  const ReferenceBasis& reference() const { return reference_; }
  int degree() const { return reference_.degree(); }
  int local_count() const { return reference_.size(); }
  int n_dofs() const { return mesh_.n_triangles() * local_count(); }
  int dof(int triangle, int local) const { return triangle * local_count() + local; }
  int triangle_of(int dof) const { return dof / local_count(); }

  /// Reference coordinates (u, v) of a point in the plane of triangle t, and
  /// its distance from that plane.
  Eigen::Vector2d to_reference(int t, const Point3& x, double* off_plane = nullptr) const {
    const auto c = mesh_.corners(t);
    Eigen::Matrix<double, 3, 2> J;
    J.col(0) = c[1] - c[0];
    J.col(1) = c[2] - c[0];
    const Eigen::Vector2d uv = (J.transpose() * J).ldlt().solve(J.transpose() * (x - c[0]));
    if (off_plane) *off_plane = (c[0] + J * uv - x).norm();
    return uv;
  }

  Point3 from_reference(int t, double u, double v) const {
    const auto c = mesh_.corners(t);
    return c[0] + u * (c[1] - c[0]) + v * (c[2] - c[0]);
  }

  bool contains(int t, const Point3& x, double tol = 1e-10) const {
    double off = 0.0;
    const auto uv = to_reference(t, x, &off);
    const double scale = mesh_.triangle_diameter(t);
    return off <= tol * scale && uv[0] >= -tol && uv[1] >= -tol && uv[0] + uv[1] <= 1.0 + tol;
  }

  /// Shape function value at a physical point of the dof's own triangle.
  double eval_shape(int global_dof, const Point3& x) const {
    require(global_dof >= 0 && global_dof < n_dofs(), "dof out of range");
    const int t = triangle_of(global_dof);
    if (!contains(t, x)) throw ValidationError("point is outside the triangle of dof " + std::to_string(global_dof));
    const auto uv = to_reference(t, x);
    double vals[256];
    reference_.eval(uv[0], uv[1], {vals, 256});
    return vals[global_dof % local_count()];
  }

 private:
  TriangleMesh mesh_;
  ReferenceBasis reference_;
};

inline SpatialBasis global_dof_map(const TriangleMesh& mesh, int degree) { return SpatialBasis(mesh, degree); }

}  // namespace tdbem

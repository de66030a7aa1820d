#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tdbem/error.hpp"
#include "tdbem/mesh.hpp"
#include "tdbem/quadrature.hpp"
#include "tdbem/rhs.hpp"
#include "tdbem/space_basis.hpp"
#include "tdbem/temporal.hpp"

namespace tdbem {

/// The nonzero shifts V^l of the block Toeplitz space-time matrix.
///
/// Unknowns are ordered by time group m = 1..N_t, then local time index a,
/// then spatial dof I: index ((m-1) p + a) N_s + I. Row block n, column block
/// m of the full matrix is V^{n-m}.
struct BlockToeplitzSystem {
  TimeGrid grid;
  int p = 1;
  int q = 0;
  TestKind kind = TestKind::galerkin;
  int n_space = 0;
  int l_min = -1;
  int l_max = -1;
  std::vector<Eigen::MatrixXd> blocks;  // blocks[l - l_min]
  std::string mesh_hash;

  int block_size() const { return p * n_space; }
  int n_steps() const { return grid.n_steps; }
  int n_unknowns() const { return n_steps() * block_size(); }

  bool has_block(int l) const { return l >= l_min && l <= l_max; }

  const Eigen::MatrixXd& block(int l) const {
    require(has_block(l), "shift " + std::to_string(l) + " is outside [" + std::to_string(l_min) + ", " +
                              std::to_string(l_max) + "]");
    return blocks[l - l_min];
  }
  Eigen::MatrixXd& block(int l) { return const_cast<Eigen::MatrixXd&>(std::as_const(*this).block(l)); }

  /// Full-matrix product: y_n = sum_m V^{n-m} c_m.
  Eigen::VectorXd apply(const Eigen::VectorXd& c) const {
    require(c.size() == n_unknowns(), "vector size does not match the system");
    const int B = block_size(), N = n_steps();
    Eigen::VectorXd y = Eigen::VectorXd::Zero(c.size());
    for (int l = l_min; l <= l_max; ++l) {
      const auto& V = block(l);
      for (int n = std::max(1, 1 + l); n <= std::min(N, N + l); ++n)
        y.segment((n - 1) * B, B).noalias() += V * c.segment((n - l - 1) * B, B);
    }
    return y;
  }

  Eigen::MatrixXd dense() const {
    const int B = block_size(), N = n_steps();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_unknowns(), n_unknowns());
    for (int l = l_min; l <= l_max; ++l)
      for (int n = std::max(1, 1 + l); n <= std::min(N, N + l); ++n) A.block((n - 1) * B, (n - l - 1) * B, B, B) = block(l);
    return A;
  }

  /// Same blocks on a grid with a different number of steps.
  BlockToeplitzSystem with_steps(int n_steps) const {
    BlockToeplitzSystem s = *this;
    s.grid = TimeGrid(grid.dt, n_steps);
    return s;
  }
};

/// Largest shift whose retarded integral can be nonzero for a surface of
/// diameter diam: piece k = l - 2 starts at r = (l - 2) dt.
inline int last_shift(double diam, double dt) {
  return static_cast<int>(std::ceil(diam / dt - 1e-12)) + 1;
}

/// Bound on the nonzero shifts, ceil(diam / dt) + 2.
inline int shift_bound(double diam, double dt) { return static_cast<int>(std::ceil(diam / dt - 1e-12)) + 2; }

struct AssemblyStats {
  int pairs = 0;
  int reused = 0;  ///< pairs copied from a congruent pair
  int max_level = 0;
  double max_error_estimate = 0.0;
  double seconds = 0.0;
};

using AssemblyProgress = std::function<void(int done, int total)>;

namespace detail {

// Contracts pair moments with the retarded time integral: entries
// e[((l - l_min) p + a) p + b][i][j] for all shifts.
inline void contract_pair(const RadialMoments& M, const RetardedTimeIntegral& table, int p,
                          std::vector<double>& out) {
  const int nl = table.l_max() - table.l_min() + 1;
  const int nij = M.nx * M.ny;
  const int nm = M.degree + 1;
  out.assign(static_cast<std::size_t>(nl) * p * p * nij, 0.0);
  for (int l = table.l_min(); l <= table.l_max(); ++l) {
    const int k0 = std::max({0, RetardedTimeIntegral::first_piece(l), M.k_lo});
    const int k1 = std::min(RetardedTimeIntegral::first_piece(l) + RetardedTimeIntegral::kPieces - 1, M.k_hi);
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < p; ++b) {
        double* dst = out.data() + static_cast<std::size_t>(((l - table.l_min()) * p + a) * p + b) * nij;
        for (int k = k0; k <= k1; ++k) {
          const auto c = table.piece(l, a, b, k);
          const double* src = M.data.data() + M.index(k, 0, 0, 0);
          for (int ij = 0; ij < nij; ++ij) {
            double s = 0.0;
            for (int m = 0; m < nm; ++m) s += c[m] * src[ij * nm + m];
            dst[ij] += s;
          }
        }
      }
  }
}

// The 15 ordered corner distances of a triangle pair, quantised. Six points
// are fixed up to isometry by their distances, so equal keys mean congruent
// pairs with matching local vertex order, whose integrals coincide. A key
// split by rounding only costs a cache miss.
using CongruenceKey = std::array<std::int64_t, 15>;

inline CongruenceKey congruence_key(const std::array<Point3, 3>& a, const std::array<Point3, 3>& b, double unit) {
  const std::array<const Point3*, 6> v{&a[0], &a[1], &a[2], &b[0], &b[1], &b[2]};
  CongruenceKey key;
  int k = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) key[k++] = std::llround((*v[i] - *v[j]).norm() / unit * 1e9);
  return key;
}

}  // namespace detail

/// Galerkin blocks V^l for l = -1 .. last_shift(diam, dt).
///
/// Each triangle pair is integrated once for all shifts through its radial
/// moments; the error control compares the contracted entries of the pair
/// between two refinement levels. Pairs (Tx, Ty) and (Ty, Tx) share one
/// computation, and congruent pairs are integrated once. Quadrature failures
/// are rethrown with the pair attached.
inline BlockToeplitzSystem assemble_blocks(const SpatialBasis& space, const TemporalBasis& time,
                                           const QuadratureSpec& spec, TestKind kind = TestKind::galerkin,
                                           AssemblyStats* stats = nullptr, const AssemblyProgress& progress = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  const auto& mesh = space.mesh();
  const double dt = time.grid().dt;
  const int p = time.degree();
  const double diam = mesh_stats(mesh).diam;

  BlockToeplitzSystem sys;
  sys.grid = time.grid();
  sys.p = p;
  sys.q = space.degree();
  sys.kind = kind;
  sys.n_space = space.n_dofs();
  sys.l_min = -1;
  sys.l_max = last_shift(diam, dt);
  sys.mesh_hash = mesh.hash();
  const int B = sys.block_size();
  sys.blocks.assign(sys.l_max - sys.l_min + 1, Eigen::MatrixXd::Zero(B, B));

  const RetardedTimeIntegral table(time, sys.l_min, sys.l_max, kind);
  const int k_hi = static_cast<int>(std::floor(diam / dt));
  const int degree = 2 * p;
  const auto& ref = space.reference();
  const int nloc = ref.size();
  const int nt = mesh.n_triangles();

  AssemblyStats st;
  const int total = nt * (nt + 1) / 2;

  // keys used more than once are kept until their last use
  const double unit = mesh_stats(mesh).h;
  std::map<detail::CongruenceKey, int> uses;
  for (int tx = 0; tx < nt; ++tx)
    for (int ty = tx; ty < nt; ++ty) ++uses[detail::congruence_key(mesh.corners(tx), mesh.corners(ty), unit)];
  std::map<detail::CongruenceKey, std::vector<double>> kept;

  std::vector<double> fresh;
  for (int tx = 0; tx < nt; ++tx) {
    const auto cx = mesh.corners(tx);
    for (int ty = tx; ty < nt; ++ty) {
      const auto cy = mesh.corners(ty);
      const auto key = detail::congruence_key(cx, cy, unit);
      auto& left = uses[key];
      const std::vector<double>* entries = nullptr;
      if (auto it = kept.find(key); it != kept.end()) {
        entries = &it->second;
        ++st.reused;
      } else {
        const auto pair = classify_pair(mesh.triangles()[tx], mesh.triangles()[ty]);
        MomentResult res;
        try {
          res = radial_moments(cx, cy, pair, ref, ref, dt, 0, k_hi, degree, spec,
                               [&](const RadialMoments& M, std::vector<double>& out) {
                                 detail::contract_pair(M, table, p, out);
                               });
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " for triangle pair (" + std::to_string(tx) + ", " +
                               std::to_string(ty) + "), shifts " + std::to_string(sys.l_min) + ".." +
                               std::to_string(sys.l_max));
        }
        st.max_level = std::max(st.max_level, res.level);
        st.max_error_estimate = std::max(st.max_error_estimate, res.error_estimate);
        if (left > 1)
          entries = &(kept[key] = std::move(res.reduced));
        else {
          fresh = std::move(res.reduced);
          entries = &fresh;
        }
      }
      ++st.pairs;
      const auto& e = *entries;
      for (int l = sys.l_min; l <= sys.l_max; ++l) {
        auto& V = sys.block(l);
        for (int a = 0; a < p; ++a)
          for (int b = 0; b < p; ++b) {
            const double* src = e.data() + static_cast<std::size_t>(((l - sys.l_min) * p + a) * p + b) * nloc * nloc;
            for (int i = 0; i < nloc; ++i)
              for (int j = 0; j < nloc; ++j) {
                const double v = src[i * nloc + j];
                V(a * sys.n_space + space.dof(tx, i), b * sys.n_space + space.dof(ty, j)) = v;
                if (ty != tx) V(a * sys.n_space + space.dof(ty, j), b * sys.n_space + space.dof(tx, i)) = v;
              }
          }
      }
      if (--left == 0) kept.erase(key);
      if (progress) progress(st.pairs, total);
    }
  }
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (stats) *stats = st;
  return sys;
}

// ---------------------------------------------------------------------------
// Right-hand side

/// b^n_{a,I} = int int f(t, x) d/dt(test_{n,a})(t) psi_I(x) dx dt for
/// n = 1..N_t, stored in the unknown ordering of BlockToeplitzSystem.
///
/// Time integration runs interval by interval (split and graded at the
/// declared kinks); for each time node the spatial projections of f are
/// formed once and distributed to all test functions alive there.
inline Eigen::VectorXd assemble_rhs(const RhsSpec& rhs, const SpatialBasis& space, const TemporalBasis& time,
                                    const QuadratureSpec& spec, TestKind kind = TestKind::galerkin) {
  require(static_cast<bool>(rhs.f), "right-hand side has no function");
  const auto& mesh = space.mesh();
  const int p = time.degree(), N = time.grid().n_steps, Ns = space.n_dofs(), nloc = space.local_count();
  const double dt = time.grid().dt;
  const auto test = test_derivative_family(time, kind);

  // spatial rule per triangle: points and weight * shape values
  const auto base = triangle_rule(space.degree() / 2 + spec.base_order);
  const int split = 1 << std::max(0, rhs.spatial_refinement);
  std::vector<double> su, sv, sw;
  for (int r = 0; r < split; ++r)
    for (int c = 0; c < split - r; ++c)
      for (int up = 0; up < 2; ++up) {
        if (up && c == split - r - 1) continue;
        // sub-triangle corners in reference coordinates
        const double h = 1.0 / split;
        std::array<Eigen::Vector2d, 3> v;
        if (!up)
          v = {Eigen::Vector2d(c * h, r * h), Eigen::Vector2d((c + 1) * h, r * h), Eigen::Vector2d(c * h, (r + 1) * h)};
        else
          v = {Eigen::Vector2d((c + 1) * h, r * h), Eigen::Vector2d((c + 1) * h, (r + 1) * h),
               Eigen::Vector2d(c * h, (r + 1) * h)};
        for (int k = 0; k < base.size(); ++k) {
          const Eigen::Vector2d x = v[0] + base.u[k] * (v[1] - v[0]) + base.v[k] * (v[2] - v[0]);
          su.push_back(x[0]);
          sv.push_back(x[1]);
          sw.push_back(base.w[k] * h * h);
        }
      }
  const int nq = static_cast<int>(su.size());
  std::vector<Point3> xs(static_cast<std::size_t>(mesh.n_triangles()) * nq);
  std::vector<double> wpsi(static_cast<std::size_t>(mesh.n_triangles()) * nq * nloc);
  {
    std::vector<double> vals(nloc);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      const double jac = 2.0 * mesh.area(t);
      for (int k = 0; k < nq; ++k) {
        xs[static_cast<std::size_t>(t) * nq + k] = space.from_reference(t, su[k], sv[k]);
        space.reference().eval(su[k], sv[k], vals);
        for (int i = 0; i < nloc; ++i) wpsi[(static_cast<std::size_t>(t) * nq + k) * nloc + i] = sw[k] * jac * vals[i];
      }
    }
  }

  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N) * p * Ns);
  Eigen::VectorXd proj(Ns);
  std::vector<double> ts, tw;
  const int order = spec.base_order + p / 2 + 2;
  // interval j = [t_{j-1}, t_j]; test group n uses it for n = j (piece 0) and n = j - 1 (piece 1)
  for (int j = 1; j <= N + 1; ++j) {
    time_rule((j - 1) * dt, j * dt, rhs.kinks, order, spec.kink_levels, ts, tw);
    for (std::size_t node = 0; node < ts.size(); ++node) {
      const double t = ts[node];
      proj.setZero();
      for (int tri = 0; tri < mesh.n_triangles(); ++tri)
        for (int k = 0; k < nq; ++k) {
          const std::size_t pt = static_cast<std::size_t>(tri) * nq + k;
          const double fv = rhs.f(t, xs[pt]);
          if (fv == 0.0) continue;
          for (int i = 0; i < nloc; ++i) proj[space.dof(tri, i)] += fv * wpsi[pt * nloc + i];
        }
      if (proj.squaredNorm() == 0.0) continue;
      for (int n : {j, j - 1}) {
        if (n < 1 || n > N) continue;
        const double s = t / dt - n;
        for (int a = 0; a < p; ++a) {
          const double d = test[a].value(s) / dt;
          if (d == 0.0) continue;
          b.segment((static_cast<Eigen::Index>(n - 1) * p + a) * Ns, Ns) += tw[node] * d * proj;
        }
      }
    }
  }
  require(b.allFinite(), "right-hand side '" + rhs.name + "' produced non-finite values");
  return b;
}

// ---------------------------------------------------------------------------
// Block dump

inline const char* to_string(TestKind k) { return k == TestKind::galerkin ? "galerkin" : "piecewise_constant"; }

/// Writes one file per shift (row-major; raw little-endian doubles for
/// "bin", comma separated for "csv") plus blocks.json describing them.
inline void dump_blocks(const BlockToeplitzSystem& sys, const std::string& dir, const std::string& format = "bin") {
  require(format == "bin" || format == "csv", "block dump format must be bin or csv");
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["n_space"] = sys.n_space;
  meta["p"] = sys.p;
  meta["q"] = sys.q;
  meta["dt"] = sys.grid.dt;
  meta["n_steps"] = sys.grid.n_steps;
  meta["mesh_hash"] = sys.mesh_hash;
  meta["test"] = to_string(sys.kind);
  meta["l_min"] = sys.l_min;
  meta["l_max"] = sys.l_max;
  meta["format"] = format;
  meta["block_size"] = sys.block_size();
  for (int l = sys.l_min; l <= sys.l_max; ++l) {
    const std::string name = "V_l" + std::to_string(l) + "." + format;
    meta["files"].push_back(name);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> V = sys.block(l);
    const std::string path = (std::filesystem::path(dir) / name).string();
    if (format == "bin") {
      std::ofstream out(path, std::ios::binary);
      out.write(reinterpret_cast<const char*>(V.data()), static_cast<std::streamsize>(V.size() * sizeof(double)));
      if (!out) throw std::runtime_error("cannot write " + path);
    } else {
      std::ofstream out(path);
      out.precision(17);
      for (int r = 0; r < V.rows(); ++r)
        for (int c = 0; c < V.cols(); ++c) out << V(r, c) << (c + 1 < V.cols() ? ',' : '\n');
      if (!out) throw std::runtime_error("cannot write " + path);
    }
  }
  std::ofstream(std::filesystem::path(dir) / "blocks.json") << meta.dump(2) << "\n";
}

/// Reads a dump written by dump_blocks. If expected_hash is non-empty the
/// dump must belong to that geometry.
inline BlockToeplitzSystem load_blocks(const std::string& dir, const std::string& expected_hash = "") {
  std::ifstream in(std::filesystem::path(dir) / "blocks.json");
  if (!in) throw ValidationError("no blocks.json in " + dir);
  const auto meta = nlohmann::json::parse(in);
  BlockToeplitzSystem sys;
  sys.n_space = meta.at("n_space");
  sys.p = meta.at("p");
  sys.q = meta.at("q");
  sys.grid = TimeGrid(meta.at("dt").get<double>(), meta.at("n_steps").get<int>());
  sys.mesh_hash = meta.at("mesh_hash");
  sys.kind = meta.at("test") == "galerkin" ? TestKind::galerkin : TestKind::piecewise_constant;
  sys.l_min = meta.at("l_min");
  sys.l_max = meta.at("l_max");
  if (!expected_hash.empty() && expected_hash != sys.mesh_hash)
    throw ValidationError("block dump in " + dir + " was made for mesh " + sys.mesh_hash + ", not " + expected_hash);
  const std::string format = meta.at("format");
  const int B = sys.block_size();
  for (int l = sys.l_min; l <= sys.l_max; ++l) {
    const auto path = std::filesystem::path(dir) / ("V_l" + std::to_string(l) + "." + format);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> V(B, B);
    if (format == "bin") {
      std::ifstream f(path, std::ios::binary);
      f.read(reinterpret_cast<char*>(V.data()), static_cast<std::streamsize>(V.size() * sizeof(double)));
      if (!f) throw ValidationError("truncated block file " + path.string());
    } else {
      std::ifstream f(path);
      std::string line;
      for (int r = 0; r < B; ++r) {
        if (!std::getline(f, line)) throw ValidationError("truncated block file " + path.string());
        std::stringstream ss(line);
        std::string cell;
        for (int c = 0; c < B; ++c) {
          if (!std::getline(ss, cell, ',')) throw ValidationError("short row in " + path.string());
          V(r, c) = std::stod(cell);
        }
      }
    }
    sys.blocks.emplace_back(V);
  }
  return sys;
}

}  // namespace tdbem

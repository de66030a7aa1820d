#pragma once

// Configuration-driven runs behind the command line tool: single solves,
// p- and h-studies, the singular lab, plus manifests and SVG plots.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tdbem/assembly.hpp"
#include "tdbem/error.hpp"
#include "tdbem/mesh.hpp"
#include "tdbem/postprocess.hpp"
#include "tdbem/rhs.hpp"
#include "tdbem/singular_lab.hpp"
#include "tdbem/solver.hpp"

#ifndef TDBEM_VERSION
#define TDBEM_VERSION "0.1.0"
#endif

namespace tdbem {

inline constexpr const char* kVersion = TDBEM_VERSION;

// ---------------------------------------------------------------------------
// key = value configuration

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

/// Flat key = value text; '#' starts a comment. Later entries win.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& origin) {
    Config c;
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ValidationError(origin + ":" + std::to_string(no) + ": expected key = value, got '" + line + "'");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ValidationError(origin + ":" + std::to_string(no) + ": empty key");
      c.kv_[key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config " + path);
    return parse(in, path);
  }

  /// "key=value"
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos, "expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void merge(const Config& other) {
    for (const auto& [k, v] : other.kv_) kv_[k] = v;
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  const std::map<std::string, std::string>& entries() const { return kv_; }

  std::string str(const std::string& key, const std::string& fallback = "") const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double num(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return to_number(key, str(key));
  }

  int integer(const std::string& key, int fallback) const {
    const double v = num(key, fallback);
    require(v == std::floor(v), "config key " + key + " must be an integer");
    return static_cast<int>(v);
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config key " + key + " must be true or false");
  }

  /// "1,2,4" or "1..5"
  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    const auto v = str(key);
    if (v.empty()) return out;
    if (auto dots = v.find(".."); dots != std::string::npos) {
      const int a = static_cast<int>(to_number(key, v.substr(0, dots)));
      const int b = static_cast<int>(to_number(key, v.substr(dots + 2)));
      for (int i = a; i <= b; ++i) out.push_back(i);
      return out;
    }
    for (double x : num_list(key)) {
      require(x == std::floor(x), "config key " + key + " must list integers");
      out.push_back(static_cast<int>(x));
    }
    return out;
  }

  std::vector<double> num_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!trim(item).empty()) out.push_back(to_number(key, trim(item)));
    return out;
  }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : kv_) out << k << " = " << v << "\n";
  }

 private:
  static double to_number(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    // a/b fractions are allowed so that time steps such as 2/3 stay exact in configs
    if (auto slash = t.find('/'); slash != std::string::npos)
      return to_number(key, t.substr(0, slash)) / to_number(key, t.substr(slash + 1));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != t.size()) throw ValidationError("config key " + key + ": '" + text + "' is not a number");
    return v;
  }

  std::map<std::string, std::string> kv_;
};

// ---------------------------------------------------------------------------
// experiment description

enum class ExperimentKind { single, p_study, h_study, singular_lab };

inline ExperimentKind parse_kind(const std::string& s) {
  if (s == "single") return ExperimentKind::single;
  if (s == "p_study") return ExperimentKind::p_study;
  if (s == "h_study") return ExperimentKind::h_study;
  if (s == "singular_lab") return ExperimentKind::singular_lab;
  throw ValidationError("unknown kind '" + s + "' (single, p_study, h_study, singular_lab)");
}

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::single: return "single";
    case ExperimentKind::p_study: return "p_study";
    case ExperimentKind::h_study: return "h_study";
    case ExperimentKind::singular_lab: return "singular_lab";
  }
  return "?";
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::single;
  std::string mesh = "square:2";  ///< square:n, icosa:R or an OFF path
  int refine = 0;
  double dt = 0.5;
  double T = 4.0;
  int p = 1;
  int q = -1;  ///< -1: q = p
  std::vector<int> p_values;
  std::vector<int> h_ladder;  ///< square n, or icosahedron refinement levels
  int h_benchmark = 0;
  double dt_factor = 1.0;  ///< h-study time step: dt_factor / n (square), dt_factor 2^-k (icosahedron)
  std::string rhs = "f1";
  RhsParams rhs_params;
  TestKind test = TestKind::galerkin;
  QuadratureSpec quad;
  SolverOptions solver;
  std::string out = "out";
  int seed = 0;
  double max_minutes = 0.0;  ///< 0: no limit
  int fit_first = 1;
  std::vector<double> density_times;
  int density_samples = 0;  ///< points on the cross-section y = 0 of a square screen
  std::string cache;        ///< directory for reusable block dumps
  // singular lab
  double lab_a = 0.5;
  double lab_s = 0.0;
  lab::SweepMode lab_mode = lab::SweepMode::p;
  std::vector<int> lab_ladder;
  int lab_fixed = 4;
};

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "kind",       "mesh",         "mesh.refine",     "dt",          "T",           "p",
      "q",          "p_values",     "h.ladder",        "h.benchmark", "h.dt_factor", "rhs",
      "rhs.k",      "rhs.alpha",    "test",            "quad.tol",    "quad.max_depth", "quad.base_order",
      "solver",     "solver.tol",   "solver.restart",  "solver.max_iterations", "solver.preconditioner",
      "out",        "seed",         "max_minutes",     "fit_first",   "density.times", "density.samples",
      "cache",      "lab.fn",       "lab.s",           "lab.mode",    "lab.ladder",  "lab.fixed",
      "description"};
  return keys;
}

/// Validates and converts. Keys under "manifest." are informational and ignored,
/// so a manifest can be fed back as a config.
inline ExperimentConfig parse_experiment(const Config& c) {
  for (const auto& [k, v] : c.entries())
    if (!known_keys().count(k) && k.rfind("manifest.", 0) != 0) throw ValidationError("unknown config key '" + k + "'");
  ExperimentConfig e;
  e.kind = parse_kind(c.str("kind", "single"));
  e.mesh = c.str("mesh", e.mesh);
  e.refine = c.integer("mesh.refine", 0);
  e.dt = c.num("dt", e.dt);
  e.T = c.num("T", e.T);
  e.p = c.integer("p", e.p);
  e.q = c.integer("q", -1);
  e.p_values = c.int_list("p_values");
  e.h_ladder = c.int_list("h.ladder");
  e.h_benchmark = c.integer("h.benchmark", 0);
  e.dt_factor = c.num("h.dt_factor", 1.0);
  e.rhs = c.str("rhs", e.rhs);
  if (c.has("rhs.k")) {
    const auto k = c.num_list("rhs.k");
    require(k.size() == 3, "rhs.k needs three components");
    e.rhs_params.k = Point3(k[0], k[1], k[2]);
  }
  if (c.has("rhs.alpha")) e.rhs_params.alpha = c.num("rhs.alpha", 0.5);
  const auto test = c.str("test", "galerkin");
  require(test == "galerkin" || test == "piecewise_constant", "test must be galerkin or piecewise_constant");
  e.test = test == "galerkin" ? TestKind::galerkin : TestKind::piecewise_constant;
  e.quad.tol = c.num("quad.tol", e.quad.tol);
  e.quad.max_depth = c.integer("quad.max_depth", e.quad.max_depth);
  e.quad.base_order = c.integer("quad.base_order", e.quad.base_order);
  e.solver.method = parse_solver_method(c.str("solver", "auto"));
  e.solver.tol = c.num("solver.tol", e.solver.tol);
  e.solver.restart = c.integer("solver.restart", e.solver.restart);
  e.solver.max_iterations = c.integer("solver.max_iterations", e.solver.max_iterations);
  const auto pre = c.str("solver.preconditioner", "none");
  require(pre == "none" || pre == "block_diagonal", "solver.preconditioner must be none or block_diagonal");
  e.solver.preconditioner = pre == "none" ? Preconditioner::none : Preconditioner::block_diagonal;
  e.out = c.str("out", e.out);
  e.seed = c.integer("seed", 0);
  e.max_minutes = c.num("max_minutes", 0.0);
  e.fit_first = c.integer("fit_first", 1);
  e.density_times = c.num_list("density.times");
  e.density_samples = c.integer("density.samples", 0);
  e.cache = c.str("cache", "");

  require(e.dt > 0.0, "dt must be positive");
  require(e.T > 0.0, "T must be positive");
  require(e.max_minutes >= 0.0, "max_minutes must be non-negative");
  require(e.quad.tol > 0.0 && e.quad.max_depth >= 1 && e.quad.base_order >= 2, "invalid quadrature settings");
  require(e.fit_first >= 0, "fit_first must be non-negative");
  builtin_rhs(e.rhs, e.rhs_params);  // rejects unknown names early

  switch (e.kind) {
    case ExperimentKind::single:
      require(e.p >= 1, "p must be at least 1");
      break;
    case ExperimentKind::p_study:
      require(!e.p_values.empty(), "p_study needs a non-empty p_values range");
      require(e.p_values.size() >= 2, "p_study needs at least two degrees");
      for (int p : e.p_values) require(p >= 1, "p_values must be at least 1");
      require(std::is_sorted(e.p_values.begin(), e.p_values.end()), "p_values must be increasing");
      break;
    case ExperimentKind::h_study:
      require(!e.h_ladder.empty(), "h_study needs a non-empty h.ladder");
      require(e.p >= 1, "p must be at least 1");
      require(e.dt_factor > 0.0, "h.dt_factor must be positive");
      break;
    case ExperimentKind::singular_lab: {
      const auto fn = c.str("lab.fn", "pow:0.5");
      require(fn.rfind("pow:", 0) == 0, "lab.fn must be pow:<a>");
      Config tmp;
      tmp.set("a", fn.substr(4));
      e.lab_a = tmp.num("a", 0.5);
      e.lab_s = c.num("lab.s", 0.0);
      const auto mode = c.str("lab.mode", "p");
      require(mode == "p" || mode == "h", "lab.mode must be p or h");
      e.lab_mode = mode == "p" ? lab::SweepMode::p : lab::SweepMode::h;
      e.lab_ladder = c.int_list("lab.ladder");
      if (e.lab_ladder.empty())
        e.lab_ladder = e.lab_mode == lab::SweepMode::p ? std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8}
                                                        : std::vector<int>{4, 8, 16, 32, 64};
      e.lab_fixed = c.integer("lab.fixed", e.lab_mode == lab::SweepMode::p ? 4 : 1);
      break;
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// meshes

inline TriangleMesh build_mesh(const std::string& spec, int refine = 0) {
  TriangleMesh mesh = [&] {
    if (spec.rfind("square:", 0) == 0) {
      Config tmp;
      tmp.set("n", spec.substr(7));
      const int n = tmp.integer("n", 0);
      require(n >= 1, "square mesh needs n >= 1");
      return make_square_screen(n);
    }
    if (spec.rfind("icosa:", 0) == 0) {
      Config tmp;
      tmp.set("R", spec.substr(6));
      const double R = tmp.num("R", 1.0);
      require(R > 0.0, "icosahedron radius must be positive");
      return make_icosahedron(R);
    }
    if (spec == "icosa") return make_icosahedron(1.0);
    return load_off(spec.rfind("file:", 0) == 0 ? spec.substr(5) : spec);
  }();
  for (int k = 0; k < refine; ++k) mesh = refine_uniform(mesh);
  return mesh;
}

// ---------------------------------------------------------------------------
// time budget

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Budget {
 public:
  explicit Budget(double minutes) : limit_(minutes * 60.0), start_(std::chrono::steady_clock::now()) {}
  double elapsed() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }
  void check(const std::string& where) const {
    if (limit_ > 0.0 && elapsed() > limit_)
      throw BudgetExceeded("time budget of " + fmt(limit_ / 60.0) + " min exhausted during " + where);
  }

 private:
  static std::string fmt(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
  }
  double limit_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// runs

struct RunSetup {
  std::string label;
  double param = 0.0;
  TriangleMesh mesh;
  int p = 1;
  int q = 1;
  double dt = 0.5;
  int n_steps = 8;
};

struct RunResult {
  std::string label;
  double param = 0.0;
  double h = 0.0;
  std::string mesh_hash;
  BlockToeplitzSystem system;
  Eigen::VectorXd b;
  DensitySolution solution;
  EnergyReport energy;
  SolverReport solver;
  AssemblyStats assembly;
  bool from_cache = false;
};

inline int steps_for(double T, double dt) {
  const int n = static_cast<int>(std::lround(T / dt));
  require(n >= 1 && std::abs(n * dt - T) <= 1e-9 * std::max(1.0, T),
          "T must be a multiple of dt (T = " + std::to_string(T) + ", dt = " + std::to_string(dt) + ")");
  return n;
}

/// Directory name identifying a block family: geometry, degrees, time step,
/// test space and the quadrature controls.
inline std::string cache_key(const std::string& mesh_hash, int p, int q, double dt, TestKind kind,
                             const QuadratureSpec& quad) {
  std::ostringstream s;
  s << mesh_hash << "_p" << p << "_q" << q << "_dt" << std::setprecision(17) << dt << "_" << to_string(kind) << "_tol"
    << std::setprecision(6) << quad.tol << "_d" << quad.max_depth << "_b" << quad.base_order << "_v" << kVersion;
  return s.str();
}

using Log = std::function<void(const std::string&)>;

/// Blocks for one discretisation, from the cache when present.
inline BlockToeplitzSystem obtain_blocks(const SpatialBasis& space, const TemporalBasis& time,
                                         const QuadratureSpec& quad, TestKind kind, const std::string& cache,
                                         const Budget& budget, const Log& log, AssemblyStats* stats,
                                         bool* from_cache = nullptr) {
  std::string dir;
  if (!cache.empty()) {
    dir = (std::filesystem::path(cache) /
           cache_key(space.mesh().hash(), time.degree(), space.degree(), time.grid().dt, kind, quad))
              .string();
    if (std::filesystem::exists(std::filesystem::path(dir) / "blocks.json")) {
      if (from_cache) *from_cache = true;
      if (log) log("  blocks from cache " + dir);
      return load_blocks(dir, space.mesh().hash()).with_steps(time.grid().n_steps);
    }
  }
  if (from_cache) *from_cache = false;
  int last_percent = -1;
  auto sys = assemble_blocks(space, time, quad, kind, stats, [&](int done, int total) {
    budget.check("assembly");
    const int percent = 100 * done / total;
    if (log && percent / 10 != last_percent / 10) log("  assembly " + std::to_string(percent) + "%");
    last_percent = percent;
  });
  if (!dir.empty()) dump_blocks(sys, dir, "bin");
  return sys;
}

inline RunResult run_one(const ExperimentConfig& cfg, const RunSetup& setup, const Budget& budget, const Log& log) {
  RunResult r;
  r.label = setup.label;
  r.param = setup.param;
  r.h = mesh_stats(setup.mesh).h;
  r.mesh_hash = setup.mesh.hash();
  const SpatialBasis space(setup.mesh, setup.q);
  const TemporalBasis time(setup.p, TimeGrid(setup.dt, setup.n_steps));
  const auto t0 = std::chrono::steady_clock::now();
  r.system = obtain_blocks(space, time, cfg.quad, cfg.test, cfg.cache, budget, log, &r.assembly, &r.from_cache);
  const auto rhs = builtin_rhs(cfg.rhs, cfg.rhs_params);
  r.b = assemble_rhs(rhs, space, time, cfg.quad, cfg.test);
  budget.check("right-hand side");
  auto [sol, rep] = solve(r.system, r.b, cfg.solver);
  r.solution = std::move(sol);
  r.solver = rep;
  r.energy = energy_series(r.system, r.solution, r.b);
  if (log) {
    std::ostringstream s;
    s << "  " << r.label << ": " << r.system.n_unknowns() << " unknowns, " << r.system.l_max - r.system.l_min + 1
      << " blocks";
    if (!r.from_cache)
      s << ", " << r.assembly.pairs << " pairs (" << r.assembly.reused << " reused), max level "
        << r.assembly.max_level;
    s << ", " << rep.method << " residual " << rep.residual << ", Q = " << r.energy.Q << ", "
      << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s";
    log(s.str());
  }
  return r;
}

/// Points (x, 0, 0) on a square screen's cross-section, kept off the rim.
inline std::vector<Point3> cross_section(int samples) {
  std::vector<Point3> pts;
  for (int i = 0; i < samples; ++i) pts.emplace_back(-0.5 + (i + 0.5) / samples, 0.0, 0.0);
  return pts;
}

inline void write_run_outputs(const ExperimentConfig& cfg, const RunResult& r, const RunSetup& setup,
                              const std::filesystem::path& dir, const std::string& suffix) {
  write_energy_csv(r.energy, (dir / ("energy" + suffix + ".csv")).string());
  if (cfg.density_times.empty() || cfg.density_samples <= 0) return;
  const SpatialBasis space(setup.mesh, setup.q);
  const TemporalBasis time(setup.p, TimeGrid(setup.dt, setup.n_steps));
  const auto pts = cross_section(cfg.density_samples);
  bool append = false;
  for (double t : cfg.density_times) {
    write_density_csv(pts, t, evaluate_density(space, time, r.solution, t, pts),
                      (dir / ("density" + suffix + ".csv")).string(), append);
    append = true;
  }
}

// ---------------------------------------------------------------------------
// manifest

struct Manifest {
  Config config;  ///< the effective configuration
  std::string status = "complete";
  std::string note;
  std::vector<std::string> mesh_hashes;
  std::map<std::string, std::string> results;
};

/// key = value text: the configuration echo followed by manifest.* entries.
inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# tdbem run manifest; can be passed back with --config\n";
  Config echo;
  for (const auto& [k, v] : m.config.entries())
    if (k.rfind("manifest.", 0) != 0) echo.set(k, v);
  echo.write(out);
  out << "manifest.code_version = " << kVersion << "\n";
  std::string hashes;
  for (const auto& h : m.mesh_hashes) hashes += (hashes.empty() ? "" : ",") + h;
  out << "manifest.mesh_hash = " << hashes << "\n";
  out << "manifest.status = " << m.status << "\n";
  if (!m.note.empty()) out << "manifest.note = " << m.note << "\n";
  for (const auto& [k, v] : m.results) out << "manifest.result." << k << " = " << v << "\n";
}

inline std::string num_text(double v) {
  std::ostringstream s;
  s << std::setprecision(12) << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// studies

struct StudyOutcome {
  ConvergenceStudy study;
  double sensitivity_rate = std::numeric_limits<double>::quiet_NaN();  ///< against the second-best benchmark
  double Q_extrapolated = std::numeric_limits<double>::quiet_NaN();
  double extrapolated_rate = std::numeric_limits<double>::quiet_NaN();  ///< against Q_extrapolated
  std::vector<RunResult> runs;
  bool partial = false;
  std::string note;
};

/// Companion figure: the rate against an energy extrapolated from the last
/// three records, over the whole window including the best run.
inline void extrapolated_benchmark(StudyOutcome& o) {
  const auto& st = o.study;
  if (st.records.size() < 3) return;
  std::vector<double> fidelity, Q;
  for (const auto& r : st.records) {
    fidelity.push_back(st.abscissa == Abscissa::h ? 1.0 / r.param : r.param);
    Q.push_back(r.energy);
  }
  try {
    o.Q_extrapolated = extrapolate_energy(fidelity, Q).Q_inf;
    std::vector<double> x, y;
    for (std::size_t k = st.fit_first; k < st.records.size(); ++k) {
      x.push_back(st.abscissa == Abscissa::dof ? static_cast<double>(st.records[k].n_dof) : st.records[k].param);
      y.push_back(relative_error_energy(st.records[k].energy, o.Q_extrapolated));
    }
    if (x.size() >= 3) o.extrapolated_rate = fit_rate(x, y, st.abscissa);
  } catch (const ValidationError& e) {
    o.note += std::string(o.note.empty() ? "" : "; ") + e.what();
  }
}

/// rel_err against the last record; sensitivity against the one before it.
inline void finish_study(StudyOutcome& o) {
  auto& st = o.study;
  if (st.records.size() < 2) return;
  apply_benchmark(st, st.records.back().energy);
  try {
    fit_rate(st);
  } catch (const ValidationError& e) {
    st.rate = std::numeric_limits<double>::quiet_NaN();
    o.note += std::string(o.note.empty() ? "" : "; ") + e.what();
  }
  // second-best benchmark: records before it, same first point
  const double Q2 = st.records[st.records.size() - 2].energy;
  std::vector<double> x, y;
  for (std::size_t k = st.fit_first; k + 2 < st.records.size(); ++k) {
    const auto& r = st.records[k];
    const double e = relative_error_energy(r.energy, Q2);
    if (e <= 0.0) continue;
    x.push_back(st.abscissa == Abscissa::dof ? static_cast<double>(r.n_dof) : r.param);
    y.push_back(e);
  }
  if (x.size() >= 2) o.sensitivity_rate = fit_rate(x, y, st.abscissa);
  extrapolated_benchmark(o);
}

inline std::vector<RunSetup> study_setups(const ExperimentConfig& cfg) {
  std::vector<RunSetup> setups;
  if (cfg.kind == ExperimentKind::p_study || cfg.kind == ExperimentKind::single) {
    const auto mesh = build_mesh(cfg.mesh, cfg.refine);
    const std::vector<int> ps = cfg.kind == ExperimentKind::single ? std::vector<int>{cfg.p} : cfg.p_values;
    for (int p : ps) {
      RunSetup s{"p" + std::to_string(p), double(p), mesh, p, cfg.q < 0 ? p : cfg.q, cfg.dt, steps_for(cfg.T, cfg.dt)};
      setups.push_back(std::move(s));
    }
    return setups;
  }
  // h-study: the ladder followed by the benchmark
  std::vector<int> ladder = cfg.h_ladder;
  if (cfg.h_benchmark > 0) ladder.push_back(cfg.h_benchmark);
  const bool square = cfg.mesh.rfind("square", 0) == 0;
  const bool icosa = cfg.mesh.rfind("icosa", 0) == 0;
  require(square || icosa, "h_study needs mesh = square or icosa:<R>");
  for (int n : ladder) {
    if (square) require(n >= 1, "h.ladder entries are square subdivisions >= 1");
    else require(n >= 0, "h.ladder entries are refinement levels >= 0");
    auto mesh = square ? make_square_screen(n) : build_mesh(cfg.mesh, n);
    const double dt = square ? cfg.dt_factor / n : cfg.dt_factor * std::ldexp(1.0, -n);
    const double h = mesh_stats(mesh).h;
    setups.push_back({(square ? "n" : "r") + std::to_string(n), h, std::move(mesh), cfg.p, cfg.q < 0 ? cfg.p : cfg.q,
                      dt, steps_for(cfg.T, dt)});
  }
  return setups;
}

/// Runs a single solve or a study and writes every artifact into cfg.out.
/// Budget exhaustion leaves the completed runs on disk and a partial manifest;
/// the exception is rethrown afterwards.
inline StudyOutcome run_experiment(const ExperimentConfig& cfg, const Config& raw, const Log& log) {
  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  Budget budget(cfg.max_minutes);
  StudyOutcome o;
  o.study.name = raw.str("description", to_string(cfg.kind));
  o.study.abscissa = cfg.kind == ExperimentKind::h_study ? Abscissa::h : Abscissa::p;
  o.study.fit_first = cfg.fit_first;
  Manifest man;
  man.config = raw;

  const auto setups = study_setups(cfg);
  std::string interrupted;
  for (const auto& s : setups) {
    if (log) log("run " + s.label + " (p = " + std::to_string(s.p) + ", q = " + std::to_string(s.q) + ", dt = " +
                 num_text(s.dt) + ", " + std::to_string(s.n_steps) + " steps, " +
                 std::to_string(s.mesh.n_triangles()) + " triangles)");
    if (std::find(man.mesh_hashes.begin(), man.mesh_hashes.end(), s.mesh.hash()) == man.mesh_hashes.end())
      man.mesh_hashes.push_back(s.mesh.hash());
    try {
      budget.check("setup of " + s.label);
      auto r = run_one(cfg, s, budget, log);
      write_run_outputs(cfg, r, s, dir, setups.size() > 1 ? "_" + s.label : "");
      if (cfg.kind == ExperimentKind::single) write_solution_csv(r.solution, (dir / "solution.csv").string());
      // the form is sign definite; the study records the squared energy norm |Q|
      o.study.records.push_back({s.label, s.param, static_cast<long>(r.system.n_unknowns()), std::abs(r.energy.Q), 0.0});
      // keep the heavy parts only for single runs
      if (cfg.kind != ExperimentKind::single) r.system.blocks.clear();
      o.runs.push_back(std::move(r));
    } catch (const BudgetExceeded& e) {
      interrupted = e.what();
      break;
    }
  }

  if (cfg.kind != ExperimentKind::single) {
    finish_study(o);
    write_study_csv(o.study, (dir / "study.csv").string());
    std::ofstream sum(dir / "summary.txt");
    sum << std::setprecision(6);
    sum << "study " << o.study.name << "\n";
    sum << "benchmark " << (o.study.records.empty() ? "none" : o.study.records.back().label) << "\n";
    sum << "fit window from record " << o.study.fit_first << " (" << to_string(o.study.abscissa) << ")\n";
    sum << "rate " << o.study.rate << "\n";
    sum << "rate_vs_second_benchmark " << o.sensitivity_rate << "\n";
    sum << "Q_extrapolated " << o.Q_extrapolated << "\nrate_vs_extrapolated " << o.extrapolated_rate << "\n";
    man.results["rate"] = num_text(o.study.rate);
    man.results["rate_vs_second_benchmark"] = num_text(o.sensitivity_rate);
    man.results["Q_extrapolated"] = num_text(o.Q_extrapolated);
    man.results["rate_vs_extrapolated"] = num_text(o.extrapolated_rate);
  }
  if (!o.runs.empty()) man.results["Q_last"] = num_text(o.runs.back().energy.Q);
  if (!interrupted.empty()) {
    o.partial = true;
    man.status = "partial";
    man.note = interrupted + "; " + std::to_string(o.runs.size()) + " of " + std::to_string(setups.size()) +
               " runs completed" + (o.note.empty() ? "" : "; " + o.note);
  } else if (!o.note.empty()) {
    man.note = o.note;
  }
  write_manifest(man, dir / "manifest.txt");
  if (o.partial) throw BudgetExceeded(man.note);
  return o;
}

inline lab::RateExperiment run_singular_lab(const ExperimentConfig& cfg, const Config& raw) {
  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  const auto r = lab::lemma_rate_experiment(lab::PowerFunction{cfg.lab_a}, cfg.lab_s, cfg.lab_mode, cfg.lab_ladder,
                                            cfg.lab_fixed);
  auto out = open_csv((dir / "lab.csv").string());
  out << "param,error\n";
  for (std::size_t i = 0; i < r.params.size(); ++i) out << r.params[i] << ',' << r.errors[i] << '\n';
  Manifest man;
  man.config = raw;
  man.results["rate"] = num_text(r.rate);
  man.results["predicted"] = num_text(r.predicted);
  if (!r.warning.empty()) man.note = r.warning;
  write_manifest(man, dir / "manifest.txt");
  return r;
}

// ---------------------------------------------------------------------------
// SVG plots

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path);
  CsvTable t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(trim(c));
    return cells;
  };
  if (!std::getline(in, line) || trim(line).empty()) throw ValidationError(path + " is empty");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ValidationError(path + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                            std::to_string(cells.size()) + " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

/// Log-log line plot of a study CSV (param against rel_err) or a singular lab
/// CSV (param against error). Rows with a non-positive value cannot be drawn
/// on log axes and are left out; at least two drawable rows are required.
inline std::string loglog_svg(const CsvTable& t, const std::string& title) {
  const int cx = t.column("param");
  int cy = t.column("rel_err");
  if (cy < 0) cy = t.column("error");
  require(cx >= 0 && cy >= 0, "CSV needs a param column and a rel_err or error column");
  std::vector<double> xs, ys;
  int skipped = 0;
  for (const auto& row : t.rows) {
    double x = 0.0, y = 0.0;
    try {
      x = std::stod(row[cx]);
      y = std::stod(row[cy]);
    } catch (const std::exception&) {
      throw ValidationError("malformed number in CSV row '" + row[cx] + "," + row[cy] + "'");
    }
    if (!(x > 0.0 && y > 0.0)) {
      ++skipped;
      continue;
    }
    xs.push_back(x);
    ys.push_back(y);
  }
  require(xs.size() >= 2, "need at least two rows with positive values to plot");

  auto decades = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    double a = std::floor(std::log10(*lo)), b = std::ceil(std::log10(*hi));
    if (b <= a) b = a + 1;
    return std::pair{a, b};
  };
  const auto [x0, x1] = decades(xs);
  const auto [y0, y1] = decades(ys);
  const double W = 480, H = 360, L = 70, R = 20, Tm = 40, B = 50;
  auto px = [&](double x) { return L + (std::log10(x) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (std::log10(y) - y0) / (y1 - y0) * (H - Tm - B); };

  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << title << "</text>\n";
  s << "<g stroke=\"#ccc\" stroke-width=\"1\">\n";
  for (double d = x0; d <= x1 + 1e-9; d += 1)
    s << "<line x1=\"" << px(std::pow(10.0, d)) << "\" y1=\"" << Tm << "\" x2=\"" << px(std::pow(10.0, d))
      << "\" y2=\"" << H - B << "\"/>\n";
  for (double d = y0; d <= y1 + 1e-9; d += 1)
    s << "<line x1=\"" << L << "\" y1=\"" << py(std::pow(10.0, d)) << "\" x2=\"" << W - R << "\" y2=\""
      << py(std::pow(10.0, d)) << "\"/>\n";
  s << "</g>\n";
  s << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (double d = x0; d <= x1 + 1e-9; d += 1)
    s << "<text x=\"" << px(std::pow(10.0, d)) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">1e"
      << static_cast<int>(d) << "</text>\n";
  for (double d = y0; d <= y1 + 1e-9; d += 1)
    s << "<text x=\"" << L - 6 << "\" y=\"" << py(std::pow(10.0, d)) + 4 << "\" text-anchor=\"end\">1e"
      << static_cast<int>(d) << "</text>\n";
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << t.header[cx] << "</text>\n";
  s << "<text x=\"16\" y=\"" << (Tm + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (Tm + H - B) / 2 << ")\">" << t.header[cy] << "</text>\n";
  s << "</g>\n";
  s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) s << (i ? " " : "") << px(xs[i]) << ',' << py(ys[i]);
  s << "\"/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i)
    s << "<circle class=\"marker\" cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i]) << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
  if (skipped > 0)
    s << "<text x=\"" << W - R << "\" y=\"" << Tm - 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
      << "font-size=\"10\">" << skipped << " row(s) with zero value not drawn</text>\n";
  s << "</svg>\n";
  return s.str();
}

inline void emit_plot(const std::string& csv_path, const std::string& svg_path) {
  const auto t = read_csv(csv_path);
  require(t.rows.size() >= 2, csv_path + " needs at least two data rows");
  const auto svg = loglog_svg(t, std::filesystem::path(csv_path).stem().string());
  std::ofstream out(svg_path);
  if (!out) throw std::runtime_error("cannot write " + svg_path);
  out << svg;
}

}  // namespace tdbem

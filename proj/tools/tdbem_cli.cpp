// tdbem: command line front end.
//
//   tdbem mesh gen --shape square --n 2 -o screen.off
//   tdbem mesh info screen.off
//   tdbem assemble --preset screen_f1_p_study --p 3 -o blocks_p3
//   tdbem solve --config run.cfg --set dt=0.25
//   tdbem study --preset screen_f1_p_study
//   tdbem singular-lab --fn pow:0.5 --s 0 --mode p
//   tdbem plot out/study.csv -o out/study.svg
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 time budget
// exhausted (partial outputs and manifest are written), 1 anything else.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tdbem/experiment.hpp"

using namespace tdbem;
namespace fs = std::filesystem;

namespace {

#ifndef TDBEM_PRESET_DIR
#define TDBEM_PRESET_DIR "presets"
#endif

struct Overrides {
  std::string config;
  std::string preset;
  std::vector<std::string> sets;
  std::optional<std::string> out, rhs, mesh, p_values, cache;
  std::optional<int> p, q;
  std::optional<double> dt, T, max_minutes;
};

void add_run_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "key = value configuration file (a manifest works too)");
  app->add_option("--preset", o.preset, "preset name from the presets directory");
  app->add_option("--set", o.sets, "key=value override, repeatable");
  app->add_option("-o,--out", o.out, "output directory");
  app->add_option("--p", o.p, "polynomial degree in time (and in space unless --q)");
  app->add_option("--q", o.q, "polynomial degree in space");
  app->add_option("--dt", o.dt, "time step");
  app->add_option("--T", o.T, "final time");
  app->add_option("--rhs", o.rhs, "right-hand side (f1, f2, f3, f4, icosa_f2, icosa_f3, zero)");
  app->add_option("--mesh", o.mesh, "square:<n>, icosa:<R> or an OFF file");
  app->add_option("--p-values", o.p_values, "degrees of a p-study, e.g. 1..5 or 1,2,4");
  app->add_option("--cache", o.cache, "directory for reusable block dumps");
  app->add_option("--max-minutes", o.max_minutes, "time budget; 0 means none");
}

fs::path find_preset(const std::string& name) {
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("TDBEM_PRESETS")) dirs.emplace_back(env);
  dirs.emplace_back(TDBEM_PRESET_DIR);
  dirs.emplace_back("presets");
  for (const auto& d : dirs) {
    const auto path = d / (name + ".cfg");
    if (fs::exists(path)) return path;
  }
  throw ValidationError("preset '" + name + "' not found (looked in $TDBEM_PRESETS, " + std::string(TDBEM_PRESET_DIR) +
                        ", ./presets)");
}

// preset < config file < --set < dedicated flags
Config effective_config(const Overrides& o) {
  Config c;
  if (!o.preset.empty()) c.merge(Config::load(find_preset(o.preset).string()));
  if (!o.config.empty()) c.merge(Config::load(o.config));
  for (const auto& s : o.sets) c.set(s);
  auto put = [&](const char* key, const auto& v) {
    if (v) {
      std::ostringstream s;
      s << std::setprecision(17) << *v;
      c.set(key, s.str());
    }
  };
  put("out", o.out);
  put("rhs", o.rhs);
  put("mesh", o.mesh);
  put("p_values", o.p_values);
  put("cache", o.cache);
  put("p", o.p);
  put("q", o.q);
  put("dt", o.dt);
  put("T", o.T);
  put("max_minutes", o.max_minutes);
  return c;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

void print_study(const StudyOutcome& o) {
  std::cout << std::setprecision(6);
  std::cout << "label,param,n_dof,energy,rel_err\n";
  for (const auto& r : o.study.records)
    std::cout << r.label << ',' << r.param << ',' << r.n_dof << ',' << r.energy << ',' << r.rel_err << '\n';
  std::cout << "rate " << o.study.rate << " (against " << o.study.records.back().label << ")\n";
  std::cout << "rate_vs_second_benchmark " << o.sensitivity_rate << "\n";
  std::cout << "rate_vs_extrapolated " << o.extrapolated_rate << " (Q_inf " << o.Q_extrapolated << ")\n";
}

int cmd_mesh_gen(const std::string& shape, int n, double radius, int refine, const std::string& out) {
  TriangleMesh mesh = shape == "square" ? make_square_screen(n)
                      : shape == "icosa" ? make_icosahedron(radius)
                                         : throw ValidationError("--shape must be square or icosa");
  for (int k = 0; k < refine; ++k) mesh = refine_uniform(mesh);
  save_off(mesh, out);
  std::cout << out << ": " << mesh.n_triangles() << " triangles, " << mesh.n_vertices() << " vertices, hash "
            << mesh.hash() << "\n";
  return 0;
}

int cmd_mesh_info(const std::string& path) {
  const auto mesh = load_off(path);
  const auto st = mesh_stats(mesh);
  std::cout << "triangles " << mesh.n_triangles() << "\n"
            << "vertices " << mesh.n_vertices() << "\n"
            << "edges " << mesh.n_edges() << "\n"
            << "h " << st.h << "\n"
            << "diameter " << st.diam << "\n"
            << "quasi_uniformity " << st.quasi_uniformity << "\n"
            << "hash " << mesh.hash() << "\n";
  return 0;
}

int cmd_assemble(const Overrides& o, const std::string& format) {
  Config raw = effective_config(o);
  raw.set("kind", "single");
  const auto cfg = parse_experiment(raw);
  const auto mesh = build_mesh(cfg.mesh, cfg.refine);
  const SpatialBasis space(mesh, cfg.q < 0 ? cfg.p : cfg.q);
  const TemporalBasis time(cfg.p, TimeGrid(cfg.dt, steps_for(cfg.T, cfg.dt)));
  AssemblyStats st;
  const auto sys = obtain_blocks(space, time, cfg.quad, cfg.test, cfg.cache, Budget(cfg.max_minutes), log_line, &st);
  const fs::path dir(cfg.out);
  dump_blocks(sys, (dir / "blocks").string(), format);
  Manifest man;
  man.config = raw;
  man.mesh_hashes = {mesh.hash()};
  man.results["blocks"] = std::to_string(sys.l_max - sys.l_min + 1);
  man.results["block_size"] = std::to_string(sys.block_size());
  write_manifest(man, dir / "manifest.txt");
  std::cout << "shifts " << sys.l_min << ".." << sys.l_max << ", block size " << sys.block_size() << ", "
            << st.pairs << " pairs (" << st.reused << " reused), max level " << st.max_level << ", "
            << st.seconds << " s\n";
  return 0;
}

int cmd_solve(const Overrides& o, const std::string& blocks) {
  Config raw = effective_config(o);
  raw.set("kind", "single");
  const auto cfg = parse_experiment(raw);
  if (blocks.empty()) {
    const auto res = run_experiment(cfg, raw, log_line);
    const auto& r = res.runs.front();
    std::cout << std::setprecision(10) << "Q " << r.energy.Q << "\nenergy_norm " << std::sqrt(std::abs(r.energy.Q))
              << "\nE(T) " << r.energy.E.back() << "\nresidual " << r.solver.residual << "\n";
    return 0;
  }
  // solve against a dumped block family
  const auto mesh = build_mesh(cfg.mesh, cfg.refine);
  const int N = steps_for(cfg.T, cfg.dt);
  const auto sys = load_blocks(blocks, mesh.hash()).with_steps(N);
  require(std::abs(sys.grid.dt - cfg.dt) <= 1e-12 * cfg.dt, "dumped blocks use dt = " + std::to_string(sys.grid.dt));
  require(sys.p == cfg.p, "dumped blocks use p = " + std::to_string(sys.p));
  const SpatialBasis space(mesh, sys.q);
  const TemporalBasis time(sys.p, TimeGrid(cfg.dt, N));
  const auto b = assemble_rhs(builtin_rhs(cfg.rhs, cfg.rhs_params), space, time, cfg.quad, sys.kind);
  const auto [sol, rep] = solve(sys, b, cfg.solver);
  const auto energy = energy_series(sys, sol, b);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_solution_csv(sol, (dir / "solution.csv").string());
  write_energy_csv(energy, (dir / "energy.csv").string());
  Manifest man;
  man.config = raw;
  man.config.set("manifest.blocks", blocks);
  man.mesh_hashes = {mesh.hash()};
  man.results["Q_last"] = num_text(energy.Q);
  write_manifest(man, dir / "manifest.txt");
  std::cout << std::setprecision(10) << "Q " << energy.Q << "\nE(T) " << energy.E.back() << "\nresidual "
            << rep.residual << "\n";
  return 0;
}

int report_lab(const lab::RateExperiment& r) {
  std::cout << std::setprecision(6) << "param,error\n";
  for (std::size_t i = 0; i < r.params.size(); ++i) std::cout << r.params[i] << ',' << r.errors[i] << '\n';
  std::cout << "rate " << r.rate << "\npredicted " << r.predicted << "\n";
  if (!r.warning.empty()) std::cout << "warning: " << r.warning << "\n";
  return 0;
}

int cmd_study(const Overrides& o) {
  const Config raw = effective_config(o);
  const auto cfg = parse_experiment(raw);
  if (cfg.kind == ExperimentKind::singular_lab) return report_lab(run_singular_lab(cfg, raw));
  require(cfg.kind == ExperimentKind::p_study || cfg.kind == ExperimentKind::h_study,
          "study needs kind = p_study, h_study or singular_lab");
  const auto res = run_experiment(cfg, raw, log_line);
  print_study(res);
  const auto csv = (fs::path(cfg.out) / "study.csv").string();
  try {
    emit_plot(csv, (fs::path(cfg.out) / "study.svg").string());
  } catch (const ValidationError& e) {
    log_line(std::string("no plot: ") + e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time Galerkin boundary elements for the retarded single layer equation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto* mesh = app.add_subcommand("mesh", "generate or inspect surface meshes");
  mesh->require_subcommand(1);
  std::string shape = "square", mesh_out = "mesh.off", mesh_file;
  int n = 2, refine = 0;
  double radius = 1.0;
  auto* gen = mesh->add_subcommand("gen", "write a built-in mesh as OFF");
  gen->add_option("--shape", shape, "square or icosa")->check(CLI::IsMember({"square", "icosa"}));
  gen->add_option("--n", n, "subdivisions per side of the square screen")->check(CLI::PositiveNumber);
  gen->add_option("--radius", radius, "icosahedron circumradius")->check(CLI::PositiveNumber);
  gen->add_option("--refine", refine, "uniform refinements")->check(CLI::NonNegativeNumber);
  gen->add_option("-o,--out", mesh_out, "OFF file to write");
  auto* info = mesh->add_subcommand("info", "print size, mesh width and hash of an OFF file");
  info->add_option("file", mesh_file, "OFF file")->required();

  Overrides o;
  std::string format = "bin", blocks;
  auto* assemble = app.add_subcommand("assemble", "assemble and dump the Toeplitz blocks of one discretisation");
  add_run_options(assemble, o);
  assemble->add_option("--format", format, "dump format")->check(CLI::IsMember({"bin", "csv"}));
  auto* solve_cmd = app.add_subcommand("solve", "single run: assemble, solve, write energies and coefficients");
  add_run_options(solve_cmd, o);
  solve_cmd->add_option("--blocks", blocks, "use dumped blocks instead of assembling");
  auto* study = app.add_subcommand("study", "p-study, h-study or singular lab from a config");
  add_run_options(study, o);

  Overrides lab_o;
  std::optional<std::string> fn, lab_mode, lab_ladder;
  std::optional<double> lab_s;
  std::optional<int> lab_fixed;
  auto* lab_cmd = app.add_subcommand("singular-lab", "best-approximation rates of y^a in H^s(0, 1)");
  lab_cmd->add_option("--config", lab_o.config, "key = value configuration file");
  lab_cmd->add_option("--preset", lab_o.preset, "preset name from the presets directory");
  lab_cmd->add_option("--set", lab_o.sets, "key=value override, repeatable");
  lab_cmd->add_option("--fn", fn, "pow:<a>");
  lab_cmd->add_option("--s", lab_s, "Sobolev order in [-1, 1]");
  lab_cmd->add_option("--mode", lab_mode, "p or h sweep")->check(CLI::IsMember({"p", "h"}));
  lab_cmd->add_option("--ladder", lab_ladder, "degrees (p) or element counts (h), e.g. 1..8");
  lab_cmd->add_option("--fixed", lab_fixed, "element count (p sweep) or degree (h sweep)");
  lab_cmd->add_option("-o,--out", lab_o.out, "output directory");

  std::string plot_csv, plot_svg;
  auto* plot = app.add_subcommand("plot", "log-log SVG of a study or singular lab CSV");
  plot->add_option("csv", plot_csv, "CSV file")->required();
  plot->add_option("-o,--out", plot_svg, "SVG file (default: next to the CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_mesh_gen(shape, n, radius, refine, mesh_out);
    if (info->parsed()) return cmd_mesh_info(mesh_file);
    if (assemble->parsed()) return cmd_assemble(o, format);
    if (solve_cmd->parsed()) return cmd_solve(o, blocks);
    if (study->parsed()) return cmd_study(o);
    if (lab_cmd->parsed()) {
      Config raw = effective_config(lab_o);
      if (!raw.has("kind")) raw.set("kind", "singular_lab");
      require(raw.str("kind") == "singular_lab", "singular-lab needs kind = singular_lab");
      if (!raw.has("out")) raw.set("out", "lab");
      if (fn) raw.set("lab.fn", *fn);
      if (lab_s) raw.set("lab.s", num_text(*lab_s));
      if (lab_mode) raw.set("lab.mode", *lab_mode);
      if (lab_ladder) raw.set("lab.ladder", *lab_ladder);
      if (lab_fixed) raw.set("lab.fixed", std::to_string(*lab_fixed));
      return report_lab(run_singular_lab(parse_experiment(raw), raw));
    }
    if (plot->parsed()) {
      if (plot_svg.empty()) plot_svg = fs::path(plot_csv).replace_extension(".svg").string();
      emit_plot(plot_csv, plot_svg);
      std::cout << plot_svg << "\n";
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const BudgetExceeded& e) {
    std::cerr << "stopped: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

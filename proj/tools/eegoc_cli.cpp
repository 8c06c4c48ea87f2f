// eegoc: command-line driver for the shell experiments.
//
//   eegoc <command> --config run.ini [--out DIR] [--threads N] [--seed U64]
//
// Exit codes: 0 success, 2 configuration or input error (nothing written),
// 3 compute error (manifest.json written with the error record).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eegoc/eegoc.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace eegoc;

namespace {

constexpr const char* kVersion = "0.1.0";

enum class Phase { Load, Compute };

struct PhaseError {
  Phase phase;
  std::string kind;
  std::string message;
};

void print_error(const PhaseError& e, int code) {
  json j;
  j["error"] = {{"phase", e.phase == Phase::Load ? "load" : "compute"}, {"kind", e.kind}, {"message", e.message},
                {"exit_code", code}};
  std::cerr << j.dump() << '\n';
}

std::string eps_tag(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", eps);
  return buf;
}

json number_or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_json(const SolveReport& r) {
  return {{"method", std::string(to_string(r.method))},
          {"relative_residual", r.relative_residual},
          {"iterations", r.iterations},
          {"factor_nnz", r.factor_nnz},
          {"seconds", r.wall_seconds}};
}

json stationarity_json(const StationarityResiduals& s) {
  return {{"control", s.control}, {"constraint", s.constraint}, {"adjoint", s.adjoint}};
}

/// Everything a command needs, resolved before any computation.
struct Inputs {
  std::string command;
  std::string config_path;
  RunConfig cfg;
  std::string out_dir;
  std::optional<TetMesh> mesh;             // msh or dump sources
  std::optional<ElectrodeSet> electrodes;  // file source
  std::optional<DataFile> data;            // file source
};

class Run {
 public:
  explicit Run(Inputs in) : in_(std::move(in)) {}

  json& metrics() { return metrics_; }

  std::string path(const std::string& name) {
    outputs_.push_back(name);
    const fs::path p = fs::path(in_.out_dir) / name;
    fs::create_directories(p.parent_path());
    return p.string();
  }

  void write_manifest(const std::optional<PhaseError>& err, double seconds) const {
    json m;
    m["tool"] = "eegoc";
    m["version"] = kVersion;
    m["command"] = in_.command;
    m["config_path"] = in_.config_path;
    m["config"] = in_.cfg.raw;
    m["seed"] = in_.cfg.data.seed;
    m["threads"] = in_.cfg.threads;
    m["status"] = err ? "error" : "ok";
    if (err) m["error"] = {{"kind", err->kind}, {"message", err->message}};
    m["metrics"] = metrics_;
    m["outputs"] = outputs_;
    m["timing"] = {{"wall_seconds", seconds}};
    fs::create_directories(in_.out_dir);
    std::ofstream f(fs::path(in_.out_dir) / "manifest.json");
    f << m.dump(2) << '\n';
  }

  const Inputs& in() const { return in_; }
  const RunConfig& cfg() const { return in_.cfg; }

  TetMesh mesh() const { return in_.mesh ? *in_.mesh : load_mesh(in_.cfg.mesh); }

  ElectrodeSet electrodes(const TetMesh& m) const {
    if (!in_.electrodes) return load_electrode_set(in_.cfg, m);
    ElectrodeSet e = *in_.electrodes;
    if (in_.cfg.electrodes.project) e.positions = place_on_boundary(m, BoundaryTag::Scalp, e.positions);
    return e;
  }

 private:
  Inputs in_;
  json metrics_ = json::object();
  std::vector<std::string> outputs_;
};

// ---------------------------------------------------------------------------

void cmd_mesh_shell(Run& run) {
  const TetMesh m = run.mesh();
  write_mesh_dump(run.path("mesh.dump"), m);
  write_msh(run.path("mesh.msh"), m, run.cfg().mesh.tags);
  if (run.cfg().output.vtk) write_vtk_volume(run.path("mesh.vtk"), m, {});
  auto& x = run.metrics();
  x["vertices"] = m.num_vertices();
  x["tets"] = m.num_tets();
  x["cortex_nodes"] = tagged_nodes(m, BoundaryTag::Cortex).size();
  x["scalp_nodes"] = tagged_nodes(m, BoundaryTag::Scalp).size();
  x["h_max"] = max_edge_length(m);
  x["volume"] = mesh_volume(m);
  std::cout << "mesh: " << m.num_vertices() << " vertices, " << m.num_tets() << " tets\n";
}

void cmd_synth(Run& run) {
  const TetMesh m = run.mesh();
  const ElectrodeSet e = run.electrodes(m);
  const ShellHarmonicField field = truth_field(run.cfg());
  const ExperimentData x = synthesize(field, e, run.cfg().data.noise, run.cfg().data.seed);
  const SurfaceExtraction s = extract_cortex(m);
  const Vector truth = eval_field(field, s.nodes);
  write_electrodes(run.path("electrodes.txt"), e);
  write_data_file(run.path("data.txt"), x.d, x.s);
  write_field_dump(run.path("truth_cortex.field"), truth);
  if (run.cfg().output.vtk) write_vtk_surface(run.path("truth_cortex.vtk"), s, {{"u_true", truth}});
  auto& j = run.metrics();
  j["electrodes"] = e.size();
  j["noise"] = run.cfg().data.noise;
  j["field_neumann_defect"] = field.neumann_defect();
  j["data_norm"] = x.d.norm();
  std::cout << "synth: " << e.size() << " electrodes, noise " << run.cfg().data.noise << '\n';
}

void cmd_reconstruct(Run& run, bool sweep) {
  const RunConfig& c = run.cfg();
  const std::vector<double> eps = normalize_epsilons(c.epsilons);
  require(!sweep || eps.size() >= 2, ErrorKind::Parameter, "sweep needs at least two epsilon values");

  TetMesh m = run.mesh();
  ElectrodeSet e = run.electrodes(m);
  const auto cond = c.conductivity.for_mesh(m);
  cond.check(m);

  std::optional<ShellHarmonicField> field;
  DataVector d;
  Vector s;
  if (run.in().data) {
    d = run.in().data->d;
    s = run.in().data->s;
    require(d.size() == e.size(), ErrorKind::Dimension,
            "data file has " + std::to_string(d.size()) + " entries for " + std::to_string(e.size()) + " electrodes");
  } else {
    field = truth_field(c);
    const ExperimentData x = synthesize(*field, e, c.data.noise, c.data.seed);
    d = x.d;
    s = x.s;
  }

  const ProblemAssembly p(std::move(m), cond, std::move(e));
  ReconstructionOptions opt;
  opt.gamma = c.solver.gamma;
  opt.solve = c.solver.solve;
  const SweepCurve curve = sweep_epsilon(p, d, eps, opt, rmse_scale(s), static_cast<unsigned>(c.threads));

  write_curve_csv(run.path("curve.csv"), curve.points);
  std::optional<Vector> truth;
  if (field) truth = eval_field(*field, p.surface.nodes);

  json rows = json::array();
  for (std::size_t i = 0; i < curve.results.size(); ++i) {
    const ReconstructionResult& r = curve.results[i];
    const std::string tag = eps_tag(r.epsilon);
    const Vector trace = p.cortex_trace(r.u);
    json row = {{"epsilon", r.epsilon},
                {"gamma", r.gamma},
                {"residual_norm", r.residual_norm},
                {"rmse", number_or_null(r.rmse)},
                {"stationarity", stationarity_json(r.stationarity)},
                {"solver", report_json(r.report)}};
    if (truth) row["pearson_trace"] = pearson(trace, *truth);
    rows.push_back(row);
    if (c.output.vtk) {
      write_vtk_volume(run.path("fields/u_eps" + tag + ".vtk"), p.mesh, {{"u", r.u}});
      std::vector<PointField> sf = {{"f", r.f}, {"f_zero_mean", r.f_zero_mean}, {"u_trace", trace}};
      if (truth) sf.push_back({"u_true", *truth});
      write_vtk_surface(run.path("fields/f_eps" + tag + ".vtk"), p.surface, sf);
    }
    write_field_dump(run.path("fields/f_eps" + tag + ".field"), r.f);
  }
  auto& j = run.metrics();
  j["vertices"] = p.n();
  j["cortex_nodes"] = p.m();
  j["electrodes"] = p.k();
  j["solves"] = rows;
  if (const auto cross = first_crossing(curve.points)) j["first_epsilon_below_rmse_1"] = curve.points[*cross].epsilon;
  for (const auto& pt : curve.points)
    std::cout << "eps " << format_double(pt.epsilon) << "  residual " << format_double(pt.residual_norm) << "  rmse "
              << format_optional(pt.rmse) << '\n';
}

void cmd_oracle(Run& run) {
  const RunConfig& c = run.cfg();
  TetMesh m = run.mesh();
  ElectrodeSet e = run.electrodes(m);
  const auto cond = c.conductivity.for_mesh(m);
  cond.check(m);
  DataVector d;
  if (run.in().data) {
    d = run.in().data->d;
  } else {
    d = synthesize(truth_field(c), e, c.data.noise, c.data.seed).d;
  }
  const ProblemAssembly p(std::move(m), cond, std::move(e));
  require(d.size() == p.k(), ErrorKind::Dimension, "data length does not match the electrode count");
  const LeadFieldOracle o = build_lead_field_oracle(p, c.oracle.cap);
  ReconstructionOptions opt;
  opt.gamma = c.solver.gamma;
  opt.solve = c.solver.solve;

  json rows = json::array();
  for (double eps : normalize_epsilons(c.oracle.epsilons)) {
    const ReconstructionResult r = reconstruct(p, d, eps, opt);
    const OracleMinimizer om = oracle_minimizer(o, d, eps, r.gamma);
    const ReducedGradientCheck g = reduced_gradient(o, d, r.f, best_offset(o, d, r.f), eps, r.gamma);
    const double diff = relative_difference(r.f, om.f);
    rows.push_back({{"epsilon", eps},
                    {"gamma", r.gamma},
                    {"relative_f_difference", diff},
                    {"reduced_gradient_relative", g.relative_norm},
                    {"stationarity", stationarity_json(r.stationarity)}});
    std::cout << "eps " << format_double(eps) << "  relative difference " << format_double(diff)
              << "  reduced gradient " << format_double(g.relative_norm) << '\n';
  }
  json report = {{"cortex_nodes", p.m()}, {"vertices", p.n()}, {"electrodes", p.k()}, {"comparisons", rows}};
  std::ofstream(run.path("oracle_report.json")) << report.dump(2) << '\n';
  run.metrics() = report;
}

void cmd_qrm(Run& run) {
  const RunConfig& c = run.cfg();
  const TetMesh m = run.mesh();
  const auto cond = c.conductivity.for_mesh(m);
  cond.check(m);
  const ShellHarmonicField field = truth_field(c);
  std::vector<Vec3> scalp;
  for (Index v : tagged_nodes(m, BoundaryTag::Scalp)) scalp.push_back(m.vertices[static_cast<std::size_t>(v)]);
  const QRMSystem sys = build_qrm(m, cond, eval_field(field, scalp), c.qrm.epsilon, c.qrm.delta);
  const auto [sol, report] = solve_qrm(sys, c.solver.solve);
  const auto [r1, r2] = qrm_residuals(sys, sol);

  const SurfaceExtraction s = extract_cortex(m);
  Vector trace(s.num_nodes());
  for (Index i = 0; i < s.num_nodes(); ++i) trace[i] = sol.u[s.surf_to_vol[static_cast<std::size_t>(i)]];
  const Vector truth = eval_field(field, s.nodes);
  write_field_dump(run.path("qrm_cortex.field"), trace);
  write_field_dump(run.path("truth_cortex.field"), truth);
  if (c.output.vtk) write_vtk_surface(run.path("qrm_cortex.vtk"), s, {{"u_qrm", trace}, {"u_true", truth}});

  auto& j = run.metrics();
  j["epsilon"] = c.qrm.epsilon;
  j["delta"] = c.qrm.delta;
  j["residuals"] = {r1, r2};
  j["solver"] = report_json(report);
  const bool flat = (truth.array() - truth.mean()).abs().maxCoeff() == 0.0 ||
                    (trace.array() - trace.mean()).abs().maxCoeff() == 0.0;
  if (!flat) j["pearson_trace"] = pearson(trace, truth);
  j["max_trace_error"] = (trace - truth).cwiseAbs().maxCoeff();
  std::cout << "qrm: residuals " << format_double(r1) << ", " << format_double(r2);
  if (!flat) std::cout << "  pearson " << format_double(j["pearson_trace"].get<double>());
  std::cout << '\n';
}

void cmd_convergence(Run& run) {
  const RunConfig& c = run.cfg();
  const ConvergenceTable fwd =
      forward_convergence_study(c.convergence.levels, forward_study_field(c.mesh.r_inner, c.mesh.r_outer), c.mesh.shell);
  {
    std::ofstream f(run.path("forward_convergence.csv"));
    f << "level,h,vertices,tets,h1_error,l2_error\n";
    for (const auto& r : fwd.rows)
      f << r.level << ',' << format_double(r.h) << ',' << r.n << ',' << r.tets << ',' << format_double(r.h1_error) << ','
        << format_double(r.l2_error) << '\n';
  }
  auto& j = run.metrics();
  j["forward"] = {{"h1_rate", fwd.h1_rate}, {"l2_rate", fwd.l2_rate}};
  std::cout << "forward: H1 rate " << format_double(fwd.h1_rate) << ", L2 rate " << format_double(fwd.l2_rate) << '\n';
  if (!c.convergence.kkt) return;

  SelfConvergenceOptions so;
  so.epsilon = c.convergence.self_epsilon;
  so.electrodes = c.electrodes.count;
  so.r_in = c.mesh.r_inner;
  so.r_out = c.mesh.r_outer;
  so.mesh.base_subdivision = c.convergence.self_base_subdivision;
  so.reconstruction.gamma = c.solver.gamma;
  so.reconstruction.solve = c.solver.solve;
  const SelfConvergenceTable kkt =
      kkt_self_convergence(c.convergence.self_levels, kkt_study_field(c.mesh.r_inner, c.mesh.r_outer), so);
  {
    std::ofstream f(run.path("kkt_convergence.csv"));
    f << "level,h,dofs,error,max_stationarity\n";
    for (const auto& r : kkt.rows)
      f << r.level << ',' << format_double(r.h) << ',' << r.dofs << ',' << format_double(r.error) << ','
        << format_double(r.max_stationarity) << '\n';
  }
  j["kkt"] = {{"rate", kkt.rate},
              {"reference_level", kkt.reference_level},
              {"reference_stationarity", kkt.reference_stationarity}};
  std::cout << "kkt: self-convergence rate " << format_double(kkt.rate) << '\n';
}

// ---------------------------------------------------------------------------

Inputs load_inputs(const std::string& command, const std::string& config_path, const std::optional<std::string>& out,
                   const std::optional<int>& threads, const std::optional<std::uint64_t>& seed) {
  Inputs in;
  in.command = command;
  in.config_path = config_path;
  in.cfg = load_config(config_path);
  if (threads) {
    require(*threads >= 1, ErrorKind::Parameter, "--threads must be >= 1");
    in.cfg.threads = *threads;
  }
  if (seed) in.cfg.data.seed = *seed;
  if (out) {
    in.out_dir = *out;
  } else if (const char* env = std::getenv("EEGOC_OUT"); env != nullptr && *env != '\0') {
    in.out_dir = env;
  } else {
    in.out_dir = in.cfg.output.dir;
  }
  const auto& c = in.cfg;
  if (command == "sweep")
    require(c.epsilons.size() >= 2, ErrorKind::Parameter, "sweep needs at least two epsilon values");
  if (c.mesh.source != "shell") in.mesh = load_mesh(c.mesh);
  if (c.electrodes.source == "file") in.electrodes = read_electrodes(c.electrodes.path);
  if (c.data.source == "file") {
    in.data = read_data_file(c.data.path);
    if (in.electrodes)
      require(in.data->d.size() == in.electrodes->size(), ErrorKind::Dimension, "data file and electrode file differ in length");
  }
  const bool needs_shell_field = command == "synth" || command == "qrm" ||
                                 ((command == "reconstruct" || command == "sweep" || command == "oracle") && !in.data);
  if (needs_shell_field)
    require(c.mesh.r_inner > 0.0 && c.mesh.r_inner < c.mesh.r_outer, ErrorKind::Parameter,
            "[mesh] r_inner/r_outer must describe the shell of the synthetic field");
  return in;
}

int run_command(const std::string& command, Inputs in) {
  Run run(std::move(in));
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<PhaseError> err;
  try {
    if (command == "mesh-shell") cmd_mesh_shell(run);
    else if (command == "synth") cmd_synth(run);
    else if (command == "reconstruct") cmd_reconstruct(run, false);
    else if (command == "sweep") cmd_reconstruct(run, true);
    else if (command == "oracle") cmd_oracle(run);
    else if (command == "qrm") cmd_qrm(run);
    else cmd_convergence(run);
  } catch (const Error& e) {
    err = PhaseError{Phase::Compute, std::string(to_string(e.kind())), e.what()};
  } catch (const std::exception& e) {
    err = PhaseError{Phase::Compute, "internal", e.what()};
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    run.write_manifest(err, seconds);
  } catch (const std::exception& e) {
    if (!err) err = PhaseError{Phase::Compute, "io", std::string("cannot write manifest: ") + e.what()};
  }
  if (err) {
    print_error(*err, 3);
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  ensure_safe_blas(argv);

  CLI::App app{"Optimal-control EEG source reconstruction on tetrahedral meshes"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);
  std::string config;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"mesh-shell", "generate the shell mesh and write dump, MSH and VTK"},
      {"synth", "sample the analytic field at the electrodes (optionally noisy)"},
      {"reconstruct", "solve the KKT system for each configured epsilon"},
      {"sweep", "epsilon sweep with residual and RMSE curve"},
      {"oracle", "compare against the dense lead-field minimizer (coarse meshes)"},
      {"qrm", "quasi-reversibility baseline from the scalp Dirichlet trace"},
      {"convergence", "forward and KKT h-convergence studies"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "INI run configuration")->required();
    sub->add_option("--out", out, "output directory (overrides EEGOC_OUT and [output] dir)");
    sub->add_option("--threads", threads, "worker cap for sweeps");
    sub->add_option("--seed", seed, "noise seed (overrides [data] seed)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error({Phase::Load, "usage", e.what()}, 2);
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Inputs in;
  try {
    in = load_inputs(command, config, out, threads, seed);
  } catch (const Error& e) {
    print_error({Phase::Load, std::string(to_string(e.kind())), e.what()}, 2);
    return 2;
  } catch (const std::exception& e) {
    print_error({Phase::Load, "internal", e.what()}, 2);
    return 2;
  }
  return run_command(command, std::move(in));
}

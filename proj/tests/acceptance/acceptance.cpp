// Acceptance gate: one line per criterion, exit status 0 only if all pass.
//
//   acceptance [--only 1,4,...]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>

#include "eegoc/eegoc.hpp"

using namespace eegoc;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Verdict()> run;
};

std::string num(double x, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << x;
  return os.str();
}

/// Worst stationarity residual over every KKT solve in criteria 1-5.
struct StationarityLog {
  double worst = 0.0;
  int solves = 0;
  void add(double s) {
    worst = std::max(worst, s);
    ++solves;
  }
  void add(const ReconstructionResult& r) { add(r.stationarity.max()); }
} g_stationarity;

int worker_count() { return static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 8u)); }

ShellHarmonicField cross_field(int l_max) {
  return fit_shell_field([](const Vec3& p) { return cross_pattern(p); }, l_max, 0.7, 1.0);
}

ProblemAssembly shell_problem(int level) {
  TetMesh mesh = build_shell_mesh(0.7, 1.0, level);
  ElectrodeSet e = electrode_layout_hemisphere(198, 1.0);
  e.positions = place_on_boundary(mesh, BoundaryTag::Scalp, e.positions);
  const auto cond = ConductivityMap::uniform(mesh, 1.0);
  return ProblemAssembly(std::move(mesh), cond, std::move(e));
}

// 1 ------------------------------------------------------------------------
Verdict oracle_equivalence() {
  const ProblemAssembly p = shell_problem(0);
  const Index dofs = p.m() + 2 * p.n();
  if (dofs > 2000) return {false, "coarse mesh has M+2N = " + std::to_string(dofs)};
  const DataVector d = eval_field(cross_field(25), p.electrodes.positions);
  const LeadFieldOracle o = build_lead_field_oracle(p);
  double worst = 0.0;
  std::string per;
  for (double eps : {1e-6, 1e-8, 1e-10}) {
    const ReconstructionResult r = reconstruct(p, d, eps);
    g_stationarity.add(r);
    const OracleMinimizer m = oracle_minimizer(o, d, eps, r.gamma);
    const double rel = relative_difference(r.f_zero_mean, zero_mean(m.f, o.area_weights));
    worst = std::max(worst, rel);
    per += " eps=" + num(eps, 1) + ":" + num(rel);
  }
  return {worst <= 1e-6, "M+2N=" + std::to_string(dofs) + ", rel f diff" + per + " (tol 1e-6)"};
}

// 2 ------------------------------------------------------------------------
Verdict forward_convergence() {
  const ConvergenceTable t = forward_convergence_study({0, 1, 2}, forward_study_field(0.7, 1.0));
  const bool ok = t.h1_rate >= 0.85 && t.h1_rate <= 1.15 && t.l2_rate >= 1.6 && t.l2_rate <= 2.2;
  return {ok, "H1 rate " + num(t.h1_rate) + " in [0.85,1.15], L2 rate " + num(t.l2_rate) + " in [1.6,2.2]"};
}

// 3 ------------------------------------------------------------------------
Verdict kkt_convergence() {
  const SelfConvergenceTable t = kkt_self_convergence({0, 1, 2, 3}, kkt_study_field(0.7, 1.0));
  g_stationarity.add(t.reference_stationarity);
  std::string errs;
  for (const auto& row : t.rows) {
    g_stationarity.add(row.max_stationarity);
    errs += " L" + std::to_string(row.level) + ":" + num(row.error);
  }
  return {t.rate >= 0.9, "rate " + num(t.rate) + " >= 0.9 against level " + std::to_string(t.reference_level) +
                             ", errors" + errs};
}

// 4 ------------------------------------------------------------------------
Verdict noise_free_sweep() {
  const ProblemAssembly p = shell_problem(2);
  const ShellHarmonicField field = cross_field(25);
  const DataVector d = eval_field(field, p.electrodes.positions);
  const Vector truth = eval_field(field, p.surface.nodes);
  const SweepCurve c = sweep_epsilon(p, d, {1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12}, {}, std::nullopt, worker_count());
  bool residual_ok = true, pearson_ok = true;
  std::vector<double> rho;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    g_stationarity.add(c.results[i]);
    rho.push_back(pearson(p.cortex_trace(c.results[i].u), truth));
    if (i > 0) {
      residual_ok = residual_ok && c.points[i].residual_norm <= c.points[i - 1].residual_norm * (1 + 1e-9);
      pearson_ok = pearson_ok && rho[i] >= rho[i - 1];
    }
  }
  const bool big = p.mesh.num_tets() >= 20000;
  const bool final_ok = rho.back() >= 0.9;
  std::string r;
  for (double x : rho) r += " " + num(x, 4);
  return {residual_ok && pearson_ok && final_ok && big,
          std::to_string(p.mesh.num_tets()) + " tets; residual non-increasing: " + (residual_ok ? "yes" : "no") +
              "; pearson non-decreasing: " + (pearson_ok ? "yes" : "no") + " [" + r.substr(1) + "]; final >= 0.9: " +
              (final_ok ? "yes" : "no")};
}

// 5 ------------------------------------------------------------------------
Verdict noisy_sweeps() {
  const ProblemAssembly p = shell_problem(1);
  const DataVector clean = eval_field(cross_field(25), p.electrodes.positions);
  const std::vector<double> grid = decade_grid(-5, -12);
  int crossed1 = 0, ordered = 0;
  std::string per;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::optional<double> eps_at[2];
    for (int k = 0; k < 2; ++k) {
      const NoisyData nd = add_noise(clean, {k == 0 ? 0.01 : 0.05, seed});
      const SweepCurve c = sweep_epsilon(p, nd.d, grid, {}, rmse_scale(nd.s), worker_count());
      for (const auto& r : c.results) g_stationarity.add(r);
      if (const auto i = first_crossing(c.points)) eps_at[k] = c.points[*i].epsilon;
    }
    crossed1 += eps_at[0].has_value();
    ordered += eps_at[0] && eps_at[1] && *eps_at[1] > *eps_at[0];
    auto show = [](const std::optional<double>& e) { return e ? num(*e, 1) : std::string("none"); };
    per += " s" + std::to_string(seed) + ":" + show(eps_at[0]) + "/" + show(eps_at[1]);
  }
  return {crossed1 >= 3 && ordered >= 3, "first e<1 eps (1%/5%)" + per + "; 1% crossed " + std::to_string(crossed1) +
                                             "/5, 5% larger " + std::to_string(ordered) + "/5 (majority 3)"};
}

// 6 ------------------------------------------------------------------------
Verdict stationarity() {
  if (g_stationarity.solves == 0) return {false, "no solves recorded (run criteria 1-5 first)"};
  return {g_stationarity.worst <= 1e-8,
          "max residual " + num(g_stationarity.worst) + " over " + std::to_string(g_stationarity.solves) + " solves (tol 1e-8)"};
}

// 7 ------------------------------------------------------------------------
Verdict gradient_check() {
  const ProblemAssembly p = shell_problem(0);
  const DataVector d = eval_field(cross_field(25), p.electrodes.positions);
  const ReducedObjective phi(p, d, 1e-6, default_gamma(p.A_core));
  const double worst = gradient_fd_check(phi, p.area_weights, 5, 2024);
  return {worst <= 1e-5, "max rel error " + num(worst) + " over 5 directions (tol 1e-5)"};
}

// 8 ------------------------------------------------------------------------
Verdict structural() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  };
  const ProblemAssembly p = shell_problem(0);
  const Vector one_n = Vector::Ones(p.n()), one_m = Vector::Ones(p.m());
  const double e_scale = p.E.full.cwiseAbs().sum() / static_cast<double>(p.n());
  check((p.E.full * one_n).cwiseAbs().maxCoeff() <= 1e-12 * e_scale, "E*1 = 0");
  const double a_scale = p.A_core.full.cwiseAbs().sum() / static_cast<double>(p.m());
  check((p.A_core.full * one_m).cwiseAbs().maxCoeff() <= 1e-12 * a_scale, "A*1 = 0");
  check((p.Q.mat * one_n - Vector::Ones(p.k())).cwiseAbs().maxCoeff() <= 1e-12, "Q row sums = 1");
  const DataVector d = eval_field(cross_field(12), p.electrodes.positions);
  const KKTSystem sys = build_problem_kkt(p, d, 1e-8, default_gamma(p.A_core));
  check(sys.matrix.asymmetry() == 0.0, "KKT symmetry");
  const Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(DenseMatrix(p.G.full), Eigen::EigenvaluesOnly);
  check(eig.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff()), "G PSD");
  const ProblemAssembly p2 = shell_problem(0);
  check(p2.mesh.vertices == p.mesh.vertices && p2.mesh.tets == p.mesh.tets, "mesh determinism");
  const ReconstructionResult r1 = reconstruct(p, d, 1e-8), r2 = reconstruct(p2, d, 1e-8);
  check(r1.f == r2.f && r1.u == r2.u && r1.lambda == r2.lambda, "solve determinism");
  const NoisyData n1 = add_noise(d, {0.05, 7}), n2 = add_noise(d, {0.05, 7});
  check(n1.d == n2.d, "noise determinism");
  std::string detail = "E1=0, A1=0, Q rows, KKT symmetry, G PSD, determinism";
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " " + f + ";";
  }
  return {failed.empty(), detail};
}

// 9 ------------------------------------------------------------------------
Verdict qrm_baseline() {
  const TetMesh mesh = build_shell_mesh(0.7, 1.0, 0);
  const auto cond = ConductivityMap::uniform(mesh, 1.0);
  const ShellHarmonicField field = cross_field(25);
  std::vector<Vec3> scalp;
  for (Index v : tagged_nodes(mesh, BoundaryTag::Scalp)) scalp.push_back(mesh.vertices[static_cast<std::size_t>(v)]);
  const Vector g = eval_field(field, scalp);
  const auto [sol, rep] = solve_qrm(build_qrm(mesh, cond, g, 1e-8, 1e-8), {});
  const SurfaceExtraction s = extract_cortex(mesh);
  Vector trace(s.num_nodes());
  for (Index i = 0; i < s.num_nodes(); ++i) trace[i] = sol.u[s.surf_to_vol[static_cast<std::size_t>(i)]];
  const double rho = pearson(trace, eval_field(field, s.nodes));
  bool rejected = false;
  try {
    build_qrm(mesh, cond, g, 1e-8, 0.0);
  } catch (const Error& e) {
    rejected = e.kind() == ErrorKind::Parameter;
  }
  return {rho >= 0.9 && rejected,
          "pearson " + num(rho, 4) + " >= 0.9; delta=0 rejected: " + (rejected ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  ensure_safe_blas(argv);
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    }

  const std::vector<Criterion> criteria = {
      {1, "oracle equivalence", 30, oracle_equivalence},
      {2, "forward FEM convergence", 300, forward_convergence},
      {3, "KKT self-convergence", 600, kkt_convergence},
      {4, "noise-free sweep", 600, noise_free_sweep},
      {5, "noisy sweeps", 1200, noisy_sweeps},
      {6, "stationarity residuals", 0, stationarity},
      {7, "reduced-gradient FD check", 0, gradient_check},
      {8, "structural invariants", 60, structural},
      {9, "QRM baseline", 0, qrm_baseline},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = num(sec) + " s";
    if (c.limit_seconds > 0) {
      timing += " / limit " + num(c.limit_seconds) + " s";
      if (sec > c.limit_seconds) {
        v.pass = false;
        v.detail += "; runtime limit exceeded";
      }
    }
    failures += !v.pass;
    std::printf("criterion %d %s  %s: %s (%s)\n", c.id, v.pass ? "PASS" : "FAIL", c.name.c_str(), v.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}

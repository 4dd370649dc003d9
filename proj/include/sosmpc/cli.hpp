#pragma once

// Command-line front end.
//
//   run <file|builtin> [--out DIR] [--d N] [--k N] [--T-I R] [--T-h R] [--seed N]
//   verify <dir>
//   bench {vdp, smib, oracle1d}
//
// Exit codes: 0 success; 2 parse error or missing input; 3 solver failure
// after the fallback ladder; 4 failed certificate check; 5 benchmark cost
// outside its reference band.  SOSMPC_THREADS caps internal parallelism.

#include <CLI11.hpp>

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sosmpc/artifacts.hpp"
#include "sosmpc/builtins.hpp"
#include "sosmpc/control.hpp"
#include "sosmpc/mpc.hpp"
#include "sosmpc/problem_file.hpp"
#include "sosmpc/sos_program.hpp"

namespace sosmpc::cli {

namespace detail {

inline std::optional<LoadedProblem> resolve_problem(const std::string& target,
                                                    std::string& error) {
  if (auto built = builtin_problem(target)) return built;
  std::ifstream in(target, std::ios::binary);
  if (!in) {
    error = "no such file or built-in problem: " + target;
    return std::nullopt;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    LoadedProblem lp = parse_problem_file(buf.str());
    if (lp.name.empty())
      lp.name = std::filesystem::path(target).stem().string();
    return lp;
  } catch (const ProblemParseError& e) {
    error = target + ": " + e.what();
    return std::nullopt;
  }
}

struct RunOverrides {
  std::string out_dir = "sosmpc-out";
  int d = -1, k = -1;
  double T_I = -1.0, T_h = -1.0;
  std::uint64_t seed = 0;
};

/// Executes one full run; fills rec and returns the process exit code.
inline int execute_run(const LoadedProblem& lp, const RunOverrides& ov, RunRecord& rec,
                       bool quiet = false) {
  MPCConfig cfg = lp.config;
  if (ov.d >= 0) cfg.d = ov.d;
  if (ov.k >= 0) cfg.k = ov.k;
  if (ov.T_I > 0.0) cfg.T_I = ov.T_I;
  if (ov.T_h > 0.0) cfg.T_h = ov.T_h;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return 2;
  }

  ProblemDefinition prob = lp.problem;
  if (lp.scale.size() != 0) prob = scale_problem(prob, lp.scale, lp.cost_coords);

  rec.problem_name = lp.name;
  rec.config = cfg;
  rec.scale = lp.scale;
  rec.cost_coords = lp.cost_coords;
  rec.seed = ov.seed;
  rec.result = run_mpc(prob, cfg);

  if (!quiet) {
    for (const auto& w : rec.result.windows)
      std::printf("window %2d  t=[%g, %g)  deg %d  attempts %d  %-14s bound %.6g  cost %.6g  %.2fs\n",
                  w.index, w.t_start, w.t_end, w.degree_used, w.attempts,
                  w.solver_status.c_str(), w.bound_at_start, w.window_cost,
                  w.solve_seconds);
    std::printf("total cost %.6f over %zu/%d windows\n", rec.result.total_cost,
                rec.result.windows.size(), rec.result.windows_planned);
    if (rec.result.aborted)
      std::printf("run aborted: %s\n", rec.result.abort_reason.c_str());
  }
  return rec.result.aborted ? 3 : 0;
}

inline int cmd_run(const std::string& target, const RunOverrides& ov) {
  std::string error;
  const auto lp = resolve_problem(target, error);
  if (!lp) {
    std::fprintf(stderr, "%s\n", error.c_str());
    return 2;
  }
  RunRecord rec;
  const int code = execute_run(*lp, ov, rec);
  if (code == 2) return 2;
  write_run_artifacts(ov.out_dir, rec);
  std::printf("artifacts written to %s\n", ov.out_dir.c_str());
  return code;
}

inline int cmd_verify(const std::string& dir, double tol_eq, double tol_psd,
                      double tol_slack) {
  StoredRun run;
  try {
    run = load_run_artifacts(dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  int first_bad = -1;
  for (const auto& w : run.windows) {
    if (!w.has_certificate) {
      std::printf("window %2d: no certificate (previous controller reused) — skipped\n",
                  w.index);
      continue;
    }
    const Certificate& cert = w.certificate;
    const CertificateCheck chk = verify_certificate(cert);
    const bool identities_ok = chk.pass(tol_eq, tol_psd);

    // Cost-to-go audit: random admissible inputs from the window's own start
    // state must never undercut the certified bound.
    std::string audit = "audit skipped (start state outside the certified ball)";
    bool audit_ok = true;
    if (w.expansion_x.norm() <= cert.radius + 1e-9) {
      const OCPInstance ocp = ocp_from_certificate(cert);
      const ValueApprox value = ValueApprox::from_certificate(cert);
      const SubvalueCheck sub = check_subvalue(ocp, value, w.expansion_x, 100, 8, run.h,
                                               run.seed + static_cast<std::uint64_t>(w.index));
      audit_ok = sub.min_slack >= -tol_slack;
      char buf[96];
      std::snprintf(buf, sizeof buf, "audit min slack %.3e (%d full, %d truncated)",
                    sub.min_slack, sub.completed, sub.truncated);
      audit = buf;
    }

    const bool ok = identities_ok && audit_ok;
    std::printf(
        "window %2d: %s  eq residual %.3e/%.3e  min eig %.3e  %s\n", w.index,
        ok ? "ok  " : "FAIL", chk.terminal_residual, chk.flow_residual,
        chk.min_gram_eigenvalue, audit.c_str());
    if (!ok && first_bad < 0) first_bad = w.index;
  }
  if (first_bad >= 0) {
    std::printf("verification FAILED (first bad window: %d)\n", first_bad);
    return 4;
  }
  std::printf("all stored certificates verified\n");
  return 0;
}

/// Left-rule cost of the best vertex sequence on the run's own decision
/// grid, found by exhaustive search (only meaningful for small grids).
inline double exhaustive_best_cost(const ProblemDefinition& prob, double T, double h) {
  const int segs = static_cast<int>(std::llround(T / h));
  if (prob.m * segs > 24)
    throw std::invalid_argument("exhaustive search grid too large");
  const Plant plant = prob.plant();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (prob.m * segs)); ++mask) {
    Eigen::VectorXd x = prob.x0;
    Eigen::VectorXd u(prob.m);
    double cost = 0.0;
    for (int s = 0; s < segs; ++s) {
      for (int i = 0; i < prob.m; ++i) u(i) = (mask >> (s * prob.m + i)) & 1 ? 1.0 : -1.0;
      cost += h * plant.running_cost(x, s * h, u);
      x = rk4_step(plant, x, u, h);
    }
    best = std::min(best, cost);
  }
  return best;
}

inline int cmd_bench(const std::string& name) {
  const auto lp = builtin_problem(name);
  if (!lp) {
    std::fprintf(stderr, "unknown benchmark '%s' (expected vdp, smib, or oracle1d)\n",
                 name.c_str());
    return 2;
  }

  const auto t_begin = std::chrono::steady_clock::now();
  RunRecord rec;
  const int code = execute_run(*lp, RunOverrides{}, rec, /*quiet=*/true);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin)
                          .count();
  for (const auto& w : rec.result.windows)
    std::printf("window %2d  solve %.3fs  %-14s deg %d  cost %.6g\n", w.index,
                w.solve_seconds, w.solver_status.c_str(), w.degree_used, w.window_cost);
  std::printf("benchmark %s: total cost %.6f, wall time %.2fs\n", name.c_str(),
              rec.result.total_cost, wall);
  if (code != 0) {
    std::printf("run did not complete: %s\n", rec.result.abort_reason.c_str());
    return code;
  }

  if (const auto band = benchmark_band(name)) {
    std::printf("reference band [%g, %g]: %s\n", band->first, band->second,
                rec.result.total_cost >= band->first && rec.result.total_cost <= band->second
                    ? "inside"
                    : "OUTSIDE");
    if (rec.result.total_cost < band->first || rec.result.total_cost > band->second) return 5;
  } else {
    // Scalar problem: the reference is the exhaustive best on the same grid.
    ProblemDefinition prob = lp->problem;
    if (lp->scale.size() != 0) prob = scale_problem(prob, lp->scale, lp->cost_coords);
    const double best = exhaustive_best_cost(prob, lp->config.T, lp->config.h);
    const double rel = std::abs(rec.result.total_cost - best) / best;
    std::printf("exhaustive best %.6f, relative gap %.2f%%: %s\n", best, 100.0 * rel,
                rel <= 0.05 ? "inside" : "OUTSIDE");
    if (rel > 0.05) return 5;
  }
  return 0;
}

inline void apply_thread_cap() {
  if (const char* env = std::getenv("SOSMPC_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) Eigen::setNbThreads(v);
  }
}

}  // namespace detail

inline int main(int argc, char** argv) {
  detail::apply_thread_cap();

  CLI::App app{"Receding-horizon bang-bang control from certified cost-to-go bounds"};
  app.require_subcommand(1);

  std::string run_target;
  detail::RunOverrides ov;
  CLI::App* run = app.add_subcommand("run", "solve a problem file or built-in problem");
  run->add_option("problem", run_target, "problem file path or built-in name")->required();
  run->add_option("--out", ov.out_dir, "artifact output directory");
  run->add_option("--d", ov.d, "bound polynomial degree override");
  run->add_option("--k", ov.k, "Taylor degree override");
  run->add_option("--T-I", ov.T_I, "implementation period override");
  run->add_option("--T-h", ov.T_h, "prediction horizon override");
  run->add_option("--seed", ov.seed, "seed recorded for verification audits");

  std::string verify_dir;
  double tol_eq = 1e-3, tol_psd = 1e-8, tol_slack = 1e-4;
  CLI::App* verify = app.add_subcommand("verify", "recheck stored run artifacts");
  verify->add_option("dir", verify_dir, "artifact directory from a run")->required();
  verify->add_option("--tol-eq", tol_eq, "identity residual tolerance");
  verify->add_option("--tol-psd", tol_psd, "Gram eigenvalue tolerance");
  verify->add_option("--tol-slack", tol_slack, "cost-to-go audit slack tolerance");

  std::string bench_name;
  CLI::App* bench = app.add_subcommand("bench", "run a named benchmark against its band");
  bench->add_option("name", bench_name, "vdp, smib, or oracle1d")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage message
    return 2;
  }

  try {
    if (run->parsed()) return detail::cmd_run(run_target, ov);
    if (verify->parsed()) return detail::cmd_verify(verify_dir, tol_eq, tol_psd, tol_slack);
    if (bench->parsed()) return detail::cmd_bench(bench_name);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}

}  // namespace sosmpc::cli

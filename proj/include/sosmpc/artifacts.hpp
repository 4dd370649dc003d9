#pragma once

// Run artifacts: a plot-ready trajectory.csv, a summary.json echoing every
// effective parameter plus per-window statistics, and a certificates.json
// carrying each window's full proof object so a later process can recheck
// the bounds without re-solving anything.  All writes are atomic
// (write-temp-then-rename).

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sosmpc/mpc.hpp"
#include "sosmpc/ocp.hpp"
#include "sosmpc/polynomial.hpp"
#include "sosmpc/problem_file.hpp"
#include "sosmpc/sos_program.hpp"

namespace sosmpc {

namespace detail {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json poly_to_json(const Polynomial& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [mono, coeff] : p.terms())
    terms.push_back({mono.exps, coeff});
  return {{"nvars", p.nvars()}, {"terms", terms}};
}

inline Polynomial poly_from_json(const nlohmann::json& j) {
  Polynomial p(j.at("nvars").get<int>());
  for (const auto& term : j.at("terms"))
    p.add_term(Monomial{term.at(0).get<std::vector<int>>()}, term.at(1).get<double>());
  return p;
}

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

inline nlohmann::json mat_to_json(const Eigen::MatrixXd& mmat) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < mmat.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < mmat.cols(); ++j) row.push_back(mmat(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd mat_from_json(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(j.at(0).size());
  Eigen::MatrixXd mmat(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int jj = 0; jj < cols; ++jj) mmat(i, jj) = j.at(i).at(jj).get<double>();
  return mmat;
}

inline nlohmann::json basis_to_json(const std::vector<Monomial>& basis) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& mono : basis) out.push_back(mono.exps);
  return out;
}

inline std::vector<Monomial> basis_from_json(const nlohmann::json& j) {
  std::vector<Monomial> basis;
  for (const auto& e : j) basis.push_back(Monomial{e.get<std::vector<int>>()});
  return basis;
}

inline nlohmann::json certificate_to_json(const Certificate& cert) {
  nlohmann::json blocks = nlohmann::json::array();
  const auto block_json = [](const GramBlock& blk) {
    return nlohmann::json{{"name", blk.name},
                          {"basis", basis_to_json(blk.basis)},
                          {"domain", poly_to_json(blk.domain)},
                          {"gram", mat_to_json(blk.gram)}};
  };
  nlohmann::json term_blocks = nlohmann::json::array();
  for (const auto& blk : cert.terminal_blocks) term_blocks.push_back(block_json(blk));
  nlohmann::json flow_blocks = nlohmann::json::array();
  for (const auto& blk : cert.flow_blocks) flow_blocks.push_back(block_json(blk));
  nlohmann::json cost = nlohmann::json::array();
  for (const auto& c : cert.cost_cond) cost.push_back(poly_to_json(c));
  nlohmann::json dyn = nlohmann::json::array();
  for (const auto& row : cert.dynamics) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& f : row) r.push_back(poly_to_json(f));
    dyn.push_back(r);
  }
  return {{"n", cert.n},
          {"m", cert.m},
          {"degree", cert.degree},
          {"t0", cert.t0},
          {"t_end", cert.t_end},
          {"time_mid", cert.time_mid},
          {"time_half", cert.time_half},
          {"radius", cert.radius},
          {"region_lo", vec_to_json(cert.region.lo)},
          {"region_hi", vec_to_json(cert.region.hi)},
          {"p_basis", basis_to_json(cert.p_basis)},
          {"p_coeffs", vec_to_json(cert.p_coeffs)},
          {"cost_conditioned", cost},
          {"dynamics", dyn},
          {"terminal_cost", poly_to_json(cert.terminal_cost)},
          {"terminal_blocks", term_blocks},
          {"flow_blocks", flow_blocks},
          {"objective", cert.objective}};
}

inline Certificate certificate_from_json(const nlohmann::json& j) {
  Certificate cert;
  cert.n = j.at("n").get<int>();
  cert.m = j.at("m").get<int>();
  cert.degree = j.at("degree").get<int>();
  cert.t0 = j.at("t0").get<double>();
  cert.t_end = j.at("t_end").get<double>();
  cert.time_mid = j.at("time_mid").get<double>();
  cert.time_half = j.at("time_half").get<double>();
  cert.radius = j.at("radius").get<double>();
  cert.region = Box(vec_from_json(j.at("region_lo")), vec_from_json(j.at("region_hi")));
  cert.p_basis = basis_from_json(j.at("p_basis"));
  cert.p_coeffs = vec_from_json(j.at("p_coeffs"));
  for (const auto& c : j.at("cost_conditioned")) cert.cost_cond.push_back(poly_from_json(c));
  for (const auto& row : j.at("dynamics")) {
    std::vector<Polynomial> r;
    for (const auto& f : row) r.push_back(poly_from_json(f));
    cert.dynamics.push_back(std::move(r));
  }
  cert.terminal_cost = poly_from_json(j.at("terminal_cost"));
  const auto block_from = [](const nlohmann::json& b) {
    GramBlock blk;
    blk.name = b.at("name").get<std::string>();
    blk.basis = basis_from_json(b.at("basis"));
    blk.domain = poly_from_json(b.at("domain"));
    blk.gram = mat_from_json(b.at("gram"));
    return blk;
  };
  for (const auto& b : j.at("terminal_blocks")) cert.terminal_blocks.push_back(block_from(b));
  for (const auto& b : j.at("flow_blocks")) cert.flow_blocks.push_back(block_from(b));
  cert.objective = j.at("objective").get<double>();
  return cert;
}

}  // namespace detail

/// The window's solved instance in absolute time, rebuilt from its
/// certificate: cost pieces un-conditioned through t = mid + half * tau,
/// dynamics and box copied, zero end cost (receding horizon).
inline OCPInstance ocp_from_certificate(const Certificate& cert) {
  OCPInstance ocp;
  ocp.n = cert.n;
  ocp.m = cert.m;
  const int nt = cert.n + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(nt, nt);
  A(cert.n, cert.n) = 1.0 / cert.time_half;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nt);
  b(cert.n) = -cert.time_mid / cert.time_half;
  for (const auto& c : cert.cost_cond) ocp.cost.push_back(c.substitute_affine(A, b));
  ocp.dynamics = cert.dynamics;
  ocp.terminal = cert.terminal_cost;
  ocp.t0 = cert.t0;
  ocp.t_end = cert.t_end;
  ocp.radius = cert.radius;
  ocp.region = cert.region;
  return ocp;
}

/// trajectory.csv text: one row per node, states reported in original
/// coordinates (solver states multiplied by the composite scale).
inline std::string trajectory_csv(const Trajectory& traj, const Eigen::VectorXd& state_scale) {
  if (traj.nodes() == 0) return "";
  const int n = static_cast<int>(traj.x[0].size());
  const int m = static_cast<int>(traj.u[0].size());
  std::string out = "t";
  for (int i = 1; i <= n; ++i) out += ",x" + std::to_string(i);
  for (int i = 1; i <= m; ++i) out += ",u" + std::to_string(i);
  for (int i = 1; i <= m; ++i) out += ",switching" + std::to_string(i);
  out += "\n";
  for (int k = 0; k < traj.nodes(); ++k) {
    out += detail::g17(traj.t[k]);
    for (int i = 0; i < n; ++i) {
      const double scale = state_scale.size() ? state_scale(i) : 1.0;
      out += "," + detail::g17(scale * traj.x[k](i));
    }
    for (int i = 0; i < m; ++i) out += "," + detail::g17(traj.u[k](i));
    for (int i = 0; i < m; ++i) out += "," + detail::g17(traj.switching[k](i));
    out += "\n";
  }
  return out;
}

/// Everything that went into and came out of one run, for the writers.
struct RunRecord {
  std::string problem_name;
  MPCConfig config;
  Eigen::VectorXd scale;        // empty: unscaled
  CostCoords cost_coords = CostCoords::Scaled;
  std::uint64_t seed = 0;
  RunResult result;
};

inline nlohmann::json summary_json(const RunRecord& rec) {
  const MPCConfig& cfg = rec.config;
  nlohmann::json delta;
  if (cfg.region.kind == RegionRule::Kind::Constants)
    delta = {{"rule", "constants"}, {"lo", cfg.region.lo}, {"hi", cfg.region.hi}};
  else
    delta = {{"rule", "offset"}, {"width", cfg.region.width}};

  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : rec.result.windows) {
    windows.push_back({{"index", w.index},
                       {"t_start", w.t_start},
                       {"t_end", w.t_end},
                       {"horizon_end", w.horizon_end},
                       {"expansion_x", detail::vec_to_json(w.expansion_x)},
                       {"expansion_t", w.expansion_t},
                       {"degree_used", w.degree_used},
                       {"attempts", w.attempts},
                       {"region_shrunk", w.region_shrunk},
                       {"degree_reduced", w.degree_reduced},
                       {"reused_previous", w.reused_previous},
                       {"solver_status", w.solver_status},
                       {"solver_iterations", w.solver_iterations},
                       {"solver_primal_residual", w.solver_primal_residual},
                       {"solver_dual_residual", w.solver_dual_residual},
                       {"solve_seconds", w.solve_seconds},
                       {"objective", w.objective},
                       {"bound_at_start", w.bound_at_start},
                       {"window_cost", w.window_cost},
                       {"has_certificate", w.has_certificate}});
  }

  return {{"problem", rec.problem_name},
          {"config",
           {{"T", cfg.T},
            {"T_I", cfg.T_I},
            {"T_h", cfg.T_h},
            {"d", cfg.d},
            {"k", cfg.k},
            {"R", cfg.R},
            {"delta", delta},
            {"dt", cfg.dt},
            {"h", cfg.h},
            {"usable_tol", cfg.usable_tol},
            {"solver",
             {{"eps_primal", cfg.solver.eps_primal},
              {"eps_dual", cfg.solver.eps_dual},
              {"eps_gap", cfg.solver.eps_gap},
              {"rho", cfg.solver.rho},
              {"max_iter", cfg.solver.max_iter}}},
            {"seed", rec.seed},
            {"state_scale", detail::vec_to_json(rec.scale)},
            {"cost_coords", rec.cost_coords == CostCoords::Original ? "original" : "scaled"}}},
          {"total_cost", rec.result.total_cost},
          {"aborted", rec.result.aborted},
          {"abort_reason", rec.result.abort_reason},
          {"windows_planned", rec.result.windows_planned},
          {"windows", windows}};
}

inline nlohmann::json certificates_json(const RunRecord& rec) {
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : rec.result.windows) {
    nlohmann::json entry = {{"index", w.index},
                            {"has_certificate", w.has_certificate},
                            {"expansion_x", detail::vec_to_json(w.expansion_x)},
                            {"expansion_t", w.expansion_t}};
    if (w.has_certificate) entry["certificate"] = detail::certificate_to_json(w.certificate);
    windows.push_back(std::move(entry));
  }
  return {{"problem", rec.problem_name}, {"seed", rec.seed}, {"h", rec.config.h},
          {"windows", windows}};
}

inline void write_run_artifacts(const std::filesystem::path& dir, const RunRecord& rec) {
  std::filesystem::create_directories(dir);
  detail::write_file_atomic(dir / "trajectory.csv",
                            trajectory_csv(rec.result.trajectory, rec.result.state_scale));
  detail::write_file_atomic(dir / "summary.json", summary_json(rec).dump(2) + "\n");
  detail::write_file_atomic(dir / "certificates.json", certificates_json(rec).dump(2) + "\n");
}

/// One stored window, reloaded for rechecking.
struct StoredWindow {
  int index = 0;
  bool has_certificate = false;
  Eigen::VectorXd expansion_x;
  double expansion_t = 0.0;
  Certificate certificate;  // valid when has_certificate
};

struct StoredRun {
  nlohmann::json summary;
  std::string problem_name;
  std::uint64_t seed = 0;
  double h = 1e-3;
  std::vector<StoredWindow> windows;
};

/// Loads the artifacts a verification pass needs.  Throws std::runtime_error
/// when the directory is missing either file or a file does not parse.
inline StoredRun load_run_artifacts(const std::filesystem::path& dir) {
  const auto read = [](const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing artifact: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  StoredRun run;
  try {
    run.summary = nlohmann::json::parse(read(dir / "summary.json"));
    const nlohmann::json certs = nlohmann::json::parse(read(dir / "certificates.json"));
    run.problem_name = certs.at("problem").get<std::string>();
    run.seed = certs.at("seed").get<std::uint64_t>();
    run.h = certs.at("h").get<double>();
    for (const auto& w : certs.at("windows")) {
      StoredWindow sw;
      sw.index = w.at("index").get<int>();
      sw.has_certificate = w.at("has_certificate").get<bool>();
      sw.expansion_x = detail::vec_from_json(w.at("expansion_x"));
      sw.expansion_t = w.at("expansion_t").get<double>();
      if (sw.has_certificate)
        sw.certificate = detail::certificate_from_json(w.at("certificate"));
      run.windows.push_back(std::move(sw));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed artifact in " + dir.string() + ": " + e.what());
  }
  return run;
}

}  // namespace sosmpc

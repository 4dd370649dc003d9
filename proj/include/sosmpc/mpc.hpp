#pragma once

// Receding-horizon loop.  Every implementation period the problem's
// non-polynomial pieces are replaced by truncated Taylor expansions about
// the current state (and time, for the cost), a polynomial cost-to-go bound
// is solved for over the prediction horizon, the bang-bang feedback built
// from the bound steers the *exact* plant for one period, and the reached
// state seeds the next window.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sosmpc/control.hpp"
#include "sosmpc/expr.hpp"
#include "sosmpc/ocp.hpp"
#include "sosmpc/polynomial.hpp"
#include "sosmpc/sdp.hpp"
#include "sosmpc/sos_program.hpp"

namespace sosmpc {

/// How to generate a window's integration box about the current state.
struct RegionRule {
  enum class Kind { Constants, Offset };
  Kind kind = Kind::Constants;
  double lo = -1.0, hi = 1.0;  // Constants: fixed bounds per component
  double width = 0.0;          // Offset: x0_i -+ width

  static RegionRule constants(double lo, double hi) {
    RegionRule r;
    r.kind = Kind::Constants;
    r.lo = lo;
    r.hi = hi;
    return r;
  }
  static RegionRule offset(double width) {
    RegionRule r;
    r.kind = Kind::Offset;
    r.width = width;
    return r;
  }
};

/// Componentwise window box from the rule, clipped to the certificate cube
/// [-R, R]^n.  Throws if the clip empties any component.
inline Box window_region(const Eigen::VectorXd& x0, const RegionRule& rule, double radius) {
  const int n = static_cast<int>(x0.size());
  Eigen::VectorXd lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    const double a = rule.kind == RegionRule::Kind::Constants ? rule.lo : x0(i) - rule.width;
    const double b = rule.kind == RegionRule::Kind::Constants ? rule.hi : x0(i) + rule.width;
    lo(i) = std::max(a, -radius);
    hi(i) = std::min(b, radius);
    if (!(lo(i) <= hi(i)))
      throw std::invalid_argument("window_region: box is empty after clipping");
  }
  return Box(lo, hi);
}

/// Full problem statement: exact cost/dynamics/terminal pieces (polynomial
/// part plus optional non-polynomial summands), the start state, and the
/// record of any coordinate scaling applied (states reported to users are
/// state_scale .* x).
struct ProblemDefinition {
  int n = 0, m = 0;
  std::vector<ScalarPiece> cost;                   // m+1 pieces over (x, t)
  std::vector<std::vector<ScalarPiece>> dynamics;  // (m+1) rows of n pieces over x
  ScalarPiece terminal;                            // over x
  Eigen::VectorXd x0;
  Eigen::VectorXd state_scale;  // empty means identity

  void validate() const {
    if (n < 1) throw std::invalid_argument("ProblemDefinition: need at least one state");
    if (m < 0) throw std::invalid_argument("ProblemDefinition: negative input count");
    if (static_cast<int>(cost.size()) != m + 1)
      throw std::invalid_argument("ProblemDefinition: cost needs m+1 pieces");
    for (const auto& c : cost)
      if (c.poly.nvars() != n + 1)
        throw std::invalid_argument("ProblemDefinition: cost pieces live in (x, t)");
    if (static_cast<int>(dynamics.size()) != m + 1)
      throw std::invalid_argument("ProblemDefinition: dynamics needs m+1 rows");
    for (const auto& row : dynamics) {
      if (static_cast<int>(row.size()) != n)
        throw std::invalid_argument("ProblemDefinition: each dynamics row needs n components");
      for (const auto& f : row)
        if (f.poly.nvars() != n)
          throw std::invalid_argument("ProblemDefinition: dynamics components live in x");
    }
    if (terminal.poly.nvars() != n)
      throw std::invalid_argument("ProblemDefinition: terminal piece lives in x");
    if (x0.size() != n)
      throw std::invalid_argument("ProblemDefinition: start state dimension mismatch");
    if (state_scale.size() != 0 && state_scale.size() != n)
      throw std::invalid_argument("ProblemDefinition: state_scale dimension mismatch");
    bool any = false;
    for (const auto& c : cost) any = any || !c.poly.terms().empty() || !c.extra.empty();
    for (const auto& row : dynamics)
      for (const auto& f : row) any = any || !f.poly.terms().empty() || !f.extra.empty();
    if (!any) throw std::invalid_argument("ProblemDefinition: every piece is zero");
  }

  Plant plant() const {
    Plant p;
    p.n = n;
    p.m = m;
    p.cost = cost;
    p.dynamics = dynamics;
    return p;
  }
};

struct MPCConfig {
  double T = 0.0;    // final time
  double T_I = 0.0;  // implementation period (one window of applied control)
  double T_h = 0.0;  // prediction horizon per window
  int d = 0;         // bound polynomial degree
  int k = 1;         // Taylor truncation degree
  double R = 0.0;    // certificate ball radius
  RegionRule region;
  double dt = 0.01;  // cost-sampling step
  double h = 1e-3;   // integrator step
  SolverConfig solver;
  double usable_tol = 1e-5;  // accept iteration-capped solves below this residual

  void validate() const {
    if (!(T > 0.0)) throw std::invalid_argument("MPCConfig: T must be positive");
    if (!(T_I > 0.0) || !(T_I <= T_h))
      throw std::invalid_argument("MPCConfig: need 0 < T_I <= T_h");
    const double w = T / T_I;
    if (std::abs(w - std::round(w)) > 1e-9)
      throw std::invalid_argument("MPCConfig: T must be a whole number of periods");
    if (d < 2) throw std::invalid_argument("MPCConfig: degree must be at least 2");
    if (k < 1) throw std::invalid_argument("MPCConfig: Taylor degree must be at least 1");
    if (!(R > 0.0)) throw std::invalid_argument("MPCConfig: radius must be positive");
    if (!(h > 0.0) || !(dt > 0.0)) throw std::invalid_argument("MPCConfig: steps must be positive");
    const double s = dt / h;
    if (std::abs(s - std::round(s)) > 1e-6)
      throw std::invalid_argument("MPCConfig: dt must be a whole number of integrator steps");
    const double c = T_I / dt;
    if (std::abs(c - std::round(c)) > 1e-6)
      throw std::invalid_argument("MPCConfig: T_I must be a whole number of cost samples");
  }

  int num_windows() const { return static_cast<int>(std::llround(T / T_I)); }
};

/// Taylor-polynomialized instance for the window starting at (x0, t): the
/// polynomial parts pass through unchanged, each non-polynomial cost summand
/// is expanded about (x0, t) and each dynamics summand about x0, the
/// terminal cost is dropped (receding horizon), and the integration box
/// comes from the region rule.
inline OCPInstance polynomialize(const ProblemDefinition& prob, const Eigen::VectorXd& x0,
                                 double t, int k, double horizon, double radius,
                                 const RegionRule& rule) {
  prob.validate();
  if (x0.size() != prob.n) throw std::invalid_argument("polynomialize: state dimension mismatch");
  OCPInstance ocp;
  ocp.n = prob.n;
  ocp.m = prob.m;
  Eigen::VectorXd xt(prob.n + 1);
  xt.head(prob.n) = x0;
  xt(prob.n) = t;
  for (const auto& piece : prob.cost) {
    Polynomial c = piece.poly;
    for (const auto& e : piece.extra) c += taylor(e, xt, k);
    ocp.cost.push_back(std::move(c));
  }
  for (const auto& row : prob.dynamics) {
    std::vector<Polynomial> frow;
    for (const auto& piece : row) {
      Polynomial f = piece.poly;
      for (const auto& e : piece.extra) f += taylor(e, x0, k);
      frow.push_back(std::move(f));
    }
    ocp.dynamics.push_back(std::move(frow));
  }
  ocp.terminal = Polynomial(prob.n);
  ocp.t0 = t;
  ocp.t_end = t + horizon;
  ocp.radius = radius;
  ocp.region = window_region(x0, rule, radius);
  return ocp;
}

/// Problem in scaled coordinates y = L^{-1} x (L positive diagonal), so the
/// solver sees states near the unit box.  Dynamics become L^{-1} f(L y);
/// terminal becomes g(L y).  Cost pieces follow the chosen convention:
/// CostCoords::Original substitutes L y into them, CostCoords::Scaled keeps
/// them verbatim as functions of the scaled state.  The composite scale is
/// recorded so reports can restore original coordinates.
enum class CostCoords { Scaled, Original };

inline ProblemDefinition scale_problem(const ProblemDefinition& prob, const Eigen::VectorXd& L,
                                       CostCoords cost_coords = CostCoords::Scaled) {
  prob.validate();
  if (L.size() != prob.n) throw std::invalid_argument("scale_problem: scale dimension mismatch");
  for (int i = 0; i < L.size(); ++i)
    if (!(L(i) > 0.0)) throw std::invalid_argument("scale_problem: scale entries must be positive");

  const int n = prob.n;
  // x = L y substitutions for polynomial and expression parts.
  Eigen::MatrixXd Ax = L.asDiagonal();
  const Eigen::VectorXd bx = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd Axt = Eigen::MatrixXd::Identity(n + 1, n + 1);
  Axt.topLeftCorner(n, n) = Ax;
  const Eigen::VectorXd bxt = Eigen::VectorXd::Zero(n + 1);
  std::vector<Expr> sub_x, sub_xt;
  for (int i = 0; i < n; ++i) {
    sub_x.push_back(Expr::mul(Expr::constant(L(i)), Expr::variable(i)));
    sub_xt.push_back(Expr::mul(Expr::constant(L(i)), Expr::variable(i)));
  }
  sub_xt.push_back(Expr::variable(n));  // time passes through

  const auto map_piece = [](const ScalarPiece& piece, const Eigen::MatrixXd& A,
                            const Eigen::VectorXd& b, const std::vector<Expr>& sub,
                            double factor) {
    ScalarPiece out;
    out.poly = piece.poly.substitute_affine(A, b) * factor;
    for (const auto& e : piece.extra) {
      Expr mapped = substitute_vars(e, sub);
      if (factor != 1.0) mapped = Expr::mul(Expr::constant(factor), std::move(mapped));
      out.extra.push_back(std::move(mapped));
    }
    return out;
  };

  ProblemDefinition out;
  out.n = n;
  out.m = prob.m;
  for (const auto& piece : prob.cost)
    out.cost.push_back(cost_coords == CostCoords::Original
                           ? map_piece(piece, Axt, bxt, sub_xt, 1.0)
                           : piece);
  for (const auto& row : prob.dynamics) {
    std::vector<ScalarPiece> orow;
    for (int s = 0; s < n; ++s) orow.push_back(map_piece(row[s], Ax, bx, sub_x, 1.0 / L(s)));
    out.dynamics.push_back(std::move(orow));
  }
  out.terminal = cost_coords == CostCoords::Original
                     ? map_piece(prob.terminal, Ax, bx, sub_x, 1.0)
                     : prob.terminal;
  out.x0 = prob.x0.cwiseQuotient(L);
  out.state_scale = prob.state_scale.size() == 0 ? L : prob.state_scale.cwiseProduct(L).eval();
  return out;
}

// ---------------------------------------------------------------------------
// The receding-horizon run
// ---------------------------------------------------------------------------

/// Everything recorded about one implementation window.
struct WindowRecord {
  int index = 0;
  double t_start = 0.0, t_end = 0.0;  // applied segment
  double horizon_end = 0.0;           // end of the solved window
  Eigen::VectorXd expansion_x;
  double expansion_t = 0.0;
  int degree_used = 0;
  int attempts = 0;             // solve attempts consumed (1 = clean)
  bool region_shrunk = false;   // fallback (a) fired
  bool degree_reduced = false;  // fallback (b) fired
  bool reused_previous = false; // fallback (c): no fresh bound this window
  std::string solver_status;
  int solver_iterations = 0;
  double solver_primal_residual = 0.0, solver_dual_residual = 0.0;
  double solve_seconds = 0.0;   // wall time over all solve attempts
  double objective = 0.0;       // integral of the bound over the window box
  double bound_at_start = 0.0;  // bound value at the window's start state/time
  double window_cost = 0.0;     // sampled cost of the applied segment
  bool has_certificate = false;
  Certificate certificate;  // valid when has_certificate
  ValueApprox value;        // the bound steering this segment
};

struct RunResult {
  Trajectory trajectory;  // merged over all applied segments
  std::vector<WindowRecord> windows;
  double total_cost = 0.0;  // sum of per-window sampled costs
  bool aborted = false;     // stopped before reaching T
  std::string abort_reason;
  int windows_planned = 0;
  Eigen::VectorXd state_scale;  // reports multiply states by this (empty = identity)
};

namespace detail {

struct WindowSolve {
  bool ok = false;
  SolveResult result;
  SOSProgram program;
};

/// One ladder attempt: build and solve the window's cone program.
inline WindowSolve try_window(const OCPInstance& ocp, int degree, const SolverConfig& scfg,
                              double usable_tol) {
  WindowSolve ws;
  ws.program = build_sos_program(ocp, degree);
  ws.result = solve(ws.program.cone, scfg);
  ws.ok = ws.result.usable(usable_tol);
  return ws;
}

/// Box shrunk halfway toward the state, then clipped back to the cube.
inline Box shrink_region_about(const Box& box, const Eigen::VectorXd& x0, double radius) {
  const int n = box.dim();
  Eigen::VectorXd lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    double a = x0(i) + 0.5 * (box.lo(i) - x0(i));
    double b = x0(i) + 0.5 * (box.hi(i) - x0(i));
    a = std::max(a, -radius);
    b = std::min(b, radius);
    if (!(a <= b)) throw std::invalid_argument("shrink_region_about: box collapsed");
    lo(i) = a;
    hi(i) = b;
  }
  return Box(lo, hi);
}

}  // namespace detail

/// Run the full receding-horizon loop.  Solver trouble in a window walks a
/// fallback ladder: (a) shrink the window box halfway toward the state,
/// (b) additionally drop the bound degree by one, (c) keep steering with the
/// previous window's bound.  A window that exhausts the ladder with no
/// previous bound, or a simulation blow-up, aborts with the partial result.
inline RunResult run_mpc(const ProblemDefinition& prob, const MPCConfig& cfg) {
  prob.validate();
  cfg.validate();

  RunResult out;
  out.windows_planned = cfg.num_windows();
  out.state_scale = prob.state_scale;
  out.trajectory.h = cfg.h;

  const Plant plant = prob.plant();
  Eigen::VectorXd x = prob.x0;
  std::optional<BangBangController> previous;

  for (int w = 0; w < out.windows_planned; ++w) {
    const double t_w = w * cfg.T_I;
    WindowRecord rec;
    rec.index = w;
    rec.t_start = t_w;
    rec.t_end = (w + 1) * cfg.T_I;
    rec.horizon_end = t_w + cfg.T_h;
    rec.expansion_x = x;
    rec.expansion_t = t_w;

    // --- synthesize this window's bound, walking the ladder as needed ----
    OCPInstance ocp;
    bool built = false;
    try {
      ocp = polynomialize(prob, x, t_w, cfg.k, cfg.T_h, cfg.R, cfg.region);
      built = true;
    } catch (const std::invalid_argument&) {
      built = false;  // e.g. state left the cube and the box clipped empty
    }

    detail::WindowSolve ws;
    int degree = cfg.d;
    const auto solve_begin = std::chrono::steady_clock::now();
    if (built) {
      ++rec.attempts;
      ws = detail::try_window(ocp, degree, cfg.solver, cfg.usable_tol);
      if (!ws.ok) {
        try {  // (a) shrink the box halfway toward the state
          ocp.region = detail::shrink_region_about(ocp.region, x, cfg.R);
          rec.region_shrunk = true;
          ++rec.attempts;
          ws = detail::try_window(ocp, degree, cfg.solver, cfg.usable_tol);
        } catch (const std::invalid_argument&) {
        }
      }
      if (!ws.ok && degree - 1 >= 2) {  // (b) also lower the degree
        degree -= 1;
        rec.degree_reduced = true;
        ++rec.attempts;
        ws = detail::try_window(ocp, degree, cfg.solver, cfg.usable_tol);
      }
    }
    rec.solve_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - solve_begin).count();

    BangBangController ctrl;
    if (ws.ok) {
      rec.degree_used = degree;
      rec.solver_status = to_string(ws.result.kind);
      rec.solver_iterations = ws.result.iterations;
      rec.solver_primal_residual = ws.result.primal_residual;
      rec.solver_dual_residual = ws.result.dual_residual;
      rec.objective = ws.program.cone.objective.dot(ws.result.y);
      rec.certificate = extract_certificate(ws.program, ws.result);
      rec.has_certificate = true;
      rec.value = ValueApprox::from_certificate(rec.certificate);
      rec.value.expansion_x = x;
      rec.value.expansion_t = t_w;
      ctrl.plant = plant;
      ctrl.value = rec.value;
      previous = ctrl;
    } else if (previous.has_value()) {  // (c) hold the previous bound
      rec.reused_previous = true;
      rec.solver_status = built ? "reused-previous" : "reused-previous-empty-region";
      rec.value = previous->value;
      ctrl = *previous;
    } else {
      rec.solver_status = built ? to_string(ws.result.kind) : "empty-region";
      out.windows.push_back(std::move(rec));
      out.aborted = true;
      out.abort_reason = "no usable bound for the first window";
      return out;
    }
    rec.bound_at_start = rec.value.eval(x, t_w);

    // --- steer the exact plant for one implementation period --------------
    const SimOptions opt{cfg.h, 1e6};
    const SimResult sim = simulate_controlled(ctrl, x, t_w, rec.t_end, opt);
    rec.window_cost = sim.aborted ? 0.0 : riemann_cost(sim.traj, plant, cfg.dt);

    // Merge: the boundary node is owned by the newer segment, so each node's
    // input is the control actually applied from that node onward.
    const Trajectory& seg = sim.traj;
    out.trajectory.window_starts.push_back(out.trajectory.nodes());
    const int keep = sim.aborted ? seg.nodes() : seg.nodes() - 1;
    for (int i = 0; i < keep; ++i) {
      out.trajectory.t.push_back(seg.t[i]);
      out.trajectory.x.push_back(seg.x[i]);
      out.trajectory.u.push_back(seg.u[i]);
      out.trajectory.switching.push_back(seg.switching[i]);
    }
    if (sim.aborted) {
      out.windows.push_back(std::move(rec));
      out.aborted = true;
      out.abort_reason = "state blew up during window " + std::to_string(w);
      return out;
    }
    out.total_cost += rec.window_cost;
    x = seg.x.back();  // exact handoff
    out.windows.push_back(std::move(rec));

    if (w + 1 == out.windows_planned) {  // final node closes the record
      out.trajectory.t.push_back(seg.t.back());
      out.trajectory.x.push_back(seg.x.back());
      out.trajectory.u.push_back(seg.u.back());
      out.trajectory.switching.push_back(seg.switching.back());
    }
  }
  return out;
}

}  // namespace sosmpc

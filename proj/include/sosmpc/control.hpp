#pragma once

// Feedback synthesis and simulation.  A solved window gives a polynomial
// lower bound P on the cost-to-go; the control that greedily decreases the
// bound-based Hamiltonian is bang-bang per input:
//
//   u_i(x, t) = -sign( c_i(x, t) + grad_x P(x, t) . f_i(x) )
//
// where c_i and f_i are the plant's *exact* input-coefficient pieces (not
// their polynomial stand-ins used while solving).  The closed loop is
// integrated with a fixed-step RK4 scheme, holding the control constant over
// each step.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sosmpc/expr.hpp"
#include "sosmpc/ocp.hpp"
#include "sosmpc/polynomial.hpp"
#include "sosmpc/rng.hpp"
#include "sosmpc/sos_program.hpp"

namespace sosmpc {

/// One scalar piece of the plant: a polynomial part plus any number of
/// non-polynomial summands, all over the same variables.
struct ScalarPiece {
  Polynomial poly;
  std::vector<Expr> extra;

  ScalarPiece() = default;
  explicit ScalarPiece(Polynomial p) : poly(std::move(p)) {}
  ScalarPiece(Polynomial p, Expr e) : poly(std::move(p)) { extra.push_back(std::move(e)); }

  double operator()(const Eigen::VectorXd& pt) const {
    double v = poly.eval(pt);
    for (const auto& e : extra) v += eval(e, pt);
    return v;
  }
};

/// Control-affine plant with running cost
///   dx/dt = f_0(x) + sum_i f_i(x) u_i,
///   cost rate c_0(x, t) + sum_i c_i(x, t) u_i.
/// Cost pieces take (x..., t); dynamics pieces take x only.
struct Plant {
  int n = 0, m = 0;
  std::vector<ScalarPiece> cost;                   // m+1 pieces over (x, t)
  std::vector<std::vector<ScalarPiece>> dynamics;  // (m+1) rows of n pieces over x

  void validate() const {
    if (n < 1) throw std::invalid_argument("Plant: need at least one state");
    if (m < 0) throw std::invalid_argument("Plant: negative input count");
    if (static_cast<int>(cost.size()) != m + 1)
      throw std::invalid_argument("Plant: cost needs m+1 pieces");
    if (static_cast<int>(dynamics.size()) != m + 1)
      throw std::invalid_argument("Plant: dynamics needs m+1 rows");
    for (const auto& row : dynamics)
      if (static_cast<int>(row.size()) != n)
        throw std::invalid_argument("Plant: each dynamics row needs n components");
  }

  Eigen::VectorXd rhs(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    Eigen::VectorXd dx(n);
    for (int s = 0; s < n; ++s) dx(s) = dynamics[0][s](x);
    for (int i = 0; i < m; ++i) {
      if (u(i) == 0.0) continue;
      for (int s = 0; s < n; ++s) dx(s) += u(i) * dynamics[1 + i][s](x);
    }
    return dx;
  }

  double running_cost(const Eigen::VectorXd& x, double t, const Eigen::VectorXd& u) const {
    Eigen::VectorXd xt(n + 1);
    xt.head(n) = x;
    xt(n) = t;
    double c = cost[0](xt);
    for (int i = 0; i < m; ++i) c += u(i) * cost[1 + i](xt);
    return c;
  }
};

/// Polynomial cost-to-go bound for one window.  p_abs is the bound over
/// absolute (x, t); evaluation goes through the conditioned twin p_cond over
/// (x, tau), tau = (t - mid) / half in [-1, 1], whose coefficients stay tame
/// even for windows far from t = 0.
struct ValueApprox {
  Polynomial p_abs;              // over (x, t), absolute time
  Polynomial p_cond;             // over (x, tau)
  std::vector<Polynomial> grad;  // d p_cond / d x_s, over (x, tau)
  double time_mid = 0.0, time_half = 1.0;
  double t0 = 0.0, t_end = 0.0;   // window of validity, absolute time
  Eigen::VectorXd expansion_x;    // point the window's surrogates expand about
  double expansion_t = 0.0;

  static ValueApprox from_certificate(const Certificate& cert) {
    ValueApprox v;
    v.p_cond = cert.p_conditioned();
    v.p_abs = cert.p_absolute();
    for (int s = 0; s < cert.n; ++s) v.grad.push_back(v.p_cond.partial(s));
    v.time_mid = cert.time_mid;
    v.time_half = cert.time_half;
    v.t0 = cert.t0;
    v.t_end = cert.t_end;
    return v;
  }

  bool in_window(double t) const { return t >= t0 && t <= t_end; }

  int states() const { return static_cast<int>(grad.size()); }
  double tau_of(double t) const { return (t - time_mid) / time_half; }

  double eval(const Eigen::VectorXd& x, double t) const {
    Eigen::VectorXd pt(states() + 1);
    pt.head(states()) = x;
    pt(states()) = tau_of(t);
    return p_cond.eval(pt);
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x, double t) const {
    Eigen::VectorXd pt(states() + 1);
    pt.head(states()) = x;
    pt(states()) = tau_of(t);
    Eigen::VectorXd g(states());
    for (int s = 0; s < states(); ++s) g(s) = grad[s].eval(pt);
    return g;
  }
};

struct BangBangController {
  Plant plant;
  ValueApprox value;

  /// Per-input switching value c_i(x, t) + grad_x P(x, t) . f_i(x); the
  /// control flips where a component changes sign.
  Eigen::VectorXd switching(const Eigen::VectorXd& x, double t) const {
    const Eigen::VectorXd g = value.gradient(x, t);
    Eigen::VectorXd xt(plant.n + 1);
    xt.head(plant.n) = x;
    xt(plant.n) = t;
    Eigen::VectorXd s(plant.m);
    for (int i = 0; i < plant.m; ++i) {
      double si = plant.cost[1 + i](xt);
      for (int k = 0; k < plant.n; ++k) si += g(k) * plant.dynamics[1 + i][k](x);
      s(i) = si;
    }
    return s;
  }

  /// u_i = -1 where the switching value is positive, +1 where negative, and
  /// +1 at an exact zero: the input is always a vertex, never 0.
  static Eigen::VectorXd feedback_from(const Eigen::VectorXd& switching_values) {
    Eigen::VectorXd u(switching_values.size());
    for (int i = 0; i < u.size(); ++i) u(i) = switching_values(i) > 0.0 ? -1.0 : 1.0;
    return u;
  }

  Eigen::VectorXd control(const Eigen::VectorXd& x, double t) const {
    return feedback_from(switching(x, t));
  }
};

/// Dense fixed-step record of one closed-loop run.  u[k] is the control held
/// on [t[k], t[k+1]); the final entry repeats the feedback evaluated at the
/// last node so every node has a full row.  window_starts lists the node
/// indices where a freshly synthesized controller took over (empty for a
/// single-controller run).
struct Trajectory {
  double h = 0.0;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> u;
  std::vector<Eigen::VectorXd> switching;
  std::vector<int> window_starts;

  int nodes() const { return static_cast<int>(t.size()); }
};

struct SimOptions {
  double h = 1e-3;
  double blowup = 1e6;  // abort once any state magnitude passes this
};

struct SimResult {
  Trajectory traj;
  bool aborted = false;  // state left the finite/bounded regime
};

namespace detail {

/// Number of h-steps spanning [t0, t1]; the span must be a whole number of
/// steps to machine accuracy.
inline int step_count(double t0, double t1, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("simulate: step must be positive");
  if (!(t1 > t0)) throw std::invalid_argument("simulate: empty time span");
  const double span = t1 - t0;
  const long long steps = std::llround(span / h);
  if (steps < 1 || std::abs(static_cast<double>(steps) * h - span) > 1e-9 * std::max(1.0, span))
    throw std::invalid_argument("simulate: span is not a whole number of steps");
  return static_cast<int>(steps);
}

inline bool state_ok(const Eigen::VectorXd& x, double blowup) {
  for (int i = 0; i < x.size(); ++i)
    if (!std::isfinite(x(i)) || std::abs(x(i)) > blowup) return false;
  return true;
}

}  // namespace detail

inline Eigen::VectorXd rk4_step(const Plant& plant, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u, double h) {
  const Eigen::VectorXd k1 = plant.rhs(x, u);
  const Eigen::VectorXd k2 = plant.rhs(x + (0.5 * h) * k1, u);
  const Eigen::VectorXd k3 = plant.rhs(x + (0.5 * h) * k2, u);
  const Eigen::VectorXd k4 = plant.rhs(x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Closed-loop run over [t0, t1]: the feedback is sampled once per step and
/// held for the step.  Aborts (with the trajectory so far) if the state
/// stops being finite and bounded.
inline SimResult simulate_controlled(const BangBangController& ctrl, const Eigen::VectorXd& x0,
                                     double t0, double t1, const SimOptions& opt = SimOptions()) {
  ctrl.plant.validate();
  if (x0.size() != ctrl.plant.n)
    throw std::invalid_argument("simulate: initial state dimension mismatch");
  const int steps = detail::step_count(t0, t1, opt.h);

  SimResult res;
  Trajectory& traj = res.traj;
  traj.h = opt.h;
  traj.t.reserve(steps + 1);
  traj.x.reserve(steps + 1);
  traj.u.reserve(steps + 1);
  traj.switching.reserve(steps + 1);

  Eigen::VectorXd x = x0;
  for (int k = 0; k <= steps; ++k) {
    const double t = t0 + k * opt.h;
    const Eigen::VectorXd s = ctrl.switching(x, t);
    const Eigen::VectorXd u = BangBangController::feedback_from(s);
    for (int i = 0; i < u.size(); ++i)
      if (u(i) != 1.0 && u(i) != -1.0)
        throw std::logic_error("simulate: feedback left the vertex set");
    traj.t.push_back(t);
    traj.x.push_back(x);
    traj.u.push_back(u);
    traj.switching.push_back(s);
    if (k == steps) break;
    const Eigen::VectorXd next = rk4_step(ctrl.plant, x, u, opt.h);
    if (!detail::state_ok(next, opt.blowup)) {
      res.aborted = true;
      break;
    }
    x = next;
  }
  return res;
}

/// Cost of a recorded run by the left-endpoint rectangle rule on a dt grid:
/// the rate is sampled at nodes 0, dt, 2 dt, ... strictly before the final
/// node, each weighted by dt.  dt must be a whole multiple of the record's
/// step, and the record a whole number of dt intervals.
inline double riemann_cost(const Trajectory& traj, const Plant& plant, double dt) {
  if (traj.nodes() < 2) throw std::invalid_argument("riemann_cost: empty trajectory");
  if (!(dt > 0.0)) throw std::invalid_argument("riemann_cost: dt must be positive");
  const long long stride = std::llround(dt / traj.h);
  if (stride < 1 || std::abs(static_cast<double>(stride) * traj.h - dt) > 1e-9)
    throw std::invalid_argument("riemann_cost: dt is not a multiple of the record step");
  const int last = traj.nodes() - 1;
  if (last % stride != 0)
    throw std::invalid_argument("riemann_cost: record does not cover whole dt intervals");
  double sum = 0.0;
  for (int k = 0; k < last; k += static_cast<int>(stride))
    sum += plant.running_cost(traj.x[k], traj.t[k], traj.u[k]) * dt;
  return sum;
}

// ---------------------------------------------------------------------------
// Randomized lower-bound audit
// ---------------------------------------------------------------------------

struct SubvalueCheck {
  int attempted = 0;
  int completed = 0;  // trials whose whole path stayed inside the ball
  int truncated = 0;  // trials scored at their last sample inside the ball
  double min_slack = std::numeric_limits<double>::infinity();
};

/// Empirical audit of the lower-bound property on the window's own
/// (polynomial) data, driving the window's dynamics from the given start
/// with random piecewise-constant admissible inputs.  A trial that stays
/// inside the certified ball for the whole window must satisfy
///   bound(start) <= accumulated cost + terminal cost.
/// A trial that leaves the ball is scored at its last in-ball sample
/// instead: integrating the flow inequality over the surviving prefix gives
///   bound(start) <= prefix cost + bound(last sample),
/// which holds no matter what the path does afterwards.  Every trial
/// therefore contributes a slack; min_slack < 0 beyond numerical tolerance
/// disproves the bound.
inline SubvalueCheck check_subvalue(const OCPInstance& ocp, const ValueApprox& value,
                                    const Eigen::VectorXd& x_start, int num_trials,
                                    int segments, double h, std::uint64_t seed) {
  ocp.validate();
  if (segments < 1) throw std::invalid_argument("check_subvalue: need at least one segment");
  if (x_start.size() != ocp.n)
    throw std::invalid_argument("check_subvalue: start state dimension mismatch");
  if (x_start.norm() > ocp.radius + 1e-9)
    throw std::invalid_argument("check_subvalue: start state outside the certified ball");
  const int n = ocp.n, m = ocp.m;
  const int steps = detail::step_count(ocp.t0, ocp.t_end, h);
  Rng rng(seed);

  const auto rhs = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    Eigen::VectorXd dx(n);
    for (int s = 0; s < n; ++s) dx(s) = ocp.dynamics[0][s].eval(x);
    for (int i = 0; i < m; ++i)
      for (int s = 0; s < n; ++s) dx(s) += u(i) * ocp.dynamics[1 + i][s].eval(x);
    return dx;
  };
  const auto rate = [&](const Eigen::VectorXd& x, double t, const Eigen::VectorXd& u) {
    Eigen::VectorXd xt(n + 1);
    xt.head(n) = x;
    xt(n) = t;
    double c = ocp.cost[0].eval(xt);
    for (int i = 0; i < m; ++i) c += u(i) * ocp.cost[1 + i].eval(xt);
    return c;
  };

  const double bound_at_start = value.eval(x_start, ocp.t0);

  SubvalueCheck out;
  out.attempted = num_trials;
  for (int trial = 0; trial < num_trials; ++trial) {
    Eigen::VectorXd x = x_start;
    // Piecewise-constant input: per segment and channel, a vertex value with
    // probability one half, otherwise uniform in the box.
    Eigen::MatrixXd useg(m, segments);
    for (int j = 0; j < segments; ++j)
      for (int i = 0; i < m; ++i)
        useg(i, j) = rng.unit() < 0.5 ? (rng.unit() < 0.5 ? -1.0 : 1.0)
                                      : rng.uniform(-1.0, 1.0);

    double J = 0.0;
    bool exited = false;
    double slack = 0.0;
    for (int k = 0; k < steps; ++k) {
      const double t = ocp.t0 + k * h;
      const int seg = std::min(segments - 1,
                               static_cast<int>((static_cast<long long>(k) * segments) / steps));
      const Eigen::VectorXd u = useg.col(seg);
      const Eigen::VectorXd k1 = rhs(x, u);
      const double c1 = rate(x, t, u);
      const Eigen::VectorXd k2 = rhs(x + (0.5 * h) * k1, u);
      const double c2 = rate(x + (0.5 * h) * k1, t + 0.5 * h, u);
      const Eigen::VectorXd k3 = rhs(x + (0.5 * h) * k2, u);
      const double c3 = rate(x + (0.5 * h) * k2, t + 0.5 * h, u);
      const Eigen::VectorXd k4 = rhs(x + h * k3, u);
      const double c4 = rate(x + h * k3, t + h, u);
      const Eigen::VectorXd x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (x_next.norm() > ocp.radius) {
        exited = true;
        slack = J + value.eval(x, t) - bound_at_start;
        break;
      }
      x = x_next;
      J += (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
    }
    if (exited) {
      ++out.truncated;
    } else {
      ++out.completed;
      slack = J + ocp.terminal.eval(x) - bound_at_start;
    }
    out.min_slack = std::min(out.min_slack, slack);
  }
  return out;
}

}  // namespace sosmpc

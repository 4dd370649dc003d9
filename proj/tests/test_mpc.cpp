// Receding-horizon orchestration: window boxes, Taylor surrogates, state
// scaling, the fallback ladder, and full closed-loop runs checked against a
// plant with a closed-form optimal cost.

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "sosmpc/control.hpp"
#include "sosmpc/expr.hpp"
#include "sosmpc/mpc.hpp"
#include "sosmpc/polynomial.hpp"

#include "support/test_rng.hpp"

using namespace sosmpc;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

Polynomial poly_from(int nvars, std::initializer_list<std::pair<std::vector<int>, double>> ts) {
  Polynomial p(nvars);
  for (const auto& [exps, c] : ts) p.add_term(Monomial{exps}, c);
  return p;
}

/// Single integrator with quadratic running cost: dx/dt = u, cost x^2,
/// |u| <= 1.  From (x, t) with horizon end T the optimal strategy drives x
/// to zero at unit rate and parks there, giving the closed-form optimum
/// |x|^3/3 when there is room, else (|x|^3 - (|x| - (T-t))^3)/3.
ProblemDefinition single_integrator(double x0) {
  ProblemDefinition prob;
  prob.n = 1;
  prob.m = 1;
  prob.cost = {ScalarPiece(poly_from(2, {{{2, 0}, 1.0}})), ScalarPiece(Polynomial(2))};
  prob.dynamics = {{ScalarPiece(Polynomial(1))}, {ScalarPiece(poly_from(1, {{{0}, 1.0}}))}};
  prob.terminal = ScalarPiece(Polynomial(1));
  prob.x0 = vec({x0});
  return prob;
}

double closed_form_park_cost(double x, double span) {
  const double a = std::abs(x);
  if (a <= span) return a * a * a / 3.0;
  const double rem = a - span;
  return (a * a * a - rem * rem * rem) / 3.0;
}

}  // namespace

TEST_CASE("window boxes follow the rule and clip to the cube") {
  SECTION("constant bounds ignore the state") {
    const Box b = window_region(vec({0.3, -0.2}), RegionRule::constants(-0.75, 0.75), 2.0);
    REQUIRE(b.lo(0) == -0.75);
    REQUIRE(b.hi(0) == 0.75);
    REQUIRE(b.lo(1) == -0.75);
    REQUIRE(b.hi(1) == 0.75);
  }
  SECTION("constant bounds clip to the cube") {
    const Box b = window_region(vec({0.0}), RegionRule::constants(-2.0, 2.0), 1.0);
    REQUIRE(b.lo(0) == -1.0);
    REQUIRE(b.hi(0) == 1.0);
  }
  SECTION("offsets center on the state") {
    const Box b = window_region(vec({0.5, 0.5}), RegionRule::offset(0.2), 1.0);
    REQUIRE(b.lo(0) == Catch::Approx(0.3));
    REQUIRE(b.hi(0) == Catch::Approx(0.7));
    REQUIRE(b.lo(1) == Catch::Approx(0.3));
    REQUIRE(b.hi(1) == Catch::Approx(0.7));
  }
  SECTION("offsets near the cube face get clipped, not rejected") {
    const Box b = window_region(vec({0.95, 0.0}), RegionRule::offset(0.2), 1.0);
    REQUIRE(b.lo(0) == Catch::Approx(0.75));
    REQUIRE(b.hi(0) == 1.0);
    REQUIRE(b.lo(1) == Catch::Approx(-0.2));
    REQUIRE(b.hi(1) == Catch::Approx(0.2));
  }
  SECTION("a state far outside the cube empties the box") {
    REQUIRE_THROWS_AS(window_region(vec({5.0}), RegionRule::offset(0.2), 1.0),
                      std::invalid_argument);
  }
}

TEST_CASE("config validation and window counting") {
  MPCConfig cfg;
  cfg.T = 20.0;
  cfg.T_I = 0.5;
  cfg.T_h = 1.0;
  cfg.d = 5;
  cfg.k = 4;
  cfg.R = 0.75 * std::sqrt(2.0);
  REQUIRE_NOTHROW(cfg.validate());
  REQUIRE(cfg.num_windows() == 40);

  MPCConfig fine = cfg;
  fine.T = 4.0;
  fine.T_I = 0.25;
  fine.T_h = 0.5;
  REQUIRE_NOTHROW(fine.validate());
  REQUIRE(fine.num_windows() == 16);

  SECTION("period must not exceed the horizon") {
    MPCConfig bad = cfg;
    bad.T_h = 0.25;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
  SECTION("final time must be a whole number of periods") {
    MPCConfig bad = cfg;
    bad.T = 20.3;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
  SECTION("degree floor") {
    MPCConfig bad = cfg;
    bad.d = 1;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
  SECTION("expansion order floor") {
    MPCConfig bad = cfg;
    bad.k = 0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
  SECTION("cost sampling must align with the integrator grid") {
    MPCConfig bad = cfg;
    bad.dt = 0.0123;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.dt = 0.3;  // T_I / dt is not an integer
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}

TEST_CASE("problem statement validation") {
  ProblemDefinition prob = single_integrator(0.8);
  REQUIRE_NOTHROW(prob.validate());

  SECTION("cost piece count") {
    ProblemDefinition bad = prob;
    bad.cost.pop_back();
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
  SECTION("cost pieces live in one more variable than the state") {
    ProblemDefinition bad = prob;
    bad.cost[0] = ScalarPiece(Polynomial(1));
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
  SECTION("start state dimension") {
    ProblemDefinition bad = prob;
    bad.x0 = vec({0.1, 0.2});
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
  SECTION("an all-zero problem is rejected") {
    ProblemDefinition bad = prob;
    bad.cost = {ScalarPiece(Polynomial(2)), ScalarPiece(Polynomial(2))};
    bad.dynamics = {{ScalarPiece(Polynomial(1))}, {ScalarPiece(Polynomial(1))}};
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  }
  SECTION("expansion state dimension is checked") {
    REQUIRE_THROWS_AS(
        polynomialize(prob, vec({0.1, 0.2}), 0.0, 2, 1.0, 1.0, RegionRule::constants(-1, 1)),
        std::invalid_argument);
  }
}

TEST_CASE("polynomial problems pass through the window builder unchanged") {
  const ProblemDefinition prob = single_integrator(0.8);
  const OCPInstance ocp =
      polynomialize(prob, vec({0.8}), 1.5, 3, 2.0, 1.0, RegionRule::constants(-1.0, 1.0));
  REQUIRE(ocp.n == 1);
  REQUIRE(ocp.m == 1);
  REQUIRE((ocp.cost[0] - prob.cost[0].poly).max_abs_coeff() == 0.0);
  REQUIRE((ocp.cost[1] - prob.cost[1].poly).max_abs_coeff() == 0.0);
  REQUIRE((ocp.dynamics[0][0] - prob.dynamics[0][0].poly).max_abs_coeff() == 0.0);
  REQUIRE((ocp.dynamics[1][0] - prob.dynamics[1][0].poly).max_abs_coeff() == 0.0);
  REQUIRE(ocp.terminal.terms().empty());  // receding horizon: no end cost
  REQUIRE(ocp.t0 == 1.5);
  REQUIRE(ocp.t_end == 3.5);  // horizon extends past any outer final time
  REQUIRE(ocp.radius == 1.0);
  REQUIRE(ocp.region.lo(0) == -1.0);
  REQUIRE(ocp.region.hi(0) == 1.0);
  REQUIRE_NOTHROW(ocp.validate());
}

TEST_CASE("transcendental pieces become Taylor surrogates about the window start") {
  // Oscillator-style cost with a rotating linear term and a pendulum-style
  // input channel: c0 = x1^2 + x2^2 + 0.04 - 0.4 x1 cos t + 0.4 x2 sin t,
  // f1 = (0, -sin(x1 + 0.5)).
  const std::vector<std::string> names = {"x1", "x2", "t"};
  ProblemDefinition prob;
  prob.n = 2;
  prob.m = 1;
  ScalarPiece c0(poly_from(3, {{{2, 0, 0}, 1.0}, {{0, 2, 0}, 1.0}, {{0, 0, 0}, 0.04}}));
  c0.extra.push_back(parse_expr("-0.4*x1*cos(t)", names));
  c0.extra.push_back(parse_expr("0.4*x2*sin(t)", names));
  prob.cost = {c0, ScalarPiece(Polynomial(3))};
  ScalarPiece f21(Polynomial(2));
  f21.extra.push_back(parse_expr("-sin(x1 + 0.5)", {"x1", "x2"}));
  prob.dynamics = {
      {ScalarPiece(poly_from(2, {{{0, 1}, 1.0}})), ScalarPiece(Polynomial(2))},
      {ScalarPiece(Polynomial(2)), f21},
  };
  prob.terminal = ScalarPiece(Polynomial(2));
  prob.x0 = vec({0.75, 0.75});
  prob.validate();

  const Eigen::VectorXd x0 = vec({0.3, -0.4});
  const double t_w = 2.0;
  const int k = 4;
  const OCPInstance ocp = polynomialize(prob, x0, t_w, k, 1.0, 1.5, RegionRule::offset(0.5));

  SECTION("surrogates are polynomials of bounded degree") {
    REQUIRE(ocp.cost[0].degree() <= 1 + k);  // linear state factor times degree-k series
    REQUIRE(ocp.dynamics[1][1].degree() <= k);
  }
  SECTION("surrogates match the exact pieces at the expansion point") {
    Eigen::VectorXd xt(3);
    xt << x0(0), x0(1), t_w;
    const double exact_c = x0(0) * x0(0) + x0(1) * x0(1) + 0.04 -
                           0.4 * x0(0) * std::cos(t_w) + 0.4 * x0(1) * std::sin(t_w);
    REQUIRE(ocp.cost[0].eval(xt) == Catch::Approx(exact_c).margin(1e-12));
    REQUIRE(ocp.dynamics[1][1].eval(x0) ==
            Catch::Approx(-std::sin(x0(0) + 0.5)).margin(1e-12));
  }
  SECTION("surrogates stay close through the window") {
    testsupport::Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd x(2);
      x << x0(0) + rng.uniform(-0.3, 0.3), x0(1) + rng.uniform(-0.3, 0.3);
      const double t = t_w + rng.uniform(0.0, 1.0);
      Eigen::VectorXd xt(3);
      xt << x(0), x(1), t;
      const double exact_c =
          x(0) * x(0) + x(1) * x(1) + 0.04 - 0.4 * x(0) * std::cos(t) + 0.4 * x(1) * std::sin(t);
      // Degree-4 remainders over offsets below 1: comfortably under 1e-2.
      REQUIRE(ocp.cost[0].eval(xt) == Catch::Approx(exact_c).margin(1e-2));
      REQUIRE(ocp.dynamics[1][1].eval(x) ==
              Catch::Approx(-std::sin(x(0) + 0.5)).margin(1e-2));
    }
  }
}

TEST_CASE("state scaling") {
  SECTION("unit scale is a no-op") {
    const ProblemDefinition prob = single_integrator(0.8);
    const ProblemDefinition same = scale_problem(prob, vec({1.0}));
    REQUIRE((same.cost[0].poly - prob.cost[0].poly).max_abs_coeff() == 0.0);
    REQUIRE((same.dynamics[1][0].poly - prob.dynamics[1][0].poly).max_abs_coeff() == 0.0);
    REQUIRE(same.x0(0) == 0.8);
    REQUIRE(same.state_scale.size() == 1);
    REQUIRE(same.state_scale(0) == 1.0);
  }

  SECTION("a linear drift field is scale invariant") {
    // dx/dt = x stays dy/dt = y under x = L y.
    ProblemDefinition prob;
    prob.n = 1;
    prob.m = 1;
    prob.cost = {ScalarPiece(poly_from(2, {{{2, 0}, 1.0}})), ScalarPiece(Polynomial(2))};
    prob.dynamics = {{ScalarPiece(poly_from(1, {{{1}, 1.0}}))},
                     {ScalarPiece(poly_from(1, {{{0}, 1.0}}))}};
    prob.terminal = ScalarPiece(Polynomial(1));
    prob.x0 = vec({0.5});
    const ProblemDefinition scaled = scale_problem(prob, vec({2.0}));
    REQUIRE((scaled.dynamics[0][0].poly - prob.dynamics[0][0].poly).max_abs_coeff() == 0.0);
    // The constant input channel halves: dy/dt = y + u/2.
    REQUIRE(scaled.dynamics[1][0].poly.eval(vec({0.3})) == Catch::Approx(0.5));
    REQUIRE(scaled.x0(0) == 0.25);
  }

  SECTION("scaled vector fields satisfy dy/dt = L^{-1} f(L y)") {
    ProblemDefinition prob;
    prob.n = 2;
    prob.m = 1;
    prob.cost = {ScalarPiece(poly_from(3, {{{2, 0, 0}, 1.0}, {{0, 2, 0}, 1.0}})),
                 ScalarPiece(Polynomial(3))};
    ScalarPiece f20(poly_from(2, {{{0, 1}, -0.3}}));
    f20.extra.push_back(parse_expr("2*sin(x1)", {"x1", "x2"}));
    prob.dynamics = {
        {ScalarPiece(poly_from(2, {{{0, 1}, 1.0}})), f20},
        {ScalarPiece(Polynomial(2)), ScalarPiece(poly_from(2, {{{0, 0}, -4.0}}))},
    };
    prob.terminal = ScalarPiece(Polynomial(2));
    prob.x0 = vec({1.5, 15.0});
    const Eigen::VectorXd L = vec({3.0, 30.0});
    const ProblemDefinition scaled = scale_problem(prob, L);
    REQUIRE(scaled.x0(0) == Catch::Approx(0.5));
    REQUIRE(scaled.x0(1) == Catch::Approx(0.5));

    const Plant original = prob.plant();
    const Plant small = scaled.plant();
    testsupport::Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
      Eigen::VectorXd y(2), u(1);
      y << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
      u << (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0);
      const Eigen::VectorXd lhs = original.rhs(L.cwiseProduct(y), u);
      const Eigen::VectorXd rhs = L.cwiseProduct(small.rhs(y, u));
      REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SECTION("cost conventions") {
    ProblemDefinition prob;
    prob.n = 1;
    prob.m = 1;
    ScalarPiece c0(poly_from(2, {{{2, 0}, 1.0}}));
    c0.extra.push_back(parse_expr("exp(-t)*x1", {"x1", "t"}));
    prob.cost = {c0, ScalarPiece(Polynomial(2))};
    prob.dynamics = {{ScalarPiece(Polynomial(1))}, {ScalarPiece(poly_from(1, {{{0}, 1.0}}))}};
    prob.terminal = ScalarPiece(poly_from(1, {{{2}, 3.0}}));
    prob.x0 = vec({0.5});
    const Eigen::VectorXd L = vec({2.0});

    // Default: the written cost applies to the scaled state verbatim.
    const ProblemDefinition kept = scale_problem(prob, L, CostCoords::Scaled);
    Eigen::VectorXd yt(2);
    yt << 0.3, 1.2;
    REQUIRE(kept.cost[0](yt) == Catch::Approx(prob.cost[0](yt)));
    REQUIRE(kept.terminal(vec({0.3})) == Catch::Approx(prob.terminal(vec({0.3}))));

    // Original coordinates: cost pieces compose with x = L y.
    const ProblemDefinition mapped = scale_problem(prob, L, CostCoords::Original);
    Eigen::VectorXd xt(2);
    xt << L(0) * yt(0), yt(1);
    REQUIRE(mapped.cost[0](yt) == Catch::Approx(prob.cost[0](xt)));
    REQUIRE(mapped.terminal(vec({0.3})) == Catch::Approx(prob.terminal(vec({0.6}))));
  }

  SECTION("repeated scaling composes the report scale") {
    ProblemDefinition prob = single_integrator(0.8);
    const ProblemDefinition once = scale_problem(prob, vec({2.0}));
    const ProblemDefinition twice = scale_problem(once, vec({5.0}));
    REQUIRE(twice.state_scale(0) == 10.0);
    REQUIRE(twice.x0(0) == Catch::Approx(0.08));
  }

  SECTION("scale entries must be positive") {
    REQUIRE_THROWS_AS(scale_problem(single_integrator(0.8), vec({-1.0})),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(scale_problem(single_integrator(0.8), vec({0.0})),
                      std::invalid_argument);
  }
}

TEST_CASE("single window matches the exhaustive switching search on its grid") {
  // One controller for the whole run, deciding on a 6-segment grid: the loop
  // then plays inside the finite space of 2^6 vertex sequences, so the
  // exhaustive minimum over that space (same integrator, same sampled cost)
  // bounds it from below and a near-optimal controller should land on it.
  const ProblemDefinition prob = single_integrator(0.8);
  MPCConfig cfg;
  cfg.T = 3.0;
  cfg.T_I = 3.0;
  cfg.T_h = 3.0;
  cfg.d = 4;
  cfg.k = 1;
  cfg.R = 1.0;
  cfg.region = RegionRule::constants(-1.0, 1.0);
  cfg.h = 0.5;
  cfg.dt = 0.5;
  cfg.solver.eps_primal = 1e-9;
  cfg.solver.eps_dual = 1e-9;
  cfg.solver.eps_gap = 1e-8;
  cfg.validate();

  const RunResult res = run_mpc(prob, cfg);
  REQUIRE_FALSE(res.aborted);
  REQUIRE(res.windows.size() == 1);
  REQUIRE(res.windows[0].has_certificate);
  REQUIRE(res.windows[0].attempts == 1);
  REQUIRE(res.trajectory.nodes() == 7);
  REQUIRE(res.trajectory.window_starts == std::vector<int>{0});

  const Plant plant = prob.plant();
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < 64; ++mask) {
    Eigen::VectorXd x = vec({0.8});
    Eigen::VectorXd u(1);
    double cost = 0.0;
    for (int seg = 0; seg < 6; ++seg) {
      u(0) = (mask >> seg) & 1 ? 1.0 : -1.0;
      Eigen::VectorXd xt(2);
      xt << x(0), 0.5 * seg;
      cost += 0.5 * plant.running_cost(x, 0.5 * seg, u);
      x = rk4_step(plant, x, u, 0.5);
    }
    best = std::min(best, cost);
  }
  REQUIRE(res.total_cost >= best - 1e-12);  // the run plays inside the search space
  REQUIRE(res.total_cost <= 1.05 * best);

  // The certificate value is a lower bound on any achievable cost, the run
  // included.
  REQUIRE(res.windows[0].bound_at_start > 0.0);
  REQUIRE(res.windows[0].bound_at_start <= res.total_cost + 1e-9);
}

TEST_CASE("windows chain exactly and the books balance") {
  const ProblemDefinition prob = single_integrator(0.8);
  MPCConfig cfg;
  cfg.T = 3.0;
  cfg.T_I = 0.5;
  cfg.T_h = 1.0;
  cfg.d = 3;
  cfg.k = 1;
  cfg.R = 1.0;
  cfg.region = RegionRule::constants(-1.0, 1.0);
  cfg.validate();

  const RunResult res = run_mpc(prob, cfg);
  REQUIRE_FALSE(res.aborted);
  REQUIRE(res.windows_planned == 6);
  REQUIRE(res.windows.size() == 6);
  REQUIRE(res.trajectory.nodes() == 3001);
  REQUIRE(res.trajectory.window_starts == std::vector<int>{0, 500, 1000, 1500, 2000, 2500});

  SECTION("each window starts bitwise at the state the last one reached") {
    for (int w = 0; w < 6; ++w) {
      const int node = res.trajectory.window_starts[w];
      REQUIRE(res.trajectory.x[node](0) == res.windows[w].expansion_x(0));
      REQUIRE(res.windows[w].expansion_t == res.windows[w].t_start);
    }
  }

  SECTION("total cost is the exact sum of window costs") {
    double acc = 0.0;
    for (const auto& w : res.windows) acc += w.window_cost;
    REQUIRE(res.total_cost == acc);
    const double merged = riemann_cost(res.trajectory, prob.plant(), cfg.dt);
    REQUIRE(merged == Catch::Approx(res.total_cost).margin(1e-10));
  }

  SECTION("every window solved cleanly at full degree") {
    for (const auto& w : res.windows) {
      REQUIRE(w.has_certificate);
      REQUIRE(w.degree_used == 3);
      REQUIRE(w.attempts == 1);
      REQUIRE_FALSE(w.region_shrunk);
      REQUIRE_FALSE(w.degree_reduced);
      REQUIRE_FALSE(w.reused_previous);
      REQUIRE(w.horizon_end == Catch::Approx(w.t_start + 1.0));
    }
  }

  SECTION("replaying the stored inputs reproduces the stored states") {
    const Plant plant = prob.plant();
    Eigen::VectorXd x = res.trajectory.x[0];
    for (int k = 0; k + 1 < res.trajectory.nodes(); ++k) {
      x = rk4_step(plant, x, res.trajectory.u[k], cfg.h);
      REQUIRE((x - res.trajectory.x[k + 1]).cwiseAbs().maxCoeff() <= 1e-9);
    }
  }

  SECTION("the run cost lands near the closed-form optimum") {
    const double ideal = closed_form_park_cost(0.8, 3.0);
    REQUIRE(res.total_cost >= ideal - 1e-9);
    REQUIRE(res.total_cost <= ideal + 0.02);
  }
}

TEST_CASE("fallback ladder") {
  SECTION("a hopeless solver walks region, degree, then aborts window zero") {
    const ProblemDefinition prob = single_integrator(0.8);
    MPCConfig cfg;
    cfg.T = 1.0;
    cfg.T_I = 0.5;
    cfg.T_h = 0.5;
    cfg.d = 4;
    cfg.k = 1;
    cfg.R = 1.0;
    cfg.region = RegionRule::constants(-1.0, 1.0);
    cfg.solver.max_iter = 30;   // nowhere near convergence
    cfg.usable_tol = 1e-13;     // and nothing counts as usable
    cfg.validate();

    const RunResult res = run_mpc(prob, cfg);
    REQUIRE(res.aborted);
    REQUIRE(res.windows.size() == 1);
    REQUIRE(res.windows[0].attempts == 3);
    REQUIRE(res.windows[0].region_shrunk);
    REQUIRE(res.windows[0].degree_reduced);
    REQUIRE_FALSE(res.windows[0].has_certificate);
    REQUIRE_FALSE(res.abort_reason.empty());
    REQUIRE(res.trajectory.nodes() == 0);
  }

  SECTION("degree two skips the degree rung") {
    const ProblemDefinition prob = single_integrator(0.8);
    MPCConfig cfg;
    cfg.T = 0.5;
    cfg.T_I = 0.5;
    cfg.T_h = 0.5;
    cfg.d = 2;
    cfg.k = 1;
    cfg.R = 1.0;
    cfg.region = RegionRule::constants(-1.0, 1.0);
    cfg.solver.max_iter = 30;
    cfg.usable_tol = 1e-13;
    cfg.validate();

    const RunResult res = run_mpc(prob, cfg);
    REQUIRE(res.aborted);
    REQUIRE(res.windows[0].attempts == 2);
    REQUIRE(res.windows[0].region_shrunk);
    REQUIRE_FALSE(res.windows[0].degree_reduced);
  }

  SECTION("a drifting state reuses the previous bound as its windows go bad") {
    // Uncontrollable drift dx/dt = 2 marches the state out of the ball.  The
    // second window's box [0.7, 0.9] flows entirely out of the ball before
    // the window ends, which leaves the bound's value there uncapped and the
    // solve unbounded (correctly flagged, not certified); the third window's
    // offset box clips empty before it is even built.  Both must fall back
    // to the first window's bound instead of giving up.
    ProblemDefinition prob;
    prob.n = 1;
    prob.m = 1;
    prob.cost = {ScalarPiece(poly_from(2, {{{2, 0}, 1.0}})), ScalarPiece(Polynomial(2))};
    prob.dynamics = {{ScalarPiece(poly_from(1, {{{0}, 2.0}}))}, {ScalarPiece(Polynomial(1))}};
    prob.terminal = ScalarPiece(Polynomial(1));
    prob.x0 = vec({0.0});

    MPCConfig cfg;
    cfg.T = 1.2;
    cfg.T_I = 0.4;
    cfg.T_h = 0.4;
    cfg.d = 2;
    cfg.k = 1;
    cfg.R = 1.0;
    cfg.region = RegionRule::offset(0.1);
    cfg.validate();

    const RunResult res = run_mpc(prob, cfg);
    REQUIRE_FALSE(res.aborted);
    REQUIRE(res.windows.size() == 3);
    REQUIRE(res.windows[0].has_certificate);
    REQUIRE(res.windows[0].attempts == 1);

    REQUIRE(res.windows[1].reused_previous);
    REQUIRE_FALSE(res.windows[1].has_certificate);
    REQUIRE(res.windows[1].attempts == 2);  // base solve, then the shrunk box
    REQUIRE(res.windows[1].region_shrunk);
    REQUIRE_FALSE(res.windows[1].degree_reduced);  // already at the degree floor
    REQUIRE(res.windows[1].solver_status == "reused-previous");

    REQUIRE(res.windows[2].reused_previous);
    REQUIRE_FALSE(res.windows[2].has_certificate);
    REQUIRE(res.windows[2].attempts == 0);
    REQUIRE(res.windows[2].solver_status == "reused-previous-empty-region");

    REQUIRE(res.trajectory.nodes() == 1201);
    // The drift is exact: x(1.2) = 2.4.
    REQUIRE(res.trajectory.x.back()(0) == Catch::Approx(2.4).margin(1e-9));
  }

  SECTION("an empty box on the very first window aborts with a reason") {
    ProblemDefinition prob = single_integrator(0.8);
    prob.x0 = vec({5.0});
    MPCConfig cfg;
    cfg.T = 0.5;
    cfg.T_I = 0.5;
    cfg.T_h = 0.5;
    cfg.d = 2;
    cfg.k = 1;
    cfg.R = 1.0;
    cfg.region = RegionRule::offset(0.1);
    cfg.validate();

    const RunResult res = run_mpc(prob, cfg);
    REQUIRE(res.aborted);
    REQUIRE(res.windows.size() == 1);
    REQUIRE(res.windows[0].solver_status == "empty-region");
    REQUIRE_FALSE(res.abort_reason.empty());
  }
}

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "sosmpc/polynomial.hpp"
#include "support/oracles.hpp"
#include "support/test_rng.hpp"

using sosmpc::Box;
using sosmpc::GrlexLess;
using sosmpc::Monomial;
using sosmpc::Polynomial;
using sosmpc::integrate_box;
using sosmpc::monomial_basis;
using testsupport::Rng;

namespace {
Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST_CASE("monomial basis enumerates graded-lex order") {
  auto b = monomial_basis(2, 2);
  REQUIRE(b.size() == 6);
  CHECK(b[0].exps == std::vector<int>{0, 0});
  CHECK(b[1].exps == std::vector<int>{1, 0});
  CHECK(b[2].exps == std::vector<int>{0, 1});
  CHECK(b[3].exps == std::vector<int>{2, 0});
  CHECK(b[4].exps == std::vector<int>{1, 1});
  CHECK(b[5].exps == std::vector<int>{0, 2});

  CHECK(monomial_basis(3, 0).size() == 1);
  // C(nvars + d, d)
  CHECK(monomial_basis(3, 4).size() == 35);
  CHECK(monomial_basis(4, 6).size() == 210);
}

TEST_CASE("basis order is deterministic and matches the comparator") {
  auto b1 = monomial_basis(3, 5);
  auto b2 = monomial_basis(3, 5);
  REQUIRE(b1.size() == b2.size());
  GrlexLess less;
  for (size_t i = 0; i < b1.size(); ++i) {
    CHECK(b1[i] == b2[i]);
    if (i + 1 < b1.size()) {
      CHECK(less(b1[i], b1[i + 1]));
      CHECK_FALSE(less(b1[i + 1], b1[i]));
    }
  }
}

TEST_CASE("arithmetic on small hand-checked cases") {
  const int n = 2;
  Polynomial x1 = Polynomial::variable(n, 0);
  Polynomial x2 = Polynomial::variable(n, 1);

  Polynomial s = (x1 + x2) * (x1 - x2);
  Polynomial expect = x1 * x1 - x2 * x2;
  CHECK(s == expect);

  Polynomial sq = (x1 + x2) * (x1 + x2);
  CHECK(sq.coefficient(Monomial({2, 0})) == Catch::Approx(1.0));
  CHECK(sq.coefficient(Monomial({1, 1})) == Catch::Approx(2.0));
  CHECK(sq.coefficient(Monomial({0, 2})) == Catch::Approx(1.0));

  // cancellation prunes to the zero polynomial
  Polynomial z = sq - sq;
  CHECK(z.is_zero());
  CHECK(z.degree() == 0);

  CHECK((x1 * 3.0 + x1 * (-3.0)).is_zero());
}

TEST_CASE("partial derivative of x1^2*x2") {
  Polynomial p(2);
  p.add_term(Monomial({2, 1}), 1.0);
  Polynomial d0 = p.partial(0);
  CHECK(d0.coefficient(Monomial({1, 1})) == Catch::Approx(2.0));
  CHECK(d0.terms().size() == 1);
  Polynomial d1 = p.partial(1);
  CHECK(d1.coefficient(Monomial({2, 0})) == Catch::Approx(1.0));
  // d/dx2 twice kills the term
  CHECK(d1.partial(1).is_zero());
}

TEST_CASE("eval matches direct computation") {
  // p = 2 x1^3 - 0.5 x1 x2 + 4
  Polynomial p(2);
  p.add_term(Monomial({3, 0}), 2.0);
  p.add_term(Monomial({1, 1}), -0.5);
  p.add_term(Monomial({0, 0}), 4.0);
  const double x = 1.5, y = -2.0;
  CHECK(p.eval(vec2(x, y)) == Catch::Approx(2 * x * x * x - 0.5 * x * y + 4));
}

TEST_CASE("eval/mul consistency on random polynomials") {
  Rng rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = rng.int_in(1, 3);
    Polynomial p = testsupport::random_polynomial(rng, n, rng.int_in(0, 4));
    Polynomial q = testsupport::random_polynomial(rng, n, rng.int_in(0, 4));
    Polynomial pq = p * q;
    for (int k = 0; k < 4; ++k) {
      Eigen::VectorXd pt = testsupport::random_point(rng, n, -1.5, 1.5);
      const double direct = p.eval(pt) * q.eval(pt);
      const double scale = 1.0 + std::abs(direct);
      CHECK(std::abs(pq.eval(pt) - direct) <= 1e-9 * scale);
    }
  }
}

TEST_CASE("partial derivative agrees with finite differences") {
  Rng rng(202);
  for (int trial = 0; trial < 15; ++trial) {
    const int n = rng.int_in(1, 3);
    Polynomial p = testsupport::random_polynomial(rng, n, rng.int_in(1, 5));
    const int var = rng.int_in(0, n - 1);
    Polynomial dp = p.partial(var);
    Eigen::VectorXd pt = testsupport::random_point(rng, n, -1.0, 1.0);
    const double h = 1e-5;
    const double fd = testsupport::fd_partial(p, pt, var, h);
    const double scale = 1.0 + std::abs(fd);
    CHECK(std::abs(dp.eval(pt) - fd) <= 1e-6 * scale);
  }
}

TEST_CASE("integrate_box on hand-checked monomials") {
  Polynomial p(2);
  p.add_term(Monomial({1, 1}), 1.0);  // x1*x2 over [0,1]^2 -> 1/4
  Box unit(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));
  CHECK(integrate_box(p, unit) == Catch::Approx(0.25));

  Polynomial q(1);
  q.add_term(Monomial({2}), 1.0);  // x^2 over [-1,1] -> 2/3
  Box sym(-Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1));
  CHECK(integrate_box(q, sym) == Catch::Approx(2.0 / 3.0));

  // odd power over symmetric box integrates to zero
  Polynomial cu(1);
  cu.add_term(Monomial({3}), 5.0);
  CHECK(integrate_box(cu, sym) == Catch::Approx(0.0).margin(1e-15));

  Polynomial c = Polynomial::constant(2, 3.5);
  Box b(vec2(-1.0, 2.0), vec2(2.0, 5.0));
  CHECK(integrate_box(c, b) == Catch::Approx(3.5 * 9.0));
}

TEST_CASE("integrate_box agrees with Gauss quadrature") {
  Rng rng(303);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = rng.int_in(1, 3);
    Polynomial p = testsupport::random_polynomial(rng, n, rng.int_in(0, 6));
    Eigen::VectorXd lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      lo(i) = rng.uniform(-2.0, 0.5);
      hi(i) = lo(i) + rng.uniform(0.2, 2.5);
    }
    Box box(lo, hi);
    const double exact = integrate_box(p, box);
    const double quad = testsupport::quad_integrate(p, box);
    CHECK(std::abs(exact - quad) <= 1e-9 * (1.0 + std::abs(exact)));
  }
}

TEST_CASE("integrate_box within Monte-Carlo confidence interval") {
  Rng rng(404);
  // Smaller replica of the acceptance check (kept quick here).
  for (int trial = 0; trial < 8; ++trial) {
    const int n = rng.int_in(1, 3);
    Polynomial p = testsupport::random_polynomial(rng, n, rng.int_in(0, 6));
    Eigen::VectorXd lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      lo(i) = rng.uniform(-2.0, 0.0);
      hi(i) = lo(i) + rng.uniform(0.5, 2.0);
    }
    Box box(lo, hi);
    const double exact = integrate_box(p, box);
    auto est = testsupport::mc_integrate(p, box, 20000, rng);
    CHECK(std::abs(exact - est.value) <= 3.0 * est.standard_error + 1e-10);
  }
}

TEST_CASE("substitute_affine composes with evaluation") {
  Rng rng(505);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = rng.int_in(1, 3);
    const int m = rng.int_in(1, 3);
    Polynomial p = testsupport::random_polynomial(rng, n, rng.int_in(0, 4));
    Eigen::MatrixXd A(n, m);
    Eigen::VectorXd b(n);
    for (int i = 0; i < n; ++i) {
      b(i) = rng.uniform(-1.0, 1.0);
      for (int j = 0; j < m; ++j) A(i, j) = rng.uniform(-1.0, 1.0);
    }
    Polynomial q = p.substitute_affine(A, b);
    REQUIRE(q.nvars() == m);
    CHECK(q.degree() <= p.degree());
    for (int k = 0; k < 4; ++k) {
      Eigen::VectorXd y = testsupport::random_point(rng, m, -1.0, 1.0);
      const double want = p.eval(A * y + b);
      CHECK(std::abs(q.eval(y) - want) <= 1e-9 * (1.0 + std::abs(want)));
    }
  }
}

TEST_CASE("substitute_affine round-trips through an invertible map") {
  Rng rng(606);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = rng.int_in(1, 3);
    Polynomial p = testsupport::random_polynomial(rng, n, rng.int_in(0, 4));
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) {
      A(i, i) = rng.uniform(0.5, 2.0);
      for (int j = 0; j < i; ++j) A(i, j) = rng.uniform(-0.5, 0.5);
    }
    Eigen::VectorXd b = testsupport::random_point(rng, n, -1.0, 1.0);
    Eigen::MatrixXd Ainv = A.inverse();
    Polynomial round = p.substitute_affine(A, b).substitute_affine(Ainv, -Ainv * b);
    CHECK(sosmpc::approx_equal(round, p, 1e-9 * (1.0 + p.max_abs_coeff())));
  }
}

TEST_CASE("extended and collapse_var") {
  // p(x1,x2) = x1^2 + 2 x2 viewed in (x1,x2,u) space
  Polynomial p(2);
  p.add_term(Monomial({2, 0}), 1.0);
  p.add_term(Monomial({0, 1}), 2.0);
  Polynomial e = p.extended(3);
  REQUIRE(e.nvars() == 3);
  CHECK(e.coefficient(Monomial({2, 0, 0})) == Catch::Approx(1.0));
  Eigen::VectorXd pt(3);
  pt << 1.5, -0.5, 99.0;  // appended variable must not matter
  CHECK(e.eval(pt) == Catch::Approx(p.eval(vec2(1.5, -0.5))));

  // fixing x2 = 3: x1^2 + 6
  Polynomial c = p.collapse_var(1, 3.0);
  REQUIRE(c.nvars() == 1);
  CHECK(c.coefficient(Monomial({2})) == Catch::Approx(1.0));
  CHECK(c.coefficient(Monomial({0})) == Catch::Approx(6.0));
}

TEST_CASE("precondition violations throw") {
  Polynomial p(2), q(3);
  CHECK_THROWS_AS(p + q, std::invalid_argument);
  CHECK_THROWS_AS(p * q, std::invalid_argument);
  CHECK_THROWS_AS(p.partial(2), std::invalid_argument);
  CHECK_THROWS_AS(Polynomial::variable(2, 2), std::invalid_argument);
  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(p.eval(wrong), std::invalid_argument);
  CHECK_THROWS_AS(Box(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2)),
                  std::invalid_argument);
}

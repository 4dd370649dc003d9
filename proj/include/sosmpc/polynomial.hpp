#pragma once

// Sparse multivariate polynomials over a fixed variable count, stored as a
// graded-lexicographically ordered term map.  Variable convention used across
// the library: state variables x1..xn first, then the time variable, then
// input variables appended when a polynomial lives in the joint space.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sosmpc {

/// Exponent vector of one monomial, e.g. {2,0,1} for x1^2*x3.
struct Monomial {
  std::vector<int> exps;

  Monomial() = default;
  explicit Monomial(std::vector<int> e) : exps(std::move(e)) {}
  Monomial(std::initializer_list<int> e) : exps(e) {}
  explicit Monomial(int nvars) : exps(nvars, 0) {}

  int nvars() const { return static_cast<int>(exps.size()); }

  int degree() const {
    int s = 0;
    for (int e : exps) s += e;
    return s;
  }

  bool operator==(const Monomial& o) const { return exps == o.exps; }

  Monomial operator*(const Monomial& o) const {
    if (exps.size() != o.exps.size())
      throw std::invalid_argument("Monomial product: variable count mismatch");
    Monomial r = *this;
    for (size_t i = 0; i < exps.size(); ++i) r.exps[i] += o.exps[i];
    return r;
  }

  /// Value of the monomial at a point (pt must have nvars() entries).
  double eval(const double* pt) const {
    double v = 1.0;
    for (size_t i = 0; i < exps.size(); ++i) {
      double p = 1.0, base = pt[i];
      for (int k = 0; k < exps[i]; ++k) p *= base;
      v *= p;
    }
    return v;
  }
};

/// Graded-lex order: lower total degree first; within a degree, monomials
/// with higher exponents on earlier variables come first, so that
/// basis(2,2) enumerates 1, x1, x2, x1^2, x1*x2, x2^2.
struct GrlexLess {
  bool operator()(const Monomial& a, const Monomial& b) const {
    const int da = a.degree(), db = b.degree();
    if (da != db) return da < db;
    const size_t n = std::min(a.exps.size(), b.exps.size());
    for (size_t i = 0; i < n; ++i)
      if (a.exps[i] != b.exps[i]) return a.exps[i] > b.exps[i];
    return a.exps.size() < b.exps.size();
  }
};

/// Sparse polynomial.  Terms with |coefficient| <= 1e-14 are pruned on every
/// mutation, so the zero polynomial always has an empty term map.
class Polynomial {
 public:
  static constexpr double kPruneTol = 1e-14;
  using TermMap = std::map<Monomial, double, GrlexLess>;

  explicit Polynomial(int nvars = 0) : nvars_(nvars) {
    if (nvars < 0) throw std::invalid_argument("Polynomial: nvars < 0");
  }

  static Polynomial constant(int nvars, double c) {
    Polynomial p(nvars);
    p.add_term(Monomial(nvars), c);
    return p;
  }

  static Polynomial variable(int nvars, int i) {
    if (i < 0 || i >= nvars) throw std::invalid_argument("variable index out of range");
    Polynomial p(nvars);
    Monomial m(nvars);
    m.exps[i] = 1;
    p.add_term(m, 1.0);
    return p;
  }

  int nvars() const { return nvars_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  /// Total degree; the zero polynomial reports 0.
  int degree() const {
    int d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
    return d;
  }

  double coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
  }

  /// Accumulate c onto monomial m, pruning if the result is negligible.
  void add_term(const Monomial& m, double c) {
    if (m.nvars() != nvars_)
      throw std::invalid_argument("add_term: monomial variable count mismatch");
    auto [it, inserted] = terms_.try_emplace(m, 0.0);
    it->second += c;
    if (std::abs(it->second) <= kPruneTol) terms_.erase(it);
  }

  Polynomial& operator+=(const Polynomial& o) {
    check_same_space(o);
    for (const auto& [m, c] : o.terms_) add_term(m, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    check_same_space(o);
    for (const auto& [m, c] : o.terms_) add_term(m, -c);
    return *this;
  }
  Polynomial operator+(const Polynomial& o) const { Polynomial r = *this; r += o; return r; }
  Polynomial operator-(const Polynomial& o) const { Polynomial r = *this; r -= o; return r; }
  Polynomial operator-() const {
    Polynomial r(nvars_);
    for (const auto& [m, c] : terms_) r.terms_.emplace(m, -c);
    return r;
  }

  Polynomial operator*(const Polynomial& o) const {
    check_same_space(o);
    Polynomial r(nvars_);
    for (const auto& [ma, ca] : terms_)
      for (const auto& [mb, cb] : o.terms_) r.add_term(ma * mb, ca * cb);
    return r;
  }

  Polynomial operator*(double s) const {
    Polynomial r(nvars_);
    for (const auto& [m, c] : terms_) {
      const double v = c * s;
      if (std::abs(v) > kPruneTol) r.terms_.emplace(m, v);
    }
    return r;
  }

  friend Polynomial operator*(double s, const Polynomial& p) { return p * s; }

  bool operator==(const Polynomial& o) const {
    return nvars_ == o.nvars_ && terms_ == o.terms_;
  }

  /// Partial derivative with respect to variable `var`.
  Polynomial partial(int var) const {
    if (var < 0 || var >= nvars_) throw std::invalid_argument("partial: variable out of range");
    Polynomial r(nvars_);
    for (const auto& [m, c] : terms_) {
      if (m.exps[var] == 0) continue;
      Monomial d = m;
      d.exps[var] -= 1;
      r.add_term(d, c * m.exps[var]);
    }
    return r;
  }

  /// Evaluation with Neumaier-compensated summation over the term list.
  double eval(const Eigen::VectorXd& pt) const {
    if (pt.size() != nvars_) throw std::invalid_argument("eval: point dimension mismatch");
    double sum = 0.0, comp = 0.0;
    for (const auto& [m, c] : terms_) {
      const double term = c * m.eval(pt.data());
      const double t = sum + term;
      if (std::abs(sum) >= std::abs(term))
        comp += (sum - t) + term;
      else
        comp += (term - t) + sum;
      sum = t;
    }
    return sum + comp;
  }

  /// Composition with an affine map: the result q satisfies
  ///   q(y) == p(A y + b)   for all y in R^{A.cols()}.
  Polynomial substitute_affine(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) const {
    if (A.rows() != nvars_ || b.size() != nvars_)
      throw std::invalid_argument("substitute_affine: map shape mismatch");
    const int new_n = static_cast<int>(A.cols());
    // Linear replacement polynomial for each original variable.
    std::vector<Polynomial> lin;
    lin.reserve(nvars_);
    for (int i = 0; i < nvars_; ++i) {
      Polynomial li = Polynomial::constant(new_n, b(i));
      for (int j = 0; j < new_n; ++j)
        if (A(i, j) != 0.0) li += Polynomial::variable(new_n, j) * A(i, j);
      lin.push_back(std::move(li));
    }
    // Memoized powers lin[i]^k.
    std::vector<std::vector<Polynomial>> pw(nvars_);
    for (int i = 0; i < nvars_; ++i) pw[i].push_back(Polynomial::constant(new_n, 1.0));
    auto power = [&](int i, int k) -> const Polynomial& {
      while (static_cast<int>(pw[i].size()) <= k) pw[i].push_back(pw[i].back() * lin[i]);
      return pw[i][k];
    };
    Polynomial r(new_n);
    for (const auto& [m, c] : terms_) {
      Polynomial t = Polynomial::constant(new_n, c);
      for (int i = 0; i < nvars_; ++i)
        if (m.exps[i] > 0) t = t * power(i, m.exps[i]);
      r += t;
    }
    return r;
  }

  /// Same polynomial viewed in a larger space; new variables are appended
  /// after the existing ones with exponent zero.
  Polynomial extended(int new_nvars) const {
    if (new_nvars < nvars_) throw std::invalid_argument("extended: cannot shrink space");
    Polynomial r(new_nvars);
    for (const auto& [m, c] : terms_) {
      Monomial e(new_nvars);
      std::copy(m.exps.begin(), m.exps.end(), e.exps.begin());
      r.terms_.emplace(std::move(e), c);
    }
    return r;
  }

  /// Fix variable `var` to `value` and drop it from the space.
  Polynomial collapse_var(int var, double value) const {
    if (var < 0 || var >= nvars_) throw std::invalid_argument("collapse_var: out of range");
    Polynomial r(nvars_ - 1);
    for (const auto& [m, c] : terms_) {
      double f = 1.0;
      for (int k = 0; k < m.exps[var]; ++k) f *= value;
      Monomial e(nvars_ - 1);
      for (int i = 0, j = 0; i < nvars_; ++i)
        if (i != var) e.exps[j++] = m.exps[i];
      r.add_term(e, c * f);
    }
    return r;
  }

  /// Largest absolute coefficient (0 for the zero polynomial).
  double max_abs_coeff() const {
    double v = 0.0;
    for (const auto& [m, c] : terms_) v = std::max(v, std::abs(c));
    return v;
  }

 private:
  void check_same_space(const Polynomial& o) const {
    if (nvars_ != o.nvars_)
      throw std::invalid_argument("polynomial arithmetic: variable count mismatch");
  }

  int nvars_;
  TermMap terms_;
};

/// All monomials in `nvars` variables of total degree <= max_degree,
/// in graded-lex order.  Size is C(nvars + max_degree, max_degree).
inline std::vector<Monomial> monomial_basis(int nvars, int max_degree) {
  if (nvars < 0 || max_degree < 0) throw std::invalid_argument("monomial_basis: negative argument");
  std::vector<Monomial> out;
  Monomial cur(nvars);
  // Enumerate exponent vectors of exact degree d, earlier variables taking
  // the highest exponents first; recursion depth is nvars (small).
  auto rec = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == nvars - 1) {
      cur.exps[pos] = remaining;
      out.push_back(cur);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      cur.exps[pos] = e;
      self(self, pos + 1, remaining - e);
    }
    cur.exps[pos] = 0;
  };
  for (int d = 0; d <= max_degree; ++d) {
    if (nvars == 0) {
      if (d == 0) out.push_back(Monomial(0));
      continue;
    }
    rec(rec, 0, d);
  }
  return out;
}

/// Axis-aligned box given by componentwise bounds.
struct Box {
  Eigen::VectorXd lo, hi;

  Box() = default;
  Box(Eigen::VectorXd l, Eigen::VectorXd h) : lo(std::move(l)), hi(std::move(h)) {
    if (lo.size() != hi.size()) throw std::invalid_argument("Box: bound dimension mismatch");
    for (int i = 0; i < lo.size(); ++i)
      if (lo(i) > hi(i)) throw std::invalid_argument("Box: lower bound exceeds upper bound");
  }

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    for (int i = 0; i < lo.size(); ++i)
      if (x(i) < lo(i) - tol || x(i) > hi(i) + tol) return false;
    return true;
  }

  double volume() const {
    double v = 1.0;
    for (int i = 0; i < lo.size(); ++i) v *= hi(i) - lo(i);
    return v;
  }
};

/// Exact integral of p over the box (closed form per monomial).
inline double integrate_box(const Polynomial& p, const Box& box) {
  if (box.dim() != p.nvars()) throw std::invalid_argument("integrate_box: dimension mismatch");
  double sum = 0.0, comp = 0.0;
  for (const auto& [m, c] : p.terms()) {
    double v = c;
    for (int i = 0; i < p.nvars(); ++i) {
      const int e = m.exps[i];
      double hp = 1.0, lp = 1.0;
      for (int k = 0; k < e + 1; ++k) {
        hp *= box.hi(i);
        lp *= box.lo(i);
      }
      v *= (hp - lp) / (e + 1);
    }
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  return sum + comp;
}

/// Coefficient-wise comparison after pruning.
inline bool approx_equal(const Polynomial& a, const Polynomial& b, double tol) {
  if (a.nvars() != b.nvars()) return false;
  Polynomial d = a - b;
  return d.max_abs_coeff() <= tol;
}

}  // namespace sosmpc

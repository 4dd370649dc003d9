#pragma once

// Builds, for one polynomial control window, a cone program whose solution is
// a polynomial P(x, t) bounding the window's value function from below:
//
//   maximize   integral of P over region x [t0, t_end]
//   subject to
//     terminal:  g(x) - P(x, t_end)                    >= 0  on ||x|| <= R
//     flow:      dP/dt + c(x,t,u) + grad_x P . f(x,u)  >= 0  on ||x|| <= R,
//                                     t in [t0, t_end], u in [-1,1]^m
//
// Each inequality is enforced as a polynomial identity
//     lhs = k + sum_j s_j * w_j
// with k and the s_j sums of squares (PSD Gram blocks) and w_j the domain
// weights R^2-||x||^2, the time-interval weight, and 1-u_i^2.  Matching
// coefficients monomial by monomial yields the equality rows.
//
// Time is conditioned internally: t = mid + half*tau maps [t0, t_end] onto
// tau in [-1, 1], so high absolute times never appear as monomial powers.
// The coefficient vector and all certificates live in the conditioned basis;
// (mid, half) are stored for mapping back to absolute time.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sosmpc/ocp.hpp"
#include "sosmpc/polynomial.hpp"
#include "sosmpc/sdp.hpp"

namespace sosmpc {

/// One sum-of-squares factor s(v) = z(v)' G z(v) times a domain weight.
struct GramSlot {
  std::string name;
  std::vector<Monomial> basis;  // z, in the identity's variable space
  Polynomial domain;            // weight polynomial (constant 1 for plain SOS)
  int block_index = -1;         // position in the cone problem's block list
};

struct SOSProgram {
  OCPInstance source;
  int degree = 0;  // max total degree of P in (x, t)
  double time_mid = 0.0, time_half = 0.0;
  std::vector<Monomial> p_basis;      // (x, tau) monomials of degree <= degree
  std::vector<Polynomial> cost_cond;  // cost pieces with t = mid + half*tau
  int terminal_degree = 0;            // even identity degrees
  int flow_degree = 0;
  std::vector<GramSlot> slots;        // cone block order
  std::vector<Monomial> terminal_rows;  // row monomials (x space), in row order
  std::vector<Monomial> flow_rows;      // row monomials (x, tau, u space)
  ConeProblem cone;
};

/// Integral of every (x, t)-monomial of degree <= degree over
/// region x [t0, t1], in graded-lex basis order (absolute, unconditioned).
inline Eigen::VectorXd objective_vector(const Box& region, double t0, double t1, int degree) {
  const int n = region.dim();
  Eigen::VectorXd lo(n + 1), hi(n + 1);
  lo.head(n) = region.lo;
  hi.head(n) = region.hi;
  lo(n) = t0;
  hi(n) = t1;
  const Box prod(lo, hi);
  const auto basis = monomial_basis(n + 1, degree);
  Eigen::VectorXd v(basis.size());
  for (size_t j = 0; j < basis.size(); ++j) {
    Polynomial mono(n + 1);
    mono.add_term(basis[j], 1.0);
    v(static_cast<int>(j)) = integrate_box(mono, prod);
  }
  return v;
}

/// z(v)' G z(v) as a polynomial.
inline Polynomial gram_polynomial(const std::vector<Monomial>& basis, const Eigen::MatrixXd& G) {
  if (basis.empty()) throw std::invalid_argument("gram_polynomial: empty basis");
  const int nv = basis[0].nvars();
  const int dim = static_cast<int>(basis.size());
  if (G.rows() != dim || G.cols() != dim)
    throw std::invalid_argument("gram_polynomial: matrix size mismatch");
  Polynomial p(nv);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) p.add_term(basis[a] * basis[b], G(a, b));
  return p;
}

namespace detail {

inline int even_ceil(int k) { return k + (k % 2); }

inline Polynomial ball_weight(int nvars, int n_states, double radius) {
  Polynomial b = Polynomial::constant(nvars, radius * radius);
  for (int s = 0; s < n_states; ++s)
    b -= Polynomial::variable(nvars, s) * Polynomial::variable(nvars, s);
  return b;
}

using RowMap = std::map<Monomial, std::vector<std::pair<int, double>>, GrlexLess>;

inline void add_row_entry(RowMap& rows, const Monomial& mono, int col, double val) {
  rows[mono].emplace_back(col, val);
}

}  // namespace detail

inline SOSProgram build_sos_program(const OCPInstance& ocp, int degree) {
  ocp.validate();
  if (degree < 1) throw std::invalid_argument("build_sos_program: degree must be >= 1");
  const int n = ocp.n, m = ocp.m;
  const int nt = n + 1;       // (x, tau)
  const int nf = n + 1 + m;   // (x, tau, u)

  SOSProgram prog;
  prog.source = ocp;
  prog.degree = degree;
  prog.time_mid = 0.5 * (ocp.t0 + ocp.t_end);
  prog.time_half = 0.5 * (ocp.t_end - ocp.t0);

  // Conditioned cost pieces: substitute t = mid + half * tau.
  {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(nt, nt);
    A(n, n) = prog.time_half;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nt);
    b(n) = prog.time_mid;
    for (const auto& c : ocp.cost) prog.cost_cond.push_back(c.substitute_affine(A, b));
  }

  prog.p_basis = monomial_basis(nt, degree);
  const int num_alpha = static_cast<int>(prog.p_basis.size());

  // Input-assembled flow-space data: total drift F_s(x, u) per state and the
  // total running cost c(x, tau, u).
  std::vector<Polynomial> F;
  for (int s = 0; s < n; ++s) {
    Polynomial Fs = ocp.dynamics[0][s].extended(nf);
    for (int i = 0; i < m; ++i)
      Fs += ocp.dynamics[1 + i][s].extended(nf) * Polynomial::variable(nf, nt + i);
    F.push_back(std::move(Fs));
  }
  Polynomial c_tot = prog.cost_cond[0].extended(nf);
  for (int i = 0; i < m; ++i)
    c_tot += prog.cost_cond[1 + i].extended(nf) * Polynomial::variable(nf, nt + i);

  // Identity degrees.  The certificate degree is capped just above the
  // degree of P; fixed problem data (costs, terminal cost) must always be
  // coverable by the squared terms, so the degree is lifted to reach it.
  // Rows beyond the identity degree (products of grad P with higher-degree
  // dynamics) remain as pure linear constraints on P's coefficients.
  const int cap = detail::even_ceil(degree + 1);
  {
    const int data_deg = ocp.terminal.degree();
    const int full_deg = std::max(data_deg, degree);
    prog.terminal_degree =
        std::max({2, detail::even_ceil(data_deg),
                  std::min(detail::even_ceil(full_deg), cap)});
  }
  {
    const int data_deg = c_tot.degree();
    int fmax = 0;
    for (const auto& Fs : F) fmax = std::max(fmax, Fs.degree());
    const int alpha_deg = std::max(0, degree - 1) + fmax;  // grad P . F and dP/dtau
    const int full_deg = std::max(data_deg, alpha_deg);
    prog.flow_degree = std::max({2, detail::even_ceil(data_deg),
                                 std::min(detail::even_ceil(full_deg), cap)});
  }

  // Gram slots.  Terminal identity lives in x; flow identity in (x, tau, u).
  const Polynomial ball_x = detail::ball_weight(n, n, ocp.radius);
  const Polynomial ball_f = detail::ball_weight(nf, n, ocp.radius);
  Polynomial time_f(nf);  // 1 - tau^2
  time_f += Polynomial::constant(nf, 1.0);
  time_f -= Polynomial::variable(nf, n) * Polynomial::variable(nf, n);

  auto add_slot = [&](const std::string& name, int nvars_slot, int basis_deg,
                      Polynomial domain) {
    GramSlot slot;
    slot.name = name;
    slot.basis = monomial_basis(nvars_slot, basis_deg);
    slot.domain = std::move(domain);
    slot.block_index = static_cast<int>(prog.slots.size());
    prog.slots.push_back(std::move(slot));
  };
  add_slot("terminal_sos", n, prog.terminal_degree / 2, Polynomial::constant(n, 1.0));
  add_slot("terminal_ball", n, (prog.terminal_degree - 2) / 2, ball_x);
  add_slot("flow_sos", nf, prog.flow_degree / 2, Polynomial::constant(nf, 1.0));
  add_slot("flow_ball", nf, (prog.flow_degree - 2) / 2, ball_f);
  add_slot("flow_time", nf, (prog.flow_degree - 2) / 2, time_f);
  for (int i = 0; i < m; ++i) {
    Polynomial box_u(nf);  // 1 - u_i^2
    box_u += Polynomial::constant(nf, 1.0);
    box_u -= Polynomial::variable(nf, nt + i) * Polynomial::variable(nf, nt + i);
    add_slot("flow_input_" + std::to_string(i + 1), nf, (prog.flow_degree - 2) / 2,
             std::move(box_u));
  }

  ConeProblem& cone = prog.cone;
  cone.num_free = num_alpha;
  for (const auto& slot : prog.slots)
    cone.block_dims.push_back(static_cast<int>(slot.basis.size()));

  // --- accumulate rows -----------------------------------------------------
  detail::RowMap term_rows, flow_rows;

  // Coefficient columns of P.  Terminal: P(x, tau=1) contributes +1 of the
  // x-part.  Flow: -(1/half) dP/dtau - grad_x P . F.
  for (int j = 0; j < num_alpha; ++j) {
    const Monomial& mono = prog.p_basis[j];
    Monomial xpart(n);
    std::copy(mono.exps.begin(), mono.exps.begin() + n, xpart.exps.begin());
    detail::add_row_entry(term_rows, xpart, j, 1.0);

    Polynomial pj(nf);
    {
      Monomial ext(nf);
      std::copy(mono.exps.begin(), mono.exps.end(), ext.exps.begin());
      pj.add_term(ext, 1.0);
    }
    Polynomial col = pj.partial(n) * (-1.0 / prog.time_half);
    for (int s = 0; s < n; ++s) col -= pj.partial(s) * F[s];
    for (const auto& [mm, cc] : col.terms()) detail::add_row_entry(flow_rows, mm, j, cc);
  }

  // Gram columns: z_a z_b * domain, with svec scaling.
  for (const auto& slot : prog.slots) {
    const bool is_terminal = slot.domain.nvars() == n;
    detail::RowMap& rows = is_terminal ? term_rows : flow_rows;
    const int dim = static_cast<int>(slot.basis.size());
    for (int bidx = 0; bidx < dim; ++bidx)
      for (int aidx = 0; aidx <= bidx; ++aidx) {
        const int col = cone.block_entry_col(slot.block_index, aidx, bidx);
        const Monomial prod = slot.basis[aidx] * slot.basis[bidx];
        for (const auto& [mm, cc] : slot.domain.terms())
          detail::add_row_entry(rows, prod * mm, col, svec_coeff(aidx, bidx, cc));
      }
  }

  // Make sure every data monomial owns a row even if no column touches it
  // (such a row is unsatisfiable and the solver will report that honestly).
  for (const auto& [mm, cc] : ocp.terminal.terms()) term_rows[mm];
  for (const auto& [mm, cc] : c_tot.terms()) flow_rows[mm];

  // --- freeze rows in deterministic (graded-lex) order ---------------------
  std::vector<Eigen::Triplet<double>> entries;
  std::vector<double> rhs;
  int row_index = 0;
  for (const auto& [mono, cols] : term_rows) {
    prog.terminal_rows.push_back(mono);
    for (const auto& [col, val] : cols) entries.emplace_back(row_index, col, val);
    rhs.push_back(ocp.terminal.coefficient(mono));
    ++row_index;
  }
  for (const auto& [mono, cols] : flow_rows) {
    prog.flow_rows.push_back(mono);
    for (const auto& [col, val] : cols) entries.emplace_back(row_index, col, val);
    rhs.push_back(c_tot.coefficient(mono));
    ++row_index;
  }
  cone.num_rows = row_index;
  cone.entries = std::move(entries);
  cone.rhs = Eigen::Map<const Eigen::VectorXd>(rhs.data(), rhs.size());

  // --- objective: maximize the integral of P over region x [t0, t_end] ----
  cone.objective = Eigen::VectorXd::Zero(cone.num_vars());
  {
    Eigen::VectorXd lo(nt), hi(nt);
    lo.head(n) = ocp.region.lo;
    hi.head(n) = ocp.region.hi;
    lo(n) = -1.0;
    hi(n) = 1.0;
    const Box prod(lo, hi);
    for (int j = 0; j < num_alpha; ++j) {
      Polynomial mono(nt);
      mono.add_term(prog.p_basis[j], 1.0);
      cone.objective(j) = prog.time_half * integrate_box(mono, prod);
    }
  }
  return prog;
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// One PSD factor of a stored certificate, with its domain weight.
struct GramBlock {
  std::string name;
  std::vector<Monomial> basis;
  Polynomial domain;
  Eigen::MatrixXd gram;
};

/// Self-contained proof object for one window: the conditioned coefficient
/// vector of P plus the Gram factors of both identities and the problem data
/// needed to recheck them by plain polynomial arithmetic.
struct Certificate {
  int n = 0, m = 0, degree = 0;
  double t0 = 0.0, t_end = 0.0;
  double time_mid = 0.0, time_half = 0.0;
  double radius = 0.0;
  Box region;
  std::vector<Monomial> p_basis;  // (x, tau)
  Eigen::VectorXd p_coeffs;
  std::vector<Polynomial> cost_cond;              // conditioned cost pieces
  std::vector<std::vector<Polynomial>> dynamics;  // (m+1) x n, in x
  Polynomial terminal_cost;                       // g(x)
  std::vector<GramBlock> terminal_blocks;  // [plain SOS, ball]
  std::vector<GramBlock> flow_blocks;      // [plain SOS, ball, time, inputs...]
  double objective = 0.0;

  /// P as a polynomial in (x, tau).
  Polynomial p_conditioned() const {
    Polynomial p(n + 1);
    for (size_t j = 0; j < p_basis.size(); ++j)
      p.add_term(p_basis[j], p_coeffs(static_cast<int>(j)));
    return p;
  }

  /// P in absolute time (x, t); coefficients can be extreme for late windows,
  /// prefer p_conditioned plus the time map for evaluation.
  Polynomial p_absolute() const {
    const int nt = n + 1;
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(nt, nt);
    A(n, n) = 1.0 / time_half;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nt);
    b(n) = -time_mid / time_half;
    return p_conditioned().substitute_affine(A, b);
  }
};

/// Pull the PSD-projected certificate out of a solve.  The coefficient part
/// is taken from the equality-consistent iterate; every Gram factor is the
/// nearest PSD matrix to its block, so eigenvalue checks pass exactly and
/// the equality defect absorbs the (small) projection distance.
inline Certificate extract_certificate(const SOSProgram& prog, const SolveResult& res) {
  Certificate cert;
  cert.n = prog.source.n;
  cert.m = prog.source.m;
  cert.degree = prog.degree;
  cert.t0 = prog.source.t0;
  cert.t_end = prog.source.t_end;
  cert.time_mid = prog.time_mid;
  cert.time_half = prog.time_half;
  cert.radius = prog.source.radius;
  cert.region = prog.source.region;
  cert.p_basis = prog.p_basis;
  cert.p_coeffs = res.y.head(prog.cone.num_free);
  cert.cost_cond = prog.cost_cond;
  cert.dynamics = prog.source.dynamics;
  cert.terminal_cost = prog.source.terminal;
  cert.objective = prog.cone.objective.dot(res.y);
  for (const auto& slot : prog.slots) {
    GramBlock blk;
    blk.name = slot.name;
    blk.basis = slot.basis;
    blk.domain = slot.domain;
    const int dim = static_cast<int>(slot.basis.size());
    blk.gram = project_psd(
        smat(res.y.segment(prog.cone.block_offset(slot.block_index), svec_len(dim))));
    if (slot.domain.nvars() == prog.source.n)
      cert.terminal_blocks.push_back(std::move(blk));
    else
      cert.flow_blocks.push_back(std::move(blk));
  }
  return cert;
}

struct CertificateCheck {
  double terminal_residual = 0.0;   // max |coefficient| of the terminal defect
  double flow_residual = 0.0;       // max |coefficient| of the flow defect
  double min_gram_eigenvalue = 0.0; // most negative eigenvalue over all blocks
  double objective_error = 0.0;     // |stored - recomputed|

  bool pass(double tol_eq, double tol_psd) const {
    return terminal_residual <= tol_eq && flow_residual <= tol_eq &&
           min_gram_eigenvalue >= -tol_psd;
  }
};

/// Recheck both polynomial identities and the PSD-ness of every factor using
/// only the certificate's own data.
inline CertificateCheck verify_certificate(const Certificate& cert) {
  const int n = cert.n, m = cert.m;
  const int nt = n + 1, nf = n + 1 + m;
  CertificateCheck chk;

  const Polynomial P = cert.p_conditioned();

  // Terminal identity: k0 + s0*w0 + P(x, 1) - g = 0.
  {
    Polynomial defect = P.collapse_var(n, 1.0) - cert.terminal_cost;
    for (const auto& blk : cert.terminal_blocks)
      defect += gram_polynomial(blk.basis, blk.gram) * blk.domain;
    chk.terminal_residual = defect.max_abs_coeff();
  }

  // Flow identity: sum of Gram factors - dP/dt - grad P . F - c = 0.
  {
    Polynomial Pf = P.extended(nf);
    Polynomial defect = Pf.partial(n) * (-1.0 / cert.time_half);
    for (int s = 0; s < n; ++s) {
      Polynomial Fs = cert.dynamics[0][s].extended(nf);
      for (int i = 0; i < m; ++i)
        Fs += cert.dynamics[1 + i][s].extended(nf) * Polynomial::variable(nf, nt + i);
      defect -= Pf.partial(s) * Fs;
    }
    Polynomial c_tot = cert.cost_cond[0].extended(nf);
    for (int i = 0; i < m; ++i)
      c_tot += cert.cost_cond[1 + i].extended(nf) * Polynomial::variable(nf, nt + i);
    defect -= c_tot;
    for (const auto& blk : cert.flow_blocks)
      defect += gram_polynomial(blk.basis, blk.gram) * blk.domain;
    chk.flow_residual = defect.max_abs_coeff();
  }

  double min_eig = 0.0;
  auto scan = [&](const std::vector<GramBlock>& blocks) {
    for (const auto& blk : blocks) {
      if (blk.gram.rows() == 1) {
        min_eig = std::min(min_eig, blk.gram(0, 0));
        continue;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blk.gram, Eigen::EigenvaluesOnly);
      min_eig = std::min(min_eig, es.eigenvalues()(0));
    }
  };
  scan(cert.terminal_blocks);
  scan(cert.flow_blocks);
  chk.min_gram_eigenvalue = min_eig;

  // Recompute the objective integral from the stored coefficients.
  {
    Eigen::VectorXd lo(nt), hi(nt);
    lo.head(n) = cert.region.lo;
    hi.head(n) = cert.region.hi;
    lo(n) = -1.0;
    hi(n) = 1.0;
    const Box prod(lo, hi);
    double integral = 0.0;
    for (size_t j = 0; j < cert.p_basis.size(); ++j) {
      Polynomial mono(nt);
      mono.add_term(cert.p_basis[j], 1.0);
      integral += cert.time_half * integrate_box(mono, prod) *
                  cert.p_coeffs(static_cast<int>(j));
    }
    chk.objective_error = std::abs(integral - cert.objective);
  }
  return chk;
}

}  // namespace sosmpc

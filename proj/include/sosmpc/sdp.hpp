#pragma once

// First-order operator-splitting solver for linear cone programs
//
//   maximize    q'y
//   subject to  A y = b,
//               y in K = R^num_free x S+^{d_1} x ... x S+^{d_B},
//
// with PSD blocks stored in scaled svec form (off-diagonals multiplied by
// sqrt(2), so the Euclidean inner product of two svec vectors equals the
// Frobenius product of the matrices).  The iteration alternates an exact
// projection onto the affine set {Ay=b} (shifted by the objective) with a
// per-block eigenvalue projection onto the cone, plus a scaled dual update.
// A A' is factorized once; the step size rho only shifts the affine target,
// so adapting rho needs no refactorization.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace sosmpc {

inline constexpr double kSqrt2 = 1.41421356237309514547462185873882845;

inline int svec_len(int n) { return n * (n + 1) / 2; }

/// Slot of matrix entry (i,j) inside the svec of its block (upper triangle,
/// column-major: (0,0), (0,1), (1,1), (0,2), ...).
inline int svec_index(int i, int j) {
  if (i > j) std::swap(i, j);
  return j * (j + 1) / 2 + i;
}

/// svec coefficient that makes sum_{i<=j} svec_coeff(i,j,C_ij)*svec(X)[ij]
/// equal to the full symmetric sum sum_{i,j} C_ij X_ij.
inline double svec_coeff(int i, int j, double matrix_coeff) {
  return i == j ? matrix_coeff : kSqrt2 * matrix_coeff;
}

inline Eigen::VectorXd svec(const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(X.rows());
  Eigen::VectorXd v(svec_len(n));
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i)
      v(k++) = i == j ? X(i, i) : kSqrt2 * 0.5 * (X(i, j) + X(j, i));
  return v;
}

inline Eigen::MatrixXd smat(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const int len = static_cast<int>(v.size());
  const int n = static_cast<int>(std::round((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0));
  if (svec_len(n) != len) throw std::invalid_argument("smat: length is not triangular");
  Eigen::MatrixXd X(n, n);
  int k = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i <= j; ++i) {
      const double x = i == j ? v(k) : v(k) / kSqrt2;
      X(i, j) = x;
      X(j, i) = x;
      ++k;
    }
  return X;
}

/// Nearest (Frobenius) positive semidefinite matrix: eigenvalue clipping.
inline Eigen::MatrixXd project_psd(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd S = 0.5 * (X + X.transpose());
  if (S.rows() == 1) {
    S(0, 0) = std::max(0.0, S(0, 0));
    return S;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw std::runtime_error("project_psd: eigensolver failed");
  if (es.eigenvalues()(0) >= 0.0) return S;
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

/// Cone program data.  Variables are ordered free first, then each block's
/// svec slice in order.
struct ConeProblem {
  int num_free = 0;
  std::vector<int> block_dims;
  int num_rows = 0;
  std::vector<Eigen::Triplet<double>> entries;  // duplicate entries are summed
  Eigen::VectorXd rhs;                          // size num_rows
  Eigen::VectorXd objective;                    // size num_vars(); maximized

  int num_vars() const {
    int n = num_free;
    for (int d : block_dims) n += svec_len(d);
    return n;
  }
  int block_offset(int k) const {
    int off = num_free;
    for (int i = 0; i < k; ++i) off += svec_len(block_dims[i]);
    return off;
  }
  /// Column of matrix entry (i,j) of block k.
  int block_entry_col(int k, int i, int j) const {
    return block_offset(k) + svec_index(i, j);
  }
  void add_entry(int row, int col, double value) {
    entries.emplace_back(row, col, value);
  }
};

struct SolverConfig {
  double eps_primal = 1e-7;      // consensus residual, normalized
  double eps_dual = 1e-7;        // rho * step of cone iterate, normalized
  double eps_gap = 1e-6;         // relative objective gap primal vs dual
  int max_iter = 200000;
  double rho = 1.0;              // initial step size
  bool adaptive_rho = true;
  int rho_interval = 500;        // iterations between step-size updates
  double over_relax = 1.6;
  int check_interval = 25;       // iterations between convergence checks
  int infeas_interval = 250;     // iterations between infeasibility checks
  double diverge_threshold = 1e12;
  bool verbose = false;
};

enum class SolveStatusKind {
  Optimal,
  MaxIterReached,
  PrimalInfeasibleLikely,  // a separating certificate for {Ay=b, y in K} was found
  DualInfeasibleLikely,    // an improving recession direction was found
  Diverged,
};

inline const char* to_string(SolveStatusKind k) {
  switch (k) {
    case SolveStatusKind::Optimal: return "optimal";
    case SolveStatusKind::MaxIterReached: return "max_iterations";
    case SolveStatusKind::PrimalInfeasibleLikely: return "primal_infeasible_likely";
    case SolveStatusKind::DualInfeasibleLikely: return "dual_infeasible_likely";
    case SolveStatusKind::Diverged: return "diverged";
  }
  return "unknown";
}

struct SolveResult {
  SolveStatusKind kind = SolveStatusKind::MaxIterReached;
  int iterations = 0;
  double objective = 0.0;        // q'y at the affine-consistent iterate
  double primal_residual = 1.0;  // ||y - z||_inf / (1 + ||z||_inf)
  double dual_residual = 1.0;    // rho ||z_k - z_{k-1}||_inf, normalized
  double duality_gap = 1.0;      // |q'y - b'dual| / (1 + max |.|)
  double affine_residual = 1.0;  // ||A z - b||_inf / (1 + ||b||_inf)
  double rho_final = 0.0;
  Eigen::VectorXd y;     // satisfies A y = b to factorization accuracy
  Eigen::VectorXd z;     // lies in K exactly
  Eigen::VectorXd dual;  // multipliers for the equality rows

  bool usable(double tol) const {
    return (kind == SolveStatusKind::Optimal || kind == SolveStatusKind::MaxIterReached) &&
           primal_residual <= tol && dual_residual <= tol;
  }
};

namespace detail {

struct BlockWork {
  int dim = 0;
  int offset = 0;  // svec offset into the variable vector
  Eigen::MatrixXd mat;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
};

/// Project the block slices of v onto the PSD cone in place; free slots pass.
inline void project_cone(Eigen::VectorXd& v, std::vector<BlockWork>& blocks) {
  for (auto& blk : blocks) {
    if (blk.dim == 1) {
      v(blk.offset) = std::max(0.0, v(blk.offset));
      continue;
    }
    // smat into the preallocated buffer
    int k = 0;
    for (int j = 0; j < blk.dim; ++j)
      for (int i = 0; i <= j; ++i) {
        const double x = i == j ? v(blk.offset + k) : v(blk.offset + k) / kSqrt2;
        blk.mat(i, j) = x;
        blk.mat(j, i) = x;
        ++k;
      }
    blk.es.compute(blk.mat);
    if (blk.es.info() != Eigen::Success)
      throw std::runtime_error("cone projection: eigensolver failed");
    if (blk.es.eigenvalues()(0) >= 0.0) continue;  // already PSD
    Eigen::VectorXd lam = blk.es.eigenvalues().cwiseMax(0.0);
    blk.mat.noalias() =
        blk.es.eigenvectors() * lam.asDiagonal() * blk.es.eigenvectors().transpose();
    k = 0;
    for (int j = 0; j < blk.dim; ++j)
      for (int i = 0; i <= j; ++i) {
        v(blk.offset + k) = i == j ? blk.mat(i, i) : kSqrt2 * blk.mat(i, j);
        ++k;
      }
  }
}

/// Distance-to-cone violation of the block slices (0 for a vector in K).
inline double cone_violation(const Eigen::VectorXd& v, std::vector<BlockWork>& blocks) {
  double viol = 0.0;
  for (auto& blk : blocks) {
    if (blk.dim == 1) {
      viol = std::max(viol, -std::min(0.0, v(blk.offset)));
      continue;
    }
    int k = 0;
    for (int j = 0; j < blk.dim; ++j)
      for (int i = 0; i <= j; ++i) {
        const double x = i == j ? v(blk.offset + k) : v(blk.offset + k) / kSqrt2;
        blk.mat(i, j) = x;
        blk.mat(j, i) = x;
        ++k;
      }
    blk.es.compute(blk.mat, Eigen::EigenvaluesOnly);
    viol = std::max(viol, -std::min(0.0, blk.es.eigenvalues()(0)));
  }
  return viol;
}

}  // namespace detail

inline SolveResult solve(const ConeProblem& prob, const SolverConfig& cfg = SolverConfig()) {
  const int n = prob.num_vars();
  const int m = prob.num_rows;
  if (prob.rhs.size() != m) throw std::invalid_argument("solve: rhs size mismatch");
  if (prob.objective.size() != n) throw std::invalid_argument("solve: objective size mismatch");
  if (n == 0) throw std::invalid_argument("solve: empty problem");

  Eigen::SparseMatrix<double> A(m, n);
  A.setFromTriplets(prob.entries.begin(), prob.entries.end());

  // Row equilibration: divide every row and its rhs entry by the row's max
  // |coefficient|.  (Column scaling would distort the PSD blocks, so only
  // rows are touched.)  Duals are mapped back before being reported.
  Eigen::VectorXd row_scale = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd b = prob.rhs;
  if (m > 0) {
    Eigen::VectorXd row_max = Eigen::VectorXd::Zero(m);
    for (int c = 0; c < A.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(A, c); it; ++it)
        row_max(it.row()) = std::max(row_max(it.row()), std::abs(it.value()));
    for (int i = 0; i < m; ++i) row_scale(i) = row_max(i) > 0.0 ? 1.0 / row_max(i) : 1.0;
    A = row_scale.asDiagonal() * A;
    b = row_scale.cwiseProduct(b);
  }
  Eigen::SparseMatrix<double> At = A.transpose();

  // Factor A A' once (tiny ridge guards duplicate or zero rows).
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  if (m > 0) {
    Eigen::MatrixXd AAt = (A * At).toDense();
    const double reg = 1e-12 * std::max(1.0, AAt.diagonal().maxCoeff());
    AAt.diagonal().array() += reg;
    ldlt.compute(AAt);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("solve: factorization of A A' failed");
  }

  std::vector<detail::BlockWork> blocks;
  for (size_t k = 0; k < prob.block_dims.size(); ++k) {
    detail::BlockWork blk;
    blk.dim = prob.block_dims[k];
    blk.offset = prob.block_offset(static_cast<int>(k));
    blk.mat.resize(blk.dim, blk.dim);
    blocks.push_back(std::move(blk));
  }

  const Eigen::VectorXd& q = prob.objective;
  const double q_norm = q.size() ? q.lpNorm<Eigen::Infinity>() : 0.0;
  const double b_norm = m ? b.lpNorm<Eigen::Infinity>() : 0.0;
  const double alpha = cfg.over_relax;

  double rho = cfg.rho;
  Eigen::VectorXd q_over_rho = q / rho;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd yhat(n), t(n), z_prev(n);
  Eigen::VectorXd mu_snap = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd z_snap = Eigen::VectorXd::Zero(n);

  SolveResult res;
  res.rho_final = rho;
  double last_rp = 1.0, last_rd = 1.0;

  auto fill_residuals = [&](SolveResult& r) {
    r.objective = q.dot(y);
    // Normalize consensus by the cone-feasible iterate only: if the affine
    // iterate blows up (e.g. under a too-small rho) the residual must grow,
    // not shrink, so the step-size adaptation self-corrects.
    r.primal_residual =
        (y - z).lpNorm<Eigen::Infinity>() / (1.0 + z.lpNorm<Eigen::Infinity>());
    const double dual_obj = m ? b.dot(rho * mu) : 0.0;
    r.duality_gap = std::abs(r.objective - dual_obj) /
                    (1.0 + std::max(std::abs(r.objective), std::abs(dual_obj)));
    r.affine_residual = m ? (A * z - b).lpNorm<Eigen::Infinity>() / (1.0 + b_norm) : 0.0;
    r.rho_final = rho;
    r.y = y;
    r.z = z;
    r.dual = rho * row_scale.cwiseProduct(mu);  // duals for the original rows
  };

  // Farkas-style checks on normalized difference directions of the iterates.
  auto primal_infeasible_cert = [&](const Eigen::VectorXd& lam_raw) -> bool {
    if (m == 0) return false;
    const double nrm = lam_raw.lpNorm<Eigen::Infinity>();
    if (nrm < 1e-9) return false;
    for (double sign : {1.0, -1.0}) {
      Eigen::VectorXd lam = sign / nrm * lam_raw;
      if (b.dot(lam) < 1e-4 * (1.0 + b_norm)) continue;
      Eigen::VectorXd s = -(At * lam);
      double viol = prob.num_free ? s.head(prob.num_free).lpNorm<Eigen::Infinity>() : 0.0;
      viol = std::max(viol, detail::cone_violation(s, blocks));
      if (viol <= 1e-6) return true;
    }
    return false;
  };
  auto dual_infeasible_cert = [&](const Eigen::VectorXd& d_raw) -> bool {
    const double nrm = d_raw.lpNorm<Eigen::Infinity>();
    if (nrm < 1e-9) return false;
    Eigen::VectorXd d = d_raw / nrm;
    if (q.dot(d) < 1e-4 * (1.0 + q_norm)) return false;
    if (m && (A * d).lpNorm<Eigen::Infinity>() > 1e-6) return false;
    return detail::cone_violation(d, blocks) <= 1e-6;
  };

  int iter = 0;
  for (; iter < cfg.max_iter; ++iter) {
    // Affine step: projection of (z - w) shifted by the objective.
    t = z - w + q_over_rho;
    if (m > 0) {
      mu = ldlt.solve(A * t - b);
      y.noalias() = t - At * mu;
    } else {
      y = t;
    }

    yhat = alpha * y + (1.0 - alpha) * z;

    const bool checking = (iter + 1) % cfg.check_interval == 0;
    if (checking) z_prev = z;

    z = yhat + w;
    detail::project_cone(z, blocks);
    w += yhat - z;

    if (checking) {
      const double ynorm = y.lpNorm<Eigen::Infinity>();
      const double znorm = z.lpNorm<Eigen::Infinity>();
      last_rp = (y - z).lpNorm<Eigen::Infinity>() / (1.0 + znorm);
      const double dual_scale =
          1.0 + std::max(q_norm, rho * w.lpNorm<Eigen::Infinity>());
      last_rd = rho * (z - z_prev).lpNorm<Eigen::Infinity>() / dual_scale;
      const double pobj = q.dot(y);
      const double dobj = m ? b.dot(rho * mu) : 0.0;
      const double gap =
          std::abs(pobj - dobj) / (1.0 + std::max(std::abs(pobj), std::abs(dobj)));
      if (cfg.verbose && (iter + 1) % (cfg.check_interval * 40) == 0) {
        std::fprintf(stderr, "iter %7d  rp %.3e  rd %.3e  gap %.3e  obj %.9e  rho %.2e\n",
                     iter + 1, last_rp, last_rd, gap, pobj, rho);
      }
      if (last_rp <= cfg.eps_primal && last_rd <= cfg.eps_dual && gap <= cfg.eps_gap) {
        res.kind = SolveStatusKind::Optimal;
        res.iterations = iter + 1;
        fill_residuals(res);
        res.dual_residual = last_rd;
        return res;
      }
      if (ynorm > cfg.diverge_threshold || rho * w.lpNorm<Eigen::Infinity>() > cfg.diverge_threshold) {
        res.kind = SolveStatusKind::Diverged;
        res.iterations = iter + 1;
        fill_residuals(res);
        res.dual_residual = last_rd;
        return res;
      }
    }

    if ((iter + 1) % cfg.infeas_interval == 0 && iter + 1 >= 2 * cfg.infeas_interval) {
      if (primal_infeasible_cert(mu - mu_snap)) {
        res.kind = SolveStatusKind::PrimalInfeasibleLikely;
        res.iterations = iter + 1;
        fill_residuals(res);
        res.dual_residual = last_rd;
        return res;
      }
      if (dual_infeasible_cert(z - z_snap)) {
        res.kind = SolveStatusKind::DualInfeasibleLikely;
        res.iterations = iter + 1;
        fill_residuals(res);
        res.dual_residual = last_rd;
        return res;
      }
    }
    if ((iter + 1) % cfg.infeas_interval == 0) {
      mu_snap = mu;
      z_snap = z;
    }

    if (cfg.adaptive_rho && (iter + 1) % cfg.rho_interval == 0 && last_rd > 0.0) {
      double scale = std::sqrt(last_rp / last_rd);
      scale = std::clamp(scale, 0.1, 10.0);
      if (scale > 2.0 || scale < 0.5) {
        const double rho_new = std::clamp(rho * scale, 1e-6, 1e6);
        if (rho_new != rho) {
          w *= rho / rho_new;
          rho = rho_new;
          q_over_rho = q / rho;
        }
      }
    }
  }

  res.kind = SolveStatusKind::MaxIterReached;
  res.iterations = iter;
  fill_residuals(res);
  res.dual_residual = last_rd;
  return res;
}

}  // namespace sosmpc

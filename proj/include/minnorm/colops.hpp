#pragma once

// Column-partitioned regression: the short-versus-long regression
// decomposition, omitted-variable bias, partially regularized fits in the
// style of Frisch-Waugh-Lovell, a treatment-effect estimator built on them,
// and variance estimators from the partial-regression residuals.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "minnorm/errors.hpp"
#include "minnorm/estimator.hpp"
#include "minnorm/linalg.hpp"

namespace minnorm {

struct ColSplit {
  std::vector<Eigen::Index> j;   // sorted, 0-based covariate indices
  std::vector<Eigen::Index> jc;  // sorted complement
  Eigen::MatrixXd w;             // columns of X indexed by j
  Eigen::MatrixXd t;             // columns of X indexed by jc
  // rank(w) = n and rank(t) = |jc|; the split condition needed by the
  // high-dimensional column formulas.
  bool b2_satisfied = false;
};

inline ColSplit make_col_split(const Design& design,
                               std::vector<Eigen::Index> j) {
  std::sort(j.begin(), j.end());
  j.erase(std::unique(j.begin(), j.end()), j.end());
  if (j.empty()) throw InvalidInput("column set must be non-empty");
  if (j.front() < 0 || j.back() >= design.p) {
    throw InvalidInput("column index out of range");
  }
  ColSplit s;
  s.j = std::move(j);
  s.jc.reserve(static_cast<size_t>(design.p) - s.j.size());
  auto it = s.j.begin();
  for (Eigen::Index c = 0; c < design.p; ++c) {
    if (it != s.j.end() && *it == c) {
      ++it;
    } else {
      s.jc.push_back(c);
    }
  }
  s.w = design.x(Eigen::all, s.j);
  s.t = design.x(Eigen::all, s.jc);
  const bool w_full_row = compact_svd(s.w, design.tol).r == design.n;
  const bool t_full_col =
      s.jc.empty() ||
      compact_svd(s.t, design.tol).r == static_cast<Eigen::Index>(s.jc.size());
  s.b2_satisfied = w_full_row && t_full_col;
  return s;
}

namespace detail {

inline void validate_split(const Design& design, const ColSplit& split) {
  if (split.w.rows() != design.n ||
      static_cast<Eigen::Index>(split.j.size() + split.jc.size()) != design.p) {
    throw InvalidInput("column split does not match the design");
  }
}

// Projector onto the orthogonal complement of colspace(t); the identity when
// t has no columns.
inline Eigen::MatrixXd perp_of(const Eigen::MatrixXd& t, Eigen::Index n,
                               const Tolerance& tol) {
  if (t.cols() == 0) return Eigen::MatrixXd::Identity(n, n);
  return proj_colspace(t, tol, /*complement=*/true);
}

// Orthonormal basis of the orthogonal complement of colspace(t), as columns.
// Residualizing through the basis instead of the n x n projector keeps
// products like Q^T W at their exact mathematical row count, so no spurious
// near-zero singular value can sneak past the rank cutoff downstream.
inline Eigen::MatrixXd perp_basis(const Eigen::MatrixXd& t, Eigen::Index n,
                                  const Tolerance& tol) {
  if (t.cols() == 0) return Eigen::MatrixXd::Identity(n, n);
  Svd f = compact_svd(t, tol);
  if (f.r == 0) return Eigen::MatrixXd::Identity(n, n);
  if (f.r >= n) return Eigen::MatrixXd(n, 0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(f.u);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return q.rightCols(n - f.r);
}

}  // namespace detail

struct CochranTriple {
  Eigen::VectorXd alpha_hat;  // min-norm coefficients of y on W alone
  Eigen::VectorXd beta_hat;   // min-norm coefficients of y on all of X
  Eigen::MatrixXd delta_hat;  // min-norm coefficients of T's columns on W
};

struct CochranReport {
  CochranTriple triple;
  Eigen::VectorXd direct_term;  // long-regression coefficients on j
  Eigen::VectorXd bias_term;    // delta_hat times long coefficients on jc
  double identity_gap = 0.0;    // max |alpha_hat - direct_term - bias_term|
};

// Short regression = long regression + channeled effect of the dropped
// columns. Needs full column rank (classical) or the split condition.
inline CochranReport cochran(const Design& design, const Eigen::VectorXd& y,
                             const ColSplit& split) {
  detail::validate_split(design, split);
  const bool classical = design.regime == Regime::ClassicalFullColumnRank;
  const bool hd = design.regime == Regime::HighDimFullRowRank &&
                  split.b2_satisfied;
  if (!classical && !hd) {
    throw AssumptionViolated(
        "short-long decomposition needs full column rank or a split with "
        "full-row-rank W and full-column-rank T");
  }
  FitResult full = fit(design, y);
  Eigen::MatrixXd w_pinv = pinv(split.w, design.tol);
  CochranReport rep;
  rep.triple.beta_hat = full.beta_hat;
  rep.triple.alpha_hat = w_pinv * y;
  rep.triple.delta_hat = w_pinv * split.t;
  rep.direct_term = full.beta_hat(split.j);
  rep.bias_term = rep.triple.delta_hat * full.beta_hat(split.jc);
  Eigen::VectorXd gap = rep.triple.alpha_hat - rep.direct_term - rep.bias_term;
  rep.identity_gap = gap.size() ? gap.cwiseAbs().maxCoeff() : 0.0;
  return rep;
}

struct OvbReport {
  Eigen::VectorXd short_coef;  // coefficients when the omitted block is dropped
  Eigen::VectorXd long_coef;   // full-regression coefficients on the observed block
  Eigen::VectorXd bias;        // short_coef - long_coef channeled through delta_hat
};

inline OvbReport omitted_variable_bias(const Design& design,
                                       const Eigen::VectorXd& y,
                                       const std::vector<Eigen::Index>& observed,
                                       const std::vector<Eigen::Index>& omitted) {
  std::vector<Eigen::Index> both = observed;
  both.insert(both.end(), omitted.begin(), omitted.end());
  std::sort(both.begin(), both.end());
  for (Eigen::Index c = 0; c < design.p; ++c) {
    if (static_cast<size_t>(c) >= both.size() || both[static_cast<size_t>(c)] != c) {
      throw InvalidInput("observed and omitted sets must partition the columns");
    }
  }
  if (static_cast<Eigen::Index>(both.size()) != design.p) {
    throw InvalidInput("observed and omitted sets must partition the columns");
  }
  ColSplit split = make_col_split(design, observed);
  CochranReport rep = cochran(design, y, split);
  return {rep.triple.alpha_hat, rep.direct_term, rep.bias_term};
}

struct PartialRegResult {
  Eigen::VectorXd beta_j;
  Eigen::VectorXd beta_jc;
  bool beta_j_available = false;
  bool beta_jc_available = false;
};

// Coefficients of the interpolator that minimizes only the j-block norm.
// With rank(X) = p the solution set is a singleton, so any split returns the
// plain fit. Otherwise full row rank gives the j block by residualizing W
// against T, and the split condition additionally gives the jc block.
inline PartialRegResult partial_regularized(const Design& design,
                                            const Eigen::VectorXd& y,
                                            const ColSplit& split) {
  detail::validate_split(design, split);
  PartialRegResult out;
  if (design.rank == design.p) {
    FitResult full = fit(design, y);
    out.beta_j = full.beta_hat(split.j);
    out.beta_jc = full.beta_hat(split.jc);
    out.beta_j_available = true;
    out.beta_jc_available = true;
    return out;
  }
  if (design.regime != Regime::HighDimFullRowRank) {
    throw AssumptionViolated(
        "partially regularized fit needs full column rank or full row rank");
  }
  Eigen::MatrixXd q = detail::perp_basis(split.t, design.n, design.tol);
  if (q.cols() == 0) {
    out.beta_j = Eigen::VectorXd::Zero(split.w.cols());
  } else {
    out.beta_j =
        pinv(q.transpose() * split.w, design.tol) * (q.transpose() * y);
  }
  out.beta_j_available = true;
  if (split.b2_satisfied) {
    Eigen::MatrixXd w_pinv = pinv(split.w, design.tol);
    Eigen::MatrixXd k = w_pinv * split.t;
    out.beta_jc = pinv(k, design.tol) * (w_pinv * y);
    out.beta_jc_available = true;
  }
  return out;
}

struct MatrixIdentityReport {
  bool holds = false;
  double max_deviation = 0.0;
};

// Checks entrywise that residualizing against T and then solving agrees with
// projecting the plain pseudoinverse solve: (P_T_perp W)^+ P_T_perp equals
// P_{W^T} P_{W^+T}_perp W^+ whenever the split condition holds.
inline MatrixIdentityReport fwl_matrix_identity_check(
    const ColSplit& split, const Tolerance& tol = {},
    double threshold = 1e-8) {
  if (!split.b2_satisfied) {
    throw AssumptionViolated("matrix identity needs the split condition");
  }
  const Eigen::Index n = split.w.rows();
  Eigen::MatrixXd q = detail::perp_basis(split.t, n, tol);
  Eigen::MatrixXd lhs =
      q.cols() == 0
          ? Eigen::MatrixXd::Zero(split.w.cols(), n)
          : Eigen::MatrixXd(pinv(q.transpose() * split.w, tol) * q.transpose());
  Eigen::MatrixXd w_pinv = pinv(split.w, tol);
  Eigen::MatrixXd k = w_pinv * split.t;
  Eigen::MatrixXd proj_rowsp = proj_colspace(split.w.transpose(), tol);
  Eigen::MatrixXd perp_k = detail::perp_of(k, split.w.cols(), tol);
  Eigen::MatrixXd rhs = proj_rowsp * perp_k * w_pinv;
  MatrixIdentityReport rep;
  rep.max_deviation = (lhs - rhs).cwiseAbs().maxCoeff();
  rep.holds = rep.max_deviation < threshold;
  return rep;
}

// Treatment-effect coefficient from the partially regularized fit of
// [z X] with the covariate block regularized and the treatment column free.
inline double ate_estimate(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& y, const Tolerance& tol = {}) {
  check_finite(x, "covariates");
  check_finite(z, "treatment");
  check_finite(y, "response");
  if (z.size() != x.rows() || y.size() != x.rows()) {
    throw InvalidInput("treatment and response must match the covariate rows");
  }
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z(i) != 0.0 && z(i) != 1.0) {
      throw InvalidInput("treatment entries must be exactly 0 or 1");
    }
  }
  if (z.minCoeff() == z.maxCoeff()) {
    throw ConstantTreatment("treatment must include both arms");
  }
  Design covariates = make_design(x, tol);
  if (covariates.regime == Regime::Degenerate) {
    throw RegimeMismatch(
        "covariates need full column rank or full row rank");
  }
  Eigen::MatrixXd stacked(x.rows(), x.cols() + 1);
  stacked.col(0) = z;
  stacked.rightCols(x.cols()) = x;
  Design design = make_design(std::move(stacked), tol);
  std::vector<Eigen::Index> covariate_cols(static_cast<size_t>(x.cols()));
  std::iota(covariate_cols.begin(), covariate_cols.end(), Eigen::Index{1});
  ColSplit split = make_col_split(design, covariate_cols);
  PartialRegResult pr = partial_regularized(design, y, split);
  if (!pr.beta_jc_available) {
    throw AssumptionViolated(
        "treatment coefficient is not identified for this design");
  }
  return pr.beta_jc(0);
}

struct PartialVariance {
  double sigma2_j = 0.0;
  double denom_j = 0.0;
  bool j_available = false;
  double sigma2_jc = 0.0;
  double denom_jc = 0.0;
  bool jc_available = false;
};

// Noise-variance estimators from the in-sample residuals of the two partial
// regressions. The denominators are the effective residual degrees of
// freedom; both estimators are conservative under a linear model.
inline PartialVariance partial_variance_estimators(const Design& design,
                                                   const Eigen::VectorXd& y,
                                                   const ColSplit& split) {
  detail::validate_split(design, split);
  if (design.regime != Regime::HighDimFullRowRank) {
    throw AssumptionViolated(
        "partial-regression variance estimators need full row rank");
  }
  PartialRegResult pr = partial_regularized(design, y, split);
  PartialVariance out;

  Eigen::MatrixXd q = detail::perp_basis(split.t, design.n, design.tol);
  Eigen::MatrixXd rw = q * (q.transpose() * split.w);
  // Trace of the residual projector is n minus the rank of the residualized
  // block; ranking the basis-space product keeps the count exact.
  Eigen::Index rw_rank =
      q.cols() == 0 ? 0 : compact_svd(q.transpose() * split.w, design.tol).r;
  out.denom_j = static_cast<double>(design.n - rw_rank);
  if (out.denom_j <= design.tol.div_tol) {
    throw ZeroDegreesOfFreedom(
        "residualized W spans the whole sample space: no degrees of freedom "
        "left for the j-block estimator");
  }
  out.sigma2_j = (y - rw * pr.beta_j).squaredNorm() / out.denom_j;
  out.j_available = true;

  if (split.b2_satisfied) {
    Svd w_svd = compact_svd(split.w, design.tol);
    Eigen::MatrixXd w_pinv = pinv_from_svd(w_svd, split.w.rows(), split.w.cols());
    Eigen::MatrixXd k = w_pinv * split.t;
    Eigen::MatrixXd gram_pinv = w_svd.v *
                                w_svd.s.cwiseAbs2().cwiseInverse().asDiagonal() *
                                w_svd.v.transpose();
    Eigen::MatrixXd perp_k = detail::perp_of(k, split.w.cols(), design.tol);
    out.denom_jc = (perp_k * gram_pinv).trace();
    if (out.denom_jc <= design.tol.div_tol) {
      throw ZeroDegreesOfFreedom(
          "no degrees of freedom left for the jc-block estimator");
    }
    Eigen::VectorXd wy = w_pinv * y;
    out.sigma2_jc = (wy - k * pr.beta_jc).squaredNorm() / out.denom_jc;
    out.jc_available = true;
  }
  return out;
}

}  // namespace minnorm

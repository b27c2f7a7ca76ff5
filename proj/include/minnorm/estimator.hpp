#pragma once

// The minimum l2-norm least-squares estimator, regime classification, hat
// diagonal, and the GLS-whitened variant.

#include <Eigen/Dense>
#include <utility>

#include "minnorm/errors.hpp"
#include "minnorm/linalg.hpp"

namespace minnorm {

enum class Regime {
  ClassicalFullColumnRank,  // rank = p, n > p
  HighDimFullRowRank,       // rank = n, n <= p
  Degenerate,               // rank < min(n, p)
};

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::ClassicalFullColumnRank: return "classical-full-column-rank";
    case Regime::HighDimFullRowRank: return "highdim-full-row-rank";
    default: return "degenerate";
  }
}

struct Design {
  Eigen::MatrixXd x;
  Eigen::Index n = 0, p = 0;
  Eigen::Index rank = 0;
  Regime regime = Regime::Degenerate;
  Tolerance tol;
  Svd svd;  // compact SVD of x, shared by every downstream shortcut
};

inline Design make_design(Eigen::MatrixXd x, const Tolerance& tol = {}) {
  check_finite(x, "design matrix");
  if (x.rows() < 1 || x.cols() < 1) throw InvalidInput("empty design matrix");
  Design d;
  d.n = x.rows();
  d.p = x.cols();
  d.tol = tol;
  d.svd = compact_svd(x, tol);
  d.rank = d.svd.r;
  if (d.rank == d.p && d.n > d.p) {
    d.regime = Regime::ClassicalFullColumnRank;
  } else if (d.rank == d.n && d.n <= d.p) {
    d.regime = Regime::HighDimFullRowRank;
  } else {
    d.regime = Regime::Degenerate;
  }
  d.x = std::move(x);
  return d;
}

struct FitResult {
  Design design;
  Eigen::VectorXd beta_hat;   // X^+ y
  Eigen::VectorXd fitted;     // X beta_hat
  Eigen::VectorXd residuals;  // y - fitted
  Eigen::VectorXd hat_diag;   // H_ii = x_i^T (X^T X)^+ x_i
  Eigen::MatrixXd pinv_x;     // X^+, p x n
  Eigen::MatrixXd gram_inv;   // (X X^T)^{-1}, cached when full row rank
  Eigen::MatrixXd pperp;      // I - X X^+, cached when full column rank
};

inline FitResult fit(const Design& design, const Eigen::VectorXd& y) {
  check_finite(y, "response");
  if (y.size() != design.n) {
    throw InvalidInput("response length does not match the design row count");
  }
  const Svd& f = design.svd;
  FitResult out;
  out.design = design;
  out.pinv_x = pinv_from_svd(f, design.n, design.p);
  out.beta_hat = out.pinv_x * y;
  out.fitted = design.x * out.beta_hat;
  out.residuals = y - out.fitted;
  // Row-wise leverage; equals the squared row norms of U since H = U U^T.
  out.hat_diag = f.u.rowwise().squaredNorm();
  if (design.regime == Regime::HighDimFullRowRank) {
    out.gram_inv =
        f.u * f.s.cwiseAbs2().cwiseInverse().asDiagonal() * f.u.transpose();
  } else if (design.regime == Regime::ClassicalFullColumnRank) {
    out.pperp = Eigen::MatrixXd::Identity(design.n, design.n) -
                f.u * f.u.transpose();
  }
  return out;
}

inline double predict(const FitResult& fit_result, const Eigen::VectorXd& x_new) {
  check_finite(x_new, "test covariate");
  if (x_new.size() != fit_result.beta_hat.size()) {
    throw InvalidInput("test covariate length does not match the coefficient count");
  }
  return x_new.dot(fit_result.beta_hat);
}

// Whitened fit: apply Sigma^{-1/2} (symmetric eigendecomposition square root)
// to both sides and fit. The returned result's design is the whitened one.
inline FitResult fit_gls(const Design& design, const Eigen::VectorXd& y,
                         const Eigen::MatrixXd& sigma) {
  check_finite(sigma, "noise covariance");
  if (sigma.rows() != design.n || sigma.cols() != design.n) {
    throw InvalidInput("noise covariance must be n x n");
  }
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() >
      1e-10 * std::max(1.0, sigma.cwiseAbs().maxCoeff())) {
    throw InvalidInput("noise covariance must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  if (eig.info() != Eigen::Success) {
    throw NumericalFailure("eigendecomposition of the noise covariance failed");
  }
  if (eig.eigenvalues().minCoeff() <= design.tol.div_tol) {
    throw InvalidInput("noise covariance must be positive definite");
  }
  Eigen::MatrixXd whiten = eig.eigenvectors() *
                           eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                           eig.eigenvectors().transpose();
  Design whitened = make_design(whiten * design.x, design.tol);
  return fit(whitened, whiten * y);
}

}  // namespace minnorm

#pragma once

// Moments of the minimum-norm estimator under a linear noise model, the
// leave-one-out homoskedastic variance estimator, z-intervals for test-point
// predictions, and a covariance-dominance comparison against competing
// linear unbiased estimators.

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "minnorm/errors.hpp"
#include "minnorm/estimator.hpp"
#include "minnorm/linalg.hpp"
#include "minnorm/rowops.hpp"

namespace minnorm {

struct GaussMarkovModel {
  Design design;
  Eigen::VectorXd beta;       // data-generating coefficients
  double sigma2 = 1.0;        // homoskedastic noise variance
  Eigen::VectorXd beta_star;  // projection of beta onto the row space of x
};

inline GaussMarkovModel make_gauss_markov(Design design, Eigen::VectorXd beta,
                                          double sigma2) {
  check_finite(beta, "coefficients");
  if (beta.size() != design.p) {
    throw InvalidInput("coefficient length does not match the design");
  }
  if (!(sigma2 > 0.0)) throw InvalidInput("noise variance must be positive");
  GaussMarkovModel m;
  m.beta_star = design.svd.v * (design.svd.v.transpose() * beta);
  m.design = std::move(design);
  m.beta = std::move(beta);
  m.sigma2 = sigma2;
  return m;
}

// Mean and covariance of the fitted coefficients: the estimator is unbiased
// for the row-space projection of the true coefficients, never for the part
// the design cannot see.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> beta_moments(
    const GaussMarkovModel& model) {
  const Design& d = model.design;
  Eigen::MatrixXd px = pinv_from_svd(d.svd, d.n, d.p);
  return {model.beta_star, model.sigma2 * px * px.transpose()};
}

struct VarianceEstimate {
  double sigma2_hat = 0.0;
  double denominator = 0.0;  // squared Frobenius norm of the rescaled kernel
  Regime regime = Regime::Degenerate;
};

// Homoskedastic noise-variance estimate from the leave-one-out residuals.
// Unbiased under full column rank; conservative under full row rank.
inline VarianceEstimate sigma2_hat(const Design& design,
                                   const Eigen::VectorXd& y) {
  FitResult full = fit(design, y);
  Eigen::VectorXd tilde = detail::loo_residuals_from(full, y);
  const Eigen::MatrixXd& kernel =
      design.regime == Regime::ClassicalFullColumnRank ? full.pperp
                                                       : full.gram_inv;
  Eigen::MatrixXd rescaled =
      kernel.diagonal().cwiseInverse().asDiagonal() * kernel;
  VarianceEstimate ve;
  ve.denominator = rescaled.squaredNorm();
  ve.sigma2_hat = tilde.squaredNorm() / ve.denominator;
  ve.regime = design.regime;
  return ve;
}

// Standard normal quantile: rational initial guess refined by one Halley
// step through erfc, accurate to near machine precision on (0, 1).
inline double invnorm(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw InvalidInput("probability must lie strictly between 0 and 1");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (prob < plow) {
    double q = std::sqrt(-2.0 * std::log(prob));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  } else if (prob <= 1.0 - plow) {
    double q = prob - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - prob));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  constexpr double sqrt2 = 1.4142135623730951;
  constexpr double sqrt2pi = 2.5066282746310002;
  double e = 0.5 * std::erfc(-x / sqrt2) - prob;
  double u = e * sqrt2pi * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

// Symmetric z-interval for the prediction at x_new, using the leave-one-out
// variance estimate and the quadratic form x_new^T (X^T X)^+ x_new.
inline PredictionInterval prediction_ci(const Design& design,
                                        const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& x_new,
                                        double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidInput("alpha must lie strictly between 0 and 1");
  }
  check_finite(x_new, "test covariate");
  if (x_new.size() != design.p) {
    throw InvalidInput("test covariate length does not match the design");
  }
  VarianceEstimate ve = sigma2_hat(design, y);
  FitResult full = fit(design, y);
  const double y_hat = predict(full, x_new);
  Eigen::VectorXd scaled = design.svd.s.cwiseInverse().asDiagonal() *
                           (design.svd.v.transpose() * x_new);
  const double quad = scaled.squaredNorm();
  const double half =
      invnorm(1.0 - alpha / 2.0) * std::sqrt(ve.sigma2_hat * quad);
  return {y_hat - half, y_hat + half, IntervalMethod::ZHomoskedastic, alpha};
}

struct GaussMarkovReport {
  double trace_ols = 0.0;         // total variance of the fitted coefficients
  double trace_competitor = 0.0;  // total variance of the competitor
  bool trace_dominates = false;   // trace_ols <= trace_competitor
  Eigen::VectorXd rowspace_gap;   // v'(Cov(My) - Cov(fit))v over a row-space basis
  bool rowspace_dominates = false;
  Eigen::MatrixXd cov_gap;        // Cov(My) - Cov(fit)
  double min_eigenvalue_gap = 0.0;
  // Full-ordering verdict; only claimed under full column rank, where the
  // gap really is positive semidefinite. Under full row rank the ordering
  // can fail off the row space, so it is reported but never asserted.
  bool loewner_dominates = false;
};

// Compares the fitted-coefficient covariance against a competing linear
// unbiased estimator M y. The competitor must invert the design on the
// appropriate side.
inline GaussMarkovReport gauss_markov_compare(const Design& design,
                                              const Eigen::MatrixXd& m,
                                              double sigma2) {
  check_finite(m, "competitor");
  if (!(sigma2 > 0.0)) throw InvalidInput("noise variance must be positive");
  if (m.rows() != design.p || m.cols() != design.n) {
    throw InvalidInput("competitor must map responses to coefficients");
  }
  if (design.n > design.p) {
    Eigen::MatrixXd gap = m * design.x - Eigen::MatrixXd::Identity(design.p, design.p);
    if (gap.cwiseAbs().maxCoeff() > 1e-8) {
      throw NotAValidInverse("competitor is not a left inverse of the design");
    }
  } else {
    Eigen::MatrixXd gap = design.x * m - Eigen::MatrixXd::Identity(design.n, design.n);
    if (gap.cwiseAbs().maxCoeff() > 1e-8) {
      throw NotAValidInverse("competitor is not a right inverse of the design");
    }
  }

  Eigen::MatrixXd px = pinv_from_svd(design.svd, design.n, design.p);
  Eigen::MatrixXd cov_ols = sigma2 * px * px.transpose();
  Eigen::MatrixXd cov_m = sigma2 * m * m.transpose();

  GaussMarkovReport rep;
  rep.cov_gap = cov_m - cov_ols;
  rep.trace_ols = cov_ols.trace();
  rep.trace_competitor = cov_m.trace();
  const double slack = 1e-9 * std::max(1.0, rep.trace_competitor);
  rep.trace_dominates = rep.trace_ols <= rep.trace_competitor + slack;

  rep.rowspace_gap.resize(design.rank);
  for (Eigen::Index k = 0; k < design.rank; ++k) {
    Eigen::VectorXd v = design.svd.v.col(k);
    rep.rowspace_gap(k) = v.dot(rep.cov_gap * v);
  }
  rep.rowspace_dominates = design.rank == 0 ||
                           rep.rowspace_gap.minCoeff() >= -slack;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rep.cov_gap);
  rep.min_eigenvalue_gap = eig.eigenvalues().minCoeff();
  rep.loewner_dominates = design.regime == Regime::ClassicalFullColumnRank &&
                          rep.min_eigenvalue_gap >= -1e-9;
  return rep;
}

}  // namespace minnorm

#pragma once

// Row-partitioned shortcuts: refits after dropping rows, leave-one-out
// residuals and PRESS, online updating, the jackknife, and jackknife-style
// prediction intervals. Every formula here is validated in tests against
// from-scratch refits.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "minnorm/errors.hpp"
#include "minnorm/estimator.hpp"
#include "minnorm/linalg.hpp"

namespace minnorm {

struct RowSubset {
  std::vector<Eigen::Index> kept;     // sorted, 0-based
  std::vector<Eigen::Index> dropped;  // sorted complement of kept
};

inline RowSubset make_row_subset(Eigen::Index n,
                                 std::vector<Eigen::Index> kept) {
  if (n < 1) throw InvalidInput("row count must be positive");
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  if (kept.empty()) throw InvalidInput("kept row set must be non-empty");
  if (kept.front() < 0 || kept.back() >= n) {
    throw InvalidInput("kept row index out of range");
  }
  RowSubset s;
  s.kept = std::move(kept);
  s.dropped.reserve(static_cast<size_t>(n) - s.kept.size());
  auto it = s.kept.begin();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (it != s.kept.end() && *it == i) {
      ++it;
    } else {
      s.dropped.push_back(i);
    }
  }
  return s;
}

struct LooResult {
  Eigen::VectorXd loo_residuals;  // entry i: y_i minus the leave-i-out prediction
  double press = 0.0;             // squared norm of loo_residuals
};

struct JackknifeResult {
  Eigen::VectorXd beta_jack;
  Eigen::MatrixXd v_jack;  // HC3-style sandwich, symmetric PSD
};

enum class IntervalMethod { ZHomoskedastic, Jackknife, JackknifePlus };

struct PredictionInterval {
  double lower = 0.0;
  double upper = 0.0;
  IntervalMethod method = IntervalMethod::Jackknife;
  double alpha = 0.5;
};

namespace detail {

inline void validate_subset(Eigen::Index n, const RowSubset& s) {
  if (s.kept.empty()) throw InvalidInput("kept row set must be non-empty");
  if (static_cast<Eigen::Index>(s.kept.size() + s.dropped.size()) != n) {
    throw InvalidInput("row subset does not partition the sample");
  }
  for (Eigen::Index i : s.kept) {
    if (i < 0 || i >= n) throw InvalidInput("kept row index out of range");
  }
  for (Eigen::Index i : s.dropped) {
    if (i < 0 || i >= n) throw InvalidInput("dropped row index out of range");
  }
}

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m,
                                 const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (size_t k = 0; k < idx.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = m.row(idx[k]);
  }
  return out;
}

inline Eigen::MatrixXd take_cols(const Eigen::MatrixXd& m,
                                 const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = m.col(idx[k]);
  }
  return out;
}

inline Eigen::VectorXd take(const Eigen::VectorXd& v,
                            const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) {
    out(static_cast<Eigen::Index>(k)) = v(idx[k]);
  }
  return out;
}

// Shortcut LOO residuals from a completed fit. Full column rank rescales the
// ordinary residuals by the diagonal of I - H; full row rank rescales G y by
// the diagonal of G = (X X^T)^{-1}.
inline Eigen::VectorXd loo_residuals_from(const FitResult& full,
                                          const Eigen::VectorXd& y) {
  const Design& d = full.design;
  Eigen::VectorXd scale, raw;
  if (d.regime == Regime::ClassicalFullColumnRank) {
    scale = full.pperp.diagonal();
    raw = full.residuals;
  } else if (d.regime == Regime::HighDimFullRowRank) {
    scale = full.gram_inv.diagonal();
    raw = full.gram_inv * y;
  } else {
    throw RegimeMismatch(
        "leave-one-out shortcuts need full column rank or full row rank");
  }
  for (Eigen::Index i = 0; i < d.n; ++i) {
    if (scale(i) <= d.tol.div_tol) {
      throw LeverageOne("leave-one-out rescaling vanishes at row " +
                        std::to_string(i + 1));
    }
  }
  return raw.cwiseQuotient(scale);
}

}  // namespace detail

// Refit after restricting to subset.kept, without building the subsample fit
// from scratch. Full row rank: project the full coefficients onto the row
// space of the kept block. Full column rank: correct the full fit through the
// dropped block, which needs I - H_{dropped,dropped} to be invertible.
inline Eigen::VectorXd fit_subset(const Design& design, const Eigen::VectorXd& y,
                                  const RowSubset& subset) {
  detail::validate_subset(design.n, subset);
  if (design.regime == Regime::Degenerate) {
    throw RegimeMismatch(
        "subset refits need full column rank or full row rank");
  }
  FitResult full = fit(design, y);
  if (subset.dropped.empty()) return full.beta_hat;

  if (design.regime == Regime::HighDimFullRowRank) {
    Svd sub = compact_svd(detail::take_rows(design.x, subset.kept), design.tol);
    return sub.v * (sub.v.transpose() * full.beta_hat);
  }

  const Eigen::Index m = static_cast<Eigen::Index>(subset.dropped.size());
  Eigen::MatrixXd u_drop = detail::take_rows(design.svd.u, subset.dropped);
  Eigen::MatrixXd cap =
      Eigen::MatrixXd::Identity(m, m) - u_drop * u_drop.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> cap_svd(
      cap, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (cap_svd.singularValues()(m - 1) <= design.tol.div_tol) {
    throw SingularSubmatrix(
        "dropped-block correction is singular: the kept rows no longer have "
        "full column rank");
  }
  Eigen::VectorXd eps_drop = detail::take(full.residuals, subset.dropped);
  Eigen::MatrixXd pinv_drop = detail::take_cols(full.pinv_x, subset.dropped);
  return full.beta_hat - pinv_drop * cap_svd.solve(eps_drop);
}

// Same refit expressed through the dropped columns of the pseudoinverse:
// subtract the projection of beta_hat onto their span. Full row rank only.
inline Eigen::VectorXd fit_subset_complement_form(const Design& design,
                                                  const Eigen::VectorXd& y,
                                                  const RowSubset& subset) {
  detail::validate_subset(design.n, subset);
  if (design.regime != Regime::HighDimFullRowRank) {
    throw RegimeMismatch("complement-form refit needs full row rank");
  }
  FitResult full = fit(design, y);
  if (subset.dropped.empty()) return full.beta_hat;
  Eigen::MatrixXd k = detail::take_cols(full.pinv_x, subset.dropped);
  return full.beta_hat - proj_colspace(k, design.tol) * full.beta_hat;
}

inline Eigen::VectorXd loo_beta(const Design& design, const Eigen::VectorXd& y,
                                Eigen::Index i) {
  if (i < 0 || i >= design.n) throw InvalidInput("row index out of range");
  FitResult full = fit(design, y);
  if (design.regime == Regime::ClassicalFullColumnRank) {
    const double d = 1.0 - full.hat_diag(i);
    if (d <= design.tol.div_tol) {
      throw LeverageOne("row " + std::to_string(i + 1) +
                        " has leverage one: dropping it changes the column space");
    }
    return full.beta_hat - (full.residuals(i) / d) * full.pinv_x.col(i);
  }
  if (design.regime == Regime::HighDimFullRowRank) {
    // Projection of beta_hat off the direction contributed by row i.
    Eigen::VectorXd g = full.pinv_x.col(i);
    const double gii = full.gram_inv(i, i);
    if (gii <= design.tol.div_tol) {
      throw LeverageOne("leave-one-out rescaling vanishes at row " +
                        std::to_string(i + 1));
    }
    return full.beta_hat - g * (g.dot(full.beta_hat) / gii);
  }
  throw RegimeMismatch(
      "leave-one-out shortcuts need full column rank or full row rank");
}

inline LooResult loo_residuals(const Design& design, const Eigen::VectorXd& y) {
  FitResult full = fit(design, y);
  LooResult out;
  out.loo_residuals = detail::loo_residuals_from(full, y);
  out.press = out.loo_residuals.squaredNorm();
  return out;
}

inline double press(const LooResult& loo) {
  return loo.loo_residuals.squaredNorm();
}

// Append one observation and refresh the fit. Appending a row adds x x^T to
// the Gram matrix; the downdate identity in pinv_rank_one_downdate requires
// 1 + d^T A^+ c = 0, and here that quantity is 1 + x^T (X^T X)^+ x >= 1, so
// the rank-one shortcut can never apply and the decomposition is rebuilt.
inline FitResult online_update(const FitResult& prev,
                               const Eigen::VectorXd& x_new, double y_new) {
  check_finite(x_new, "new covariate row");
  if (!std::isfinite(y_new)) throw InvalidInput("new response must be finite");
  const Design& d = prev.design;
  if (x_new.size() != d.p) {
    throw InvalidInput("new covariate row length does not match the design");
  }
  Eigen::MatrixXd xa(d.n + 1, d.p);
  xa.topRows(d.n) = d.x;
  xa.row(d.n) = x_new.transpose();
  Eigen::VectorXd ya(d.n + 1);
  ya.head(d.n) = prev.fitted + prev.residuals;
  ya(d.n) = y_new;
  Design da = make_design(std::move(xa), d.tol);
  if (da.regime == Regime::Degenerate) {
    throw RegimeMismatch("updated design is rank-deficient");
  }
  return fit(da, ya);
}

// Jackknife point estimate (mean of the n leave-one-out pseudo-values) and
// the HC3-style variance sandwich. Both reduce to the shortcut residuals:
// beta_jack = beta_hat + ((n-1)/n) X^+ loo_residuals.
inline JackknifeResult jackknife(const Design& design, const Eigen::VectorXd& y) {
  FitResult full = fit(design, y);
  Eigen::VectorXd tilde = detail::loo_residuals_from(full, y);
  const double n = static_cast<double>(design.n);
  JackknifeResult out;
  out.beta_jack = full.beta_hat + ((n - 1.0) / n) * (full.pinv_x * tilde);
  out.v_jack = full.pinv_x * tilde.cwiseAbs2().asDiagonal() *
               full.pinv_x.transpose();
  return out;
}

// Entry i is the prediction of the leave-i-out model at x_new.
inline Eigen::VectorXd loo_predictions(const Design& design,
                                       const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& x_new) {
  FitResult full = fit(design, y);
  Eigen::VectorXd tilde = detail::loo_residuals_from(full, y);
  const double y_hat = predict(full, x_new);
  Eigen::VectorXd w = full.pinv_x.transpose() * x_new;
  return Eigen::VectorXd::Constant(design.n, y_hat) - w.cwiseProduct(tilde);
}

// Symmetric interval around the point prediction, with radius the upper
// empirical quantile of the absolute leave-one-out residuals.
inline PredictionInterval jackknife_interval(const Design& design,
                                             const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& x_new,
                                             double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidInput("alpha must lie strictly between 0 and 1");
  }
  FitResult full = fit(design, y);
  Eigen::VectorXd tilde = detail::loo_residuals_from(full, y);
  const double y_hat = predict(full, x_new);
  std::vector<double> abs_res(tilde.data(), tilde.data() + tilde.size());
  for (double& v : abs_res) v = std::abs(v);
  const double r = quantile_hat(std::move(abs_res), QuantileSpec{alpha});
  return {y_hat - r, y_hat + r, IntervalMethod::Jackknife, alpha};
}

// Jackknife+ interval: quantiles of the leave-one-out predictions shifted by
// the absolute leave-one-out residuals.
inline PredictionInterval jackknife_plus_interval(const Design& design,
                                                  const Eigen::VectorXd& y,
                                                  const Eigen::VectorXd& x_new,
                                                  double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidInput("alpha must lie strictly between 0 and 1");
  }
  Eigen::VectorXd preds = loo_predictions(design, y, x_new);
  Eigen::VectorXd tilde = loo_residuals(design, y).loo_residuals;
  std::vector<double> lo(design.n), hi(design.n);
  for (Eigen::Index i = 0; i < design.n; ++i) {
    lo[static_cast<size_t>(i)] = -preds(i) + std::abs(tilde(i));
    hi[static_cast<size_t>(i)] = preds(i) + std::abs(tilde(i));
  }
  const double lower = -quantile_hat(std::move(lo), QuantileSpec{alpha});
  const double upper = quantile_hat(std::move(hi), QuantileSpec{alpha});
  return {lower, upper, IntervalMethod::JackknifePlus, alpha};
}

}  // namespace minnorm

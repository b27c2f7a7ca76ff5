#pragma once

// SVD-backed kernels: pseudoinverse, projectors, Gram inverse, the rank-one
// pseudoinverse downdate, and the (|R|+1)-adjusted empirical quantile.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "minnorm/errors.hpp"

namespace minnorm {

struct Tolerance {
  // Singular values below rel_rank_tol * sigma_max * max(n, p) are zeroed.
  double rel_rank_tol = std::numeric_limits<double>::epsilon();
  // Denominators with absolute value below div_tol trigger errors.
  double div_tol = 1e-12;
};

// Compact SVD: m = u * diag(s) * v^T with r = effective rank.
struct Svd {
  Eigen::MatrixXd u;  // n x r, orthonormal columns
  Eigen::VectorXd s;  // r positive singular values, descending
  Eigen::MatrixXd v;  // p x r, orthonormal columns
  Eigen::Index r = 0;
};

struct QuantileSpec {
  double alpha = 0.5;  // in [0, 1]
};

inline void check_finite(const Eigen::Ref<const Eigen::MatrixXd>& m,
                         const char* name) {
  if (!m.allFinite()) {
    throw InvalidInput(std::string(name) + " contains NaN or Inf");
  }
}

inline Svd compact_svd(const Eigen::MatrixXd& m, const Tolerance& tol = {}) {
  check_finite(m, "matrix");
  if (tol.rel_rank_tol <= 0 || tol.div_tol <= 0) {
    throw InvalidInput("tolerances must be positive");
  }
  Svd out;
  if (m.rows() == 0 || m.cols() == 0) {
    out.u.resize(m.rows(), 0);
    out.s.resize(0);
    out.v.resize(m.cols(), 0);
    return out;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff =
      tol.rel_rank_tol * sv(0) * static_cast<double>(std::max(m.rows(), m.cols()));
  Eigen::Index r = 0;
  while (r < sv.size() && sv(r) > cutoff) ++r;
  out.u = svd.matrixU().leftCols(r);
  out.s = sv.head(r);
  out.v = svd.matrixV().leftCols(r);
  out.r = r;
  return out;
}

inline Eigen::MatrixXd pinv_from_svd(const Svd& f, Eigen::Index rows,
                                     Eigen::Index cols) {
  if (f.r == 0) return Eigen::MatrixXd::Zero(cols, rows);
  return f.v * f.s.cwiseInverse().asDiagonal() * f.u.transpose();
}

// Moore-Penrose pseudoinverse M^+ = V S^{-1} U^T at the effective rank.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, const Tolerance& tol = {}) {
  Svd f = compact_svd(m, tol);
  return pinv_from_svd(f, m.rows(), m.cols());
}

// Projector onto colsp(m): P = M M^+ = U U^T. With complement = true returns
// I - P, the projector onto the orthogonal complement.
inline Eigen::MatrixXd proj_colspace(const Eigen::MatrixXd& m,
                                     const Tolerance& tol = {},
                                     bool complement = false) {
  Svd f = compact_svd(m, tol);
  Eigen::MatrixXd p = f.u * f.u.transpose();
  if (p.size() == 0) p = Eigen::MatrixXd::Zero(m.rows(), m.rows());
  if (complement) {
    return Eigen::MatrixXd::Identity(m.rows(), m.rows()) - p;
  }
  return p;
}

// (M M^T)^+ = U S^{-2} U^T; the inverse of the row Gram matrix when M has
// full row rank.
inline Eigen::MatrixXd gram_inverse(const Eigen::MatrixXd& m,
                                    const Tolerance& tol = {}) {
  Svd f = compact_svd(m, tol);
  if (f.r == 0) return Eigen::MatrixXd::Zero(m.rows(), m.rows());
  return f.u * f.s.cwiseAbs2().cwiseInverse().asDiagonal() * f.u.transpose();
}

// Pseudoinverse of the rank-one perturbation A + c d^T under the three
// conditions c in colsp(A), d in rowsp(A), 1 + d^T A^+ c = 0:
//   (A + c d^T)^+ = A^+ - k k^+ A^+ - A^+ h^{+,T} h^T + (k^+ A^+ h^{+,T}) k h^T
// with k = A^+ c and h = A^{+,T} d. The conditions hold for Gram downdates
// X^T X - x_i x_i^T in the interpolating regime (leverage exactly 1) and are
// rejected otherwise so the caller falls back to a fresh SVD.
inline Eigen::MatrixXd pinv_rank_one_downdate(const Eigen::MatrixXd& a,
                                              const Eigen::MatrixXd& a_pinv,
                                              const Eigen::VectorXd& c,
                                              const Eigen::VectorXd& d,
                                              const Tolerance& tol = {}) {
  check_finite(a, "a");
  check_finite(a_pinv, "a_pinv");
  check_finite(c, "c");
  check_finite(d, "d");
  if (a_pinv.rows() != a.cols() || a_pinv.cols() != a.rows()) {
    throw InvalidInput("a_pinv must have the transposed shape of a");
  }
  if (c.size() != a.rows() || d.size() != a.cols()) {
    throw InvalidInput("c/d lengths must match the rows/cols of a");
  }

  const Eigen::VectorXd k = a_pinv * c;             // p-vector
  const Eigen::VectorXd h = a_pinv.transpose() * d; // n-vector

  // c in colsp(A)  <=>  A A^+ c = c;  d in rowsp(A)  <=>  A^+ A d = d.
  const double c_gap = (a * k - c).norm();
  if (c_gap > tol.div_tol * std::max(1.0, c.norm())) {
    throw LemmaConditionsNotMet("c is not in the column space of a");
  }
  const double d_gap = (a_pinv * (a * d) - d).norm();
  if (d_gap > tol.div_tol * std::max(1.0, d.norm())) {
    throw LemmaConditionsNotMet("d is not in the row space of a");
  }
  const double scalar = d.dot(k);  // d^T A^+ c
  if (std::abs(1.0 + scalar) > tol.div_tol * std::max(1.0, std::abs(scalar))) {
    throw LemmaConditionsNotMet("1 + d^T a^+ c is not zero");
  }
  const double k2 = k.squaredNorm();
  const double h2 = h.squaredNorm();
  if (k2 < tol.div_tol || h2 < tol.div_tol) {
    throw LemmaConditionsNotMet("k or h is numerically zero");
  }

  // v^+ = v^T / ||v||^2 for nonzero vectors.
  Eigen::MatrixXd out = a_pinv;
  out -= (k / k2) * (k.transpose() * a_pinv);
  out -= (a_pinv * (h / h2)) * h.transpose();
  const double coeff = k.dot(a_pinv * h) / (k2 * h2);
  out += coeff * k * h.transpose();
  return out;
}

// The (|R|+1)-adjusted empirical quantile: the ceil((1-alpha)(|R|+1))-th
// smallest element, +infinity when alpha < 1/(|R|+1). Duplicates count with
// multiplicity; the index is clamped to [1, |R|] (alpha = 1 maps to index 0).
inline double quantile_hat(std::vector<double> values, const QuantileSpec& spec) {
  if (values.empty()) throw InvalidInput("quantile of an empty set");
  if (!(spec.alpha >= 0.0) || !(spec.alpha <= 1.0)) {
    throw InvalidInput("alpha must lie in [0, 1]");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidInput("quantile input contains NaN or Inf");
  }
  const auto m = static_cast<long double>(values.size());
  if (static_cast<long double>(spec.alpha) < 1.0L / (m + 1.0L)) {
    return std::numeric_limits<double>::infinity();
  }
  long double q = (1.0L - static_cast<long double>(spec.alpha)) * (m + 1.0L);
  // Nudge below by a relative 2^-48 so products that are integers in exact
  // arithmetic do not round up through the ceiling.
  long double idx_l = std::ceil(q - std::ldexp(std::abs(static_cast<double>(q)), -48));
  auto idx = static_cast<std::ptrdiff_t>(idx_l);
  idx = std::clamp<std::ptrdiff_t>(idx, 1, static_cast<std::ptrdiff_t>(values.size()));
  std::nth_element(values.begin(), values.begin() + (idx - 1), values.end());
  return values[static_cast<size_t>(idx - 1)];
}

}  // namespace minnorm

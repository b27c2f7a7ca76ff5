#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "minnorm/colops.hpp"
#include "oracles.hpp"

using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace minnorm;

namespace {

std::vector<Eigen::Index> range_set(Eigen::Index lo, Eigen::Index hi) {
  std::vector<Eigen::Index> out(static_cast<size_t>(hi - lo));
  std::iota(out.begin(), out.end(), lo);
  return out;
}

// Minimizes the j-block norm over all interpolators by parameterizing the
// solution set as pinv(X) y + (null-space basis) z and least-squares in z.
VectorXd nullspace_lsq_beta_j(const MatrixXd& x, const VectorXd& y,
                              const std::vector<Eigen::Index>& j) {
  VectorXd base = oracle::min_norm_ols(x, y);
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(x);
  MatrixXd null_proj =
      MatrixXd::Identity(x.cols(), x.cols()) - cod.pseudoInverse() * x;
  MatrixXd nj = null_proj(j, Eigen::all);
  VectorXd z = nj.completeOrthogonalDecomposition().solve(VectorXd(-base(j)));
  VectorXd beta = base + null_proj * z;
  return beta(j);
}

}  // namespace

TEST_CASE("column splits classify the rank conditions") {
  Design wide = make_design(oracle::gaussian(5, 9, 301));
  ColSplit ok = make_col_split(wide, range_set(0, 7));
  CHECK(ok.b2_satisfied);
  CHECK(ok.w.cols() == 7);
  CHECK(ok.t.cols() == 2);
  CHECK(ok.jc == std::vector<Eigen::Index>{7, 8});

  // Too few columns in the kept block: W cannot have full row rank.
  CHECK_FALSE(make_col_split(wide, range_set(0, 3)).b2_satisfied);

  // Duplicated dropped columns: T loses full column rank.
  MatrixXd dup = wide.x;
  dup.col(8) = dup.col(7);
  ColSplit broken = make_col_split(make_design(dup), range_set(0, 7));
  CHECK_FALSE(broken.b2_satisfied);

  // Full column rank designs never satisfy the split condition.
  Design tall = make_design(oracle::gaussian(12, 5, 302));
  CHECK_FALSE(make_col_split(tall, range_set(0, 3)).b2_satisfied);

  CHECK_THROWS_AS(make_col_split(wide, {}), InvalidInput);
  CHECK_THROWS_AS(make_col_split(wide, {9}), InvalidInput);
}

TEST_CASE("short and long regressions decompose exactly") {
  // Wide instance with the split condition: three independent solves agree.
  Design wide = make_design(oracle::gaussian(5, 9, 311));
  VectorXd y = oracle::gaussian_vec(5, 312);
  ColSplit split = make_col_split(wide, range_set(0, 7));
  REQUIRE(split.b2_satisfied);
  CochranReport rep = cochran(wide, y, split);
  CHECK(rep.identity_gap <= 1e-8);

  VectorXd alpha_o = oracle::min_norm_ols(split.w, y);
  VectorXd beta_o = oracle::min_norm_ols(wide.x, y);
  MatrixXd delta_o = split.w.completeOrthogonalDecomposition().solve(split.t);
  CHECK((rep.triple.alpha_hat - alpha_o).norm() <= 1e-8);
  CHECK((rep.triple.beta_hat - beta_o).norm() <= 1e-8);
  CHECK((rep.triple.delta_hat - delta_o).norm() <= 1e-8);
  CHECK((rep.direct_term - beta_o(range_set(0, 7))).norm() <= 1e-12);

  // Classical instance: same identity.
  Design tall = make_design(oracle::gaussian(12, 5, 313));
  VectorXd yt = oracle::gaussian_vec(12, 314);
  ColSplit ts = make_col_split(tall, {0, 1, 2});
  CochranReport trep = cochran(tall, yt, ts);
  CHECK(trep.identity_gap <= 1e-8);

  // Unsupported designs are rejected.
  ColSplit small = make_col_split(wide, range_set(0, 3));
  CHECK_THROWS_AS(cochran(wide, y, small), AssumptionViolated);
  Design degen = make_design(oracle::rank_deficient(6, 6, 3, 315));
  CHECK_THROWS_AS(
      cochran(degen, oracle::gaussian_vec(6, 316),
              make_col_split(degen, {0, 1})),
      AssumptionViolated);
}

TEST_CASE("no bias flows through orthogonal or unused columns") {
  // Columns of T orthogonal to columns of W: delta_hat vanishes.
  MatrixXd basis = Eigen::HouseholderQR<MatrixXd>(oracle::gaussian(10, 5, 321))
                       .householderQ() *
                   MatrixXd::Identity(10, 5);
  MatrixXd x(10, 5);
  x.leftCols(3) = 2.0 * basis.leftCols(3);
  x.rightCols(2) = 3.0 * basis.rightCols(2);
  Design d = make_design(x);
  REQUIRE(d.regime == Regime::ClassicalFullColumnRank);
  VectorXd y = oracle::gaussian_vec(10, 322);
  CochranReport rep = cochran(d, y, make_col_split(d, {0, 1, 2}));
  CHECK(rep.triple.delta_hat.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((rep.triple.alpha_hat - rep.direct_term).norm() <= 1e-10);

  // Response generated from the kept block alone: the long regression puts
  // zero weight on the dropped block, so the bias term vanishes.
  Design plain = make_design(oracle::gaussian(12, 5, 323));
  VectorXd a = oracle::gaussian_vec(3, 324);
  ColSplit ps = make_col_split(plain, {0, 1, 2});
  VectorXd y_j = ps.w * a;
  CochranReport prep = cochran(plain, y_j, ps);
  CHECK(prep.bias_term.cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((prep.triple.alpha_hat - prep.direct_term).norm() <= 1e-8);
}

TEST_CASE("predictions agree for solutions that differ in the null space") {
  Design wide = make_design(oracle::gaussian(5, 9, 331));
  VectorXd y = oracle::gaussian_vec(5, 332);
  ColSplit split = make_col_split(wide, range_set(0, 7));
  CochranReport rep = cochran(wide, y, split);

  MatrixXd null_w = MatrixXd::Identity(7, 7) -
                    oracle::cod_pinv(split.w) * split.w;
  MatrixXd null_x = MatrixXd::Identity(9, 9) -
                    oracle::cod_pinv(wide.x) * wide.x;
  std::mt19937_64 rng(333);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd alpha = rep.triple.alpha_hat + null_w * oracle::gaussian_vec(rng, 7);
    VectorXd beta = rep.triple.beta_hat + null_x * oracle::gaussian_vec(rng, 9);
    MatrixXd delta = rep.triple.delta_hat + null_w * oracle::gaussian(rng, 7, 2);
    VectorXd lhs = split.w * alpha;
    VectorXd rhs =
        split.w * (beta(range_set(0, 7)) + delta * beta(range_set(7, 9)));
    CHECK((lhs - rhs).norm() <= 1e-8 * std::max(1.0, lhs.norm()));
  }
}

TEST_CASE("omitted-variable bias equals the gap between short and long fits") {
  Design tall = make_design(oracle::gaussian(15, 6, 341));
  VectorXd y = oracle::gaussian_vec(15, 342);
  std::vector<Eigen::Index> obs{0, 2, 3, 5}, mis{1, 4};
  OvbReport rep = omitted_variable_bias(tall, y, obs, mis);
  VectorXd short_fit = oracle::min_norm_ols(tall.x(Eigen::all, obs), y);
  VectorXd long_fit = oracle::min_norm_ols(tall.x, y);
  CHECK((rep.short_coef - short_fit).norm() <= 1e-8);
  CHECK((rep.bias - (short_fit - long_fit(obs))).norm() <= 1e-8);

  // Omitted block orthogonal to the observed block: no bias.
  MatrixXd basis = Eigen::HouseholderQR<MatrixXd>(oracle::gaussian(10, 5, 343))
                       .householderQ() *
                   MatrixXd::Identity(10, 5);
  Design ortho = make_design(basis);
  OvbReport zero =
      omitted_variable_bias(ortho, oracle::gaussian_vec(10, 344), {0, 1, 2}, {3, 4});
  CHECK(zero.bias.cwiseAbs().maxCoeff() <= 1e-10);

  // Two omitted columns that are copies of each other break the split
  // condition in the wide regime.
  MatrixXd xw = oracle::gaussian(5, 9, 345);
  xw.col(8) = xw.col(7);
  Design wide = make_design(xw);
  CHECK_THROWS_AS(omitted_variable_bias(wide, oracle::gaussian_vec(5, 346),
                                        range_set(0, 7), {7, 8}),
                  AssumptionViolated);

  CHECK_THROWS_AS(omitted_variable_bias(tall, y, {0, 1}, {2, 3}), InvalidInput);
  CHECK_THROWS_AS(omitted_variable_bias(tall, y, {0, 1, 2}, {2, 3, 4, 5}),
                  InvalidInput);
}

TEST_CASE("partially regularized fit matches the stationarity-system oracle") {
  Design wide = make_design(oracle::gaussian(5, 9, 351));
  VectorXd y = oracle::gaussian_vec(5, 352);
  for (auto jset : {range_set(0, 7), std::vector<Eigen::Index>{0, 2, 3, 4, 6, 7, 8}}) {
    ColSplit split = make_col_split(wide, jset);
    REQUIRE(split.b2_satisfied);
    PartialRegResult pr = partial_regularized(wide, y, split);
    REQUIRE(pr.beta_j_available);
    REQUIRE(pr.beta_jc_available);

    auto [bj, bjc] = oracle::kkt_partial(split.w, split.t, y);
    CHECK((pr.beta_j - bj).norm() <= 1e-7 * std::max(1.0, bj.norm()));
    CHECK((pr.beta_jc - bjc).norm() <= 1e-7 * std::max(1.0, bjc.norm()));

    // Interpolation property of the combined coefficients.
    CHECK((split.w * pr.beta_j + split.t * pr.beta_jc - y).norm() <=
          1e-8 * y.norm());

    // Simplified j-block form: residualizing y separately is not needed.
    MatrixXd pperp_t = MatrixXd::Identity(5, 5) -
                       split.t * oracle::cod_pinv(split.t);
    VectorXd simplified =
        (pperp_t * split.w).completeOrthogonalDecomposition().solve(y);
    CHECK((pr.beta_j - simplified).norm() <= 1e-8 * std::max(1.0, bj.norm()));

    // Weighted-regression forms of the jc block.
    MatrixXd gw = (split.w * split.w.transpose()).inverse();
    MatrixXd tg = split.t.transpose() * gw;
    VectorXd gls1 = (tg * split.t)
                        .completeOrthogonalDecomposition()
                        .solve(VectorXd(tg * y));
    CHECK((pr.beta_jc - gls1).norm() <= 1e-7 * std::max(1.0, bjc.norm()));
    MatrixXd gt = gw * split.t;
    MatrixXd mid = gt.transpose() * gw.inverse() * gt;
    VectorXd gls3 = mid.completeOrthogonalDecomposition().solve(
        VectorXd(gt.transpose() * y));
    CHECK((pr.beta_jc - gls3).norm() <= 1e-7 * std::max(1.0, bjc.norm()));
  }
}

TEST_CASE("partially regularized fit in the remaining regimes") {
  // Full column rank: the solution set is a singleton, so both blocks come
  // from the unique fit, and swapping the split swaps the blocks.
  Design tall = make_design(oracle::gaussian(12, 5, 361));
  VectorXd yt = oracle::gaussian_vec(12, 362);
  ColSplit s1 = make_col_split(tall, {0, 3});
  ColSplit s2 = make_col_split(tall, {1, 2, 4});
  PartialRegResult p1 = partial_regularized(tall, yt, s1);
  PartialRegResult p2 = partial_regularized(tall, yt, s2);
  VectorXd unique_fit = oracle::min_norm_ols(tall.x, yt);
  CHECK((p1.beta_j - unique_fit(s1.j)).norm() <= 1e-9);
  CHECK((p1.beta_jc - unique_fit(s1.jc)).norm() <= 1e-9);
  CHECK((p1.beta_j - p2.beta_jc).norm() == 0.0);
  CHECK((p1.beta_jc - p2.beta_j).norm() == 0.0);

  // Classical FWL displays.
  MatrixXd pt = MatrixXd::Identity(12, 12) - s1.t * oracle::cod_pinv(s1.t);
  MatrixXd pw = MatrixXd::Identity(12, 12) - s1.w * oracle::cod_pinv(s1.w);
  VectorXd fwl_j = (pt * s1.w).completeOrthogonalDecomposition().solve(
      VectorXd(pt * yt));
  VectorXd fwl_jc = (pw * s1.t).completeOrthogonalDecomposition().solve(
      VectorXd(pw * yt));
  CHECK((p1.beta_j - fwl_j).norm() <= 1e-8);
  CHECK((p1.beta_jc - fwl_jc).norm() <= 1e-8);

  // Keeping every column reduces to the plain minimum-norm fit.
  Design wide = make_design(oracle::gaussian(5, 9, 363));
  VectorXd yw = oracle::gaussian_vec(5, 364);
  PartialRegResult all = partial_regularized(wide, yw, make_col_split(wide, range_set(0, 9)));
  CHECK((all.beta_j - oracle::min_norm_ols(wide.x, yw)).norm() <= 1e-9);
  CHECK(all.beta_jc.size() == 0);
  CHECK(all.beta_jc_available);

  // Square nonsingular designs are singletons too.
  Design square = make_design(oracle::gaussian(6, 6, 365));
  VectorXd ys = oracle::gaussian_vec(6, 366);
  PartialRegResult ps = partial_regularized(square, ys, make_col_split(square, {0, 1, 5}));
  VectorXd solved = square.x.fullPivLu().solve(ys);
  CHECK((ps.beta_j - solved(std::vector<Eigen::Index>{0, 1, 5})).norm() <= 1e-8);
  CHECK(ps.beta_jc_available);

  // Full row rank without the split condition: only the j block is exposed,
  // and it solves "minimize the j-block norm over all interpolators".
  MatrixXd xb = oracle::gaussian(5, 9, 367);
  xb.col(8) = xb.col(7);  // jc block rank-deficient for jc = {7, 8}
  Design broken = make_design(xb);
  REQUIRE(broken.regime == Regime::HighDimFullRowRank);
  ColSplit bs = make_col_split(broken, range_set(0, 7));
  REQUIRE_FALSE(bs.b2_satisfied);
  VectorXd yb = oracle::gaussian_vec(5, 368);
  PartialRegResult pb = partial_regularized(broken, yb, bs);
  CHECK(pb.beta_j_available);
  CHECK_FALSE(pb.beta_jc_available);
  VectorXd lsq = nullspace_lsq_beta_j(xb, yb, bs.j);
  CHECK((pb.beta_j - lsq).norm() <= 1e-7 * std::max(1.0, lsq.norm()));

  Design degen = make_design(oracle::rank_deficient(6, 6, 3, 369));
  CHECK_THROWS_AS(partial_regularized(degen, oracle::gaussian_vec(6, 370),
                                      make_col_split(degen, {0, 1})),
                  AssumptionViolated);
}

TEST_CASE("residualized and projected solve operators coincide") {
  for (int seed : {371, 372, 373}) {
    Design wide = make_design(oracle::gaussian(4, 7, seed));
    ColSplit split = make_col_split(wide, range_set(0, 5));
    REQUIRE(split.b2_satisfied);
    MatrixIdentityReport rep = fwl_matrix_identity_check(split);
    CHECK(rep.holds);
    CHECK(rep.max_deviation < 1e-8);
  }

  // Empty dropped block: both operators reduce to the pseudoinverse of W.
  Design full = make_design(oracle::gaussian(4, 7, 374));
  ColSplit all = make_col_split(full, range_set(0, 7));
  MatrixIdentityReport rep = fwl_matrix_identity_check(all);
  CHECK(rep.holds);

  ColSplit bad = make_col_split(full, range_set(0, 2));
  CHECK_THROWS_AS(fwl_matrix_identity_check(bad), AssumptionViolated);
}

TEST_CASE("treatment-effect estimate recovers noiseless effects") {
  std::mt19937_64 rng(381);

  // Wide covariates, outcome driven by treatment alone.
  MatrixXd x = oracle::gaussian(rng, 6, 10);
  VectorXd z(6);
  z << 1, 0, 1, 1, 0, 0;
  const double tau = 2.5;
  CHECK(ate_estimate(x, z, VectorXd(tau * z)) == Approx(tau).margin(1e-8));

  // Classical covariates with a covariate signal on top.
  MatrixXd xc = oracle::gaussian(rng, 20, 4);
  VectorXd zc(20);
  for (Eigen::Index i = 0; i < 20; ++i) zc(i) = (i % 3 == 0) ? 1.0 : 0.0;
  VectorXd b = oracle::gaussian_vec(rng, 4);
  VectorXd yc = 1.75 * zc + xc * b;
  CHECK(ate_estimate(xc, zc, yc) == Approx(1.75).margin(1e-8));

  // Delegation: the estimate is the treatment coefficient of the partially
  // regularized fit on the stacked design.
  VectorXd yn = yc + oracle::gaussian_vec(rng, 20);
  MatrixXd stacked(20, 5);
  stacked.col(0) = zc;
  stacked.rightCols(4) = xc;
  Design ds = make_design(stacked);
  PartialRegResult pr =
      partial_regularized(ds, yn, make_col_split(ds, {1, 2, 3, 4}));
  CHECK(ate_estimate(xc, zc, yn) == Approx(pr.beta_jc(0)).margin(1e-9));

  CHECK_THROWS_AS(ate_estimate(x, VectorXd::Ones(6), VectorXd::Zero(6)),
                  ConstantTreatment);
  CHECK_THROWS_AS(ate_estimate(x, VectorXd::Zero(6), VectorXd::Zero(6)),
                  ConstantTreatment);
  VectorXd frac = z;
  frac(0) = 0.5;
  CHECK_THROWS_AS(ate_estimate(x, frac, VectorXd::Zero(6)), InvalidInput);
  Design degen = make_design(oracle::rank_deficient(8, 8, 4, 382));
  CHECK_THROWS_AS(
      ate_estimate(degen.x, VectorXd(z.replicate(2, 1).topRows(8)).cwiseAbs(),
                   oracle::gaussian_vec(8, 383)),
      RegimeMismatch);

  // Treatment column collinear with a covariate: nothing is identified.
  MatrixXd xcol = oracle::gaussian(rng, 20, 4);
  xcol.col(0) = zc;
  CHECK_THROWS_AS(ate_estimate(xcol, zc, yc), AssumptionViolated);
}

TEST_CASE("partial-regression variance estimators") {
  Design wide = make_design(oracle::gaussian(6, 10, 391));
  ColSplit split = make_col_split(wide, range_set(0, 8));
  REQUIRE(split.b2_satisfied);
  MatrixXd pperp_t = MatrixXd::Identity(6, 6) -
                     split.t * oracle::cod_pinv(split.t);
  MatrixXd rw = pperp_t * split.w;

  // Response inside the residualized column space: zero numerator.
  VectorXd inside = rw * oracle::gaussian_vec(8, 392);
  PartialVariance pv0 = partial_variance_estimators(wide, inside, split);
  CHECK(pv0.sigma2_j <= 1e-18 * std::max(1.0, inside.squaredNorm()));

  // Numerators agree with explicit residual norms at the oracle solution;
  // the j denominator counts the dropped-block dimension.
  VectorXd y = oracle::gaussian_vec(6, 393);
  PartialVariance pv = partial_variance_estimators(wide, y, split);
  auto [bj, bjc] = oracle::kkt_partial(split.w, split.t, y);
  CHECK(pv.denom_j == Approx(2.0));
  CHECK(pv.sigma2_j * pv.denom_j ==
        Approx((y - rw * bj).squaredNorm()).margin(1e-9));
  MatrixXd w_pinv = oracle::cod_pinv(split.w);
  MatrixXd k = w_pinv * split.t;
  CHECK(pv.sigma2_jc * pv.denom_jc ==
        Approx((w_pinv * y - k * bjc).squaredNorm()).margin(1e-9));
  CHECK(pv.denom_jc > 0.0);

  // Keeping every column leaves no residual degrees of freedom.
  CHECK_THROWS_AS(
      partial_variance_estimators(wide, y, make_col_split(wide, range_set(0, 10))),
      ZeroDegreesOfFreedom);
  Design tall = make_design(oracle::gaussian(12, 5, 394));
  CHECK_THROWS_AS(
      partial_variance_estimators(tall, oracle::gaussian_vec(12, 395),
                                  make_col_split(tall, {0, 1})),
      AssumptionViolated);
}

TEST_CASE("partial-regression variance estimators track their expectations") {
  std::mt19937_64 rng(401);
  Design wide = make_design(oracle::gaussian(rng, 6, 10));
  ColSplit split = make_col_split(wide, range_set(0, 8));
  REQUIRE(split.b2_satisfied);

  MatrixXd pperp_t = MatrixXd::Identity(6, 6) -
                     split.t * oracle::cod_pinv(split.t);
  MatrixXd rw = pperp_t * split.w;
  MatrixXd resid_proj = MatrixXd::Identity(6, 6) - rw * oracle::cod_pinv(rw);
  MatrixXd w_pinv = oracle::cod_pinv(split.w);
  MatrixXd k = w_pinv * split.t;
  MatrixXd perp_k = MatrixXd::Identity(8, 8) - k * oracle::cod_pinv(k);

  const double sigma2 = 1.0;
  const int reps = 3000;
  std::normal_distribution<double> noise(0.0, std::sqrt(sigma2));

  // Mean response chosen inside colspace(rw), which kills the j-block bias.
  VectorXd mean_zero_bias = rw * oracle::gaussian_vec(rng, 8);
  // A generic mean response for the biased cases.
  VectorXd mean_generic = 0.7 * oracle::gaussian_vec(rng, 6);

  for (const VectorXd* mean : {&mean_zero_bias, &mean_generic}) {
    double expect_j =
        sigma2 + (resid_proj * *mean).squaredNorm() /
                     (6.0 - (rw.completeOrthogonalDecomposition().rank()));
    double expect_jc =
        sigma2 + (perp_k * (w_pinv * *mean)).squaredNorm() /
                     ((perp_k * (split.w.transpose() * split.w)
                                    .completeOrthogonalDecomposition()
                                    .pseudoInverse())
                          .trace());
    double sum_j = 0, sq_j = 0, sum_jc = 0, sq_jc = 0;
    for (int r = 0; r < reps; ++r) {
      VectorXd y = *mean;
      for (Eigen::Index i = 0; i < 6; ++i) y(i) += noise(rng);
      PartialVariance pv = partial_variance_estimators(wide, y, split);
      sum_j += pv.sigma2_j;
      sq_j += pv.sigma2_j * pv.sigma2_j;
      sum_jc += pv.sigma2_jc;
      sq_jc += pv.sigma2_jc * pv.sigma2_jc;
    }
    double mean_j = sum_j / reps;
    double se_j = std::sqrt((sq_j / reps - mean_j * mean_j) / reps);
    CHECK(std::abs(mean_j - expect_j) <= 3.0 * se_j);
    double mean_jc = sum_jc / reps;
    double se_jc = std::sqrt((sq_jc / reps - mean_jc * mean_jc) / reps);
    CHECK(std::abs(mean_jc - expect_jc) <= 3.0 * se_jc);
    // Conservative on average.
    CHECK(mean_j >= sigma2 - 3.0 * se_j);
    CHECK(mean_jc >= sigma2 - 3.0 * se_jc);
  }
}

TEST_CASE("residualized solves survive a low-dimensional complement") {
  // The product of the complement projector with W has exact rank
  // n - |jc|, but carries rounding noise near the rank cutoff. Many random
  // instances with a 2-dimensional complement would expose a misdetected
  // rank as an O(1) error against the stationarity-system oracle.
  std::mt19937_64 rng(8391);
  for (int t = 0; t < 60; ++t) {
    Design d = make_design(oracle::gaussian(rng, 6, 12));
    VectorXd y = oracle::gaussian_vec(rng, 6);
    ColSplit split = make_col_split(d, range_set(0, 8));
    REQUIRE(split.b2_satisfied);
    PartialRegResult pr = partial_regularized(d, y, split);
    auto [bj, bjc] = oracle::kkt_partial(split.w, split.t, y);
    CHECK((pr.beta_j - bj).norm() <= 1e-9 * std::max(1.0, bj.norm()));
    CHECK((pr.beta_jc - bjc).norm() <= 1e-9 * std::max(1.0, bjc.norm()));
    MatrixIdentityReport rep = fwl_matrix_identity_check(split);
    CHECK(rep.holds);
    PartialVariance pv = partial_variance_estimators(d, y, split);
    // rank(perp(T) W) = n - |jc| = 2, so the count must be 6 - 2
    CHECK(pv.denom_j == 4.0);
  }
}

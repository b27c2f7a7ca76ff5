#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "minnorm/errors.hpp"
#include "minnorm/estimator.hpp"
#include "minnorm/inference.hpp"

namespace minnorm {

enum class CovariateKind { StandardNormal, Spiked, Geometric };

// Spiked: rows of an orthonormal frame pushed through
// Sigma^{1/2}, Sigma = sigma_x2 * (I + sum_l lambda_l v_l v_l^T) with
// lambda_l ~ U[spike_lo, spike_hi] and v_l uniform on the sphere.
// Geometric: Sigma = lambda^2 * diag(rho^l), l = 1..p, conjugated by a
// random rotation.
struct CovariateModel {
  CovariateKind kind = CovariateKind::StandardNormal;
  double sigma_x2 = 1.0;
  int spikes = 10;
  double spike_lo = 10.0;
  double spike_hi = 20.0;
  double lambda = 1.0;
  double rho = 0.95;
};

enum class BetaRule { UniformUnit };
enum class NoiseKind { Gaussian, Uniform01 };

struct SimConfig {
  CovariateModel model;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  double sigma = 1.0;
  BetaRule beta_rule = BetaRule::UniformUnit;
  int trials = 100;
  int reps_per_trial = 100;
  std::uint64_t seed = 0;
  NoiseKind noise = NoiseKind::Gaussian;
};

struct SweepPoint {
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  double sigma = 1.0;
};

struct RepRecord {
  int trial = 0;
  int rep = 0;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  double sigma = 0.0;
  double estimate = 0.0;
  double bias = 0.0;
  int covered = -1;  // 1/0 for coverage runs, -1 otherwise
  double length = std::numeric_limits<double>::quiet_NaN();
};

struct SimReport {
  SimConfig config;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  double sigma = 0.0;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::uint64_t> trial_seed;
  std::vector<double> trial_bias;
  double mean_bias = 0.0;
  double se_bias = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double mean_length = std::numeric_limits<double>::quiet_NaN();
  long redraws = 0;
  std::vector<RepRecord> records;
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic stream keyed by (seed, a, b). The mixing makes nearby keys
// produce unrelated engine states; the draw functions avoid any cached
// state so a stream's output depends only on its key and call sequence.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
      : engine_(mixed_seed(seed, a, b)) {}

  static std::uint64_t mixed_seed(std::uint64_t seed, std::uint64_t a,
                                  std::uint64_t b) {
    std::uint64_t s = detail::mix64(seed + 0x9e3779b97f4a7c15ULL);
    s = detail::mix64(s ^ (a + 0xbf58476d1ce4e5b9ULL));
    s = detail::mix64(s ^ (b + 0x94d049bb133111ebULL));
    return s;
  }

  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller, cosine branch only: two uniforms per call, nothing cached.
  double normal() {
    double u = uniform01();
    while (u == 0.0) u = uniform01();
    double v = uniform01();
    return std::sqrt(-2.0 * std::log(u)) *
           std::cos(2.0 * std::numbers::pi * v);
  }

 private:
  std::mt19937_64 engine_;
};

inline void validate_model(const CovariateModel& m) {
  switch (m.kind) {
    case CovariateKind::StandardNormal:
      return;
    case CovariateKind::Spiked:
      if (!(m.sigma_x2 > 0.0)) throw InvalidInput("sigma_x2 must be positive");
      if (m.spikes < 0) throw InvalidInput("spike count must be nonnegative");
      if (!(m.spike_lo >= 0.0) || !(m.spike_hi >= m.spike_lo)) {
        throw InvalidInput("spike range must satisfy 0 <= lo <= hi");
      }
      return;
    case CovariateKind::Geometric:
      if (!(m.lambda > 0.0)) throw InvalidInput("lambda must be positive");
      if (!(m.rho > 0.0) || !(m.rho < 1.0)) {
        throw InvalidInput("rho must lie in (0,1)");
      }
      return;
  }
  throw InvalidInput("unknown covariate model");
}

namespace detail {

// Q factor of a Gaussian matrix with the R-diagonal sign fix, so the frame
// is Haar-distributed. cols <= rows required.
inline Eigen::MatrixXd haar_frame(Eigen::Index rows, Eigen::Index cols,
                                  RngStream& rng) {
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

inline Eigen::VectorXd sphere_point(Eigen::Index p, RngStream& rng) {
  Eigen::VectorXd v(p);
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < p; ++i) v(i) = rng.normal();
    norm = v.norm();
  } while (norm == 0.0);
  return v / norm;
}

// Trial-level covariate source. Construction consumes the draws that fix
// the population covariance (spike weights and directions, or the
// rotation); rows() and test_row() then sample from that population.
class CovariateSampler {
 public:
  CovariateSampler(const CovariateModel& model, Eigen::Index p,
                   RngStream& rng)
      : model_(model), p_(p) {
    validate_model(model);
    if (p <= 0) throw InvalidInput("dimension must be positive");
    switch (model.kind) {
      case CovariateKind::StandardNormal:
        break;
      case CovariateKind::Spiked: {
        const int k = model.spikes;
        if (k > p) throw InvalidInput("more spikes than dimensions");
        Eigen::VectorXd lam(k);
        for (int l = 0; l < k; ++l) {
          lam(l) = rng.uniform(model.spike_lo, model.spike_hi);
        }
        Eigen::MatrixXd dirs(p, k);
        for (int l = 0; l < k; ++l) dirs.col(l) = sphere_point(p, rng);
        if (k > 0) {
          // Orthogonalize the (generally oblique) spike directions:
          // sum lam_l v_l v_l^T = B diag(d) B^T with B orthonormal, after
          // which Sigma^{1/2} = sigma_x (I + B (sqrt(1+d)-1) B^T).
          Eigen::HouseholderQR<Eigen::MatrixXd> qr(dirs);
          Eigen::MatrixXd q =
              qr.householderQ() * Eigen::MatrixXd::Identity(p, k);
          Eigen::MatrixXd r = qr.matrixQR()
                                  .topRows(k)
                                  .template triangularView<Eigen::Upper>();
          Eigen::MatrixXd s = r * lam.asDiagonal() * r.transpose();
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
          spike_basis_ = q * eig.eigenvectors();
          spike_gain_ = (eig.eigenvalues().array().max(0.0) + 1.0)
                            .sqrt()
                            .matrix() -
                        Eigen::VectorXd::Ones(k);
        }
        break;
      }
      case CovariateKind::Geometric: {
        rotation_ = haar_frame(p, p, rng);
        scale_.resize(p);
        for (Eigen::Index l = 0; l < p; ++l) {
          scale_(l) =
              model.lambda * std::pow(model.rho, 0.5 * double(l + 1));
        }
        break;
      }
    }
  }

  // n x p training block. StandardNormal fills row by row; the frame
  // models draw a p x n Gaussian column by column and orthonormalize it.
  Eigen::MatrixXd rows(Eigen::Index n, RngStream& rng) const {
    if (n <= 0) throw InvalidInput("sample size must be positive");
    if (model_.kind == CovariateKind::StandardNormal) {
      Eigen::MatrixXd x(n, p_);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < p_; ++j) x(i, j) = rng.normal();
      }
      return x;
    }
    if (n > p_) {
      throw InvalidInput("orthonormal-row construction needs n <= p");
    }
    Eigen::MatrixXd u = haar_frame(p_, n, rng).transpose();
    return push_rows(u);
  }

  // One draw of the same population: a fresh unit row through Sigma^{1/2}.
  Eigen::VectorXd test_row(RngStream& rng) const {
    if (model_.kind == CovariateKind::StandardNormal) {
      Eigen::VectorXd x(p_);
      for (Eigen::Index j = 0; j < p_; ++j) x(j) = rng.normal();
      return x;
    }
    Eigen::MatrixXd u = sphere_point(p_, rng).transpose();
    return push_rows(u).transpose();
  }

 private:
  Eigen::MatrixXd push_rows(const Eigen::MatrixXd& u) const {
    if (model_.kind == CovariateKind::Spiked) {
      const double sx = std::sqrt(model_.sigma_x2);
      if (spike_basis_.cols() == 0) return sx * u;
      return sx * (u + (u * spike_basis_) * spike_gain_.asDiagonal() *
                           spike_basis_.transpose());
    }
    return (u * scale_.asDiagonal()) * rotation_.transpose();
  }

  CovariateModel model_;
  Eigen::Index p_;
  Eigen::MatrixXd spike_basis_;
  Eigen::VectorXd spike_gain_;
  Eigen::MatrixXd rotation_;
  Eigen::VectorXd scale_;
};

template <typename Fn>
inline void parallel_trials(int trials, int workers, Fn&& fn) {
  if (workers <= 1 || trials <= 1) {
    for (int t = 0; t < trials; ++t) fn(t);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (int t = next.fetch_add(1); t < trials; t = next.fetch_add(1)) {
      if (failed.load()) return;
      try {
        fn(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min(workers, trials);
  pool.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline Eigen::VectorXd beta_for(const SimConfig& config, Eigen::Index p) {
  switch (config.beta_rule) {
    case BetaRule::UniformUnit:
      return Eigen::VectorXd::Constant(p, 1.0 / std::sqrt(double(p)));
  }
  throw InvalidInput("unknown beta rule");
}

struct TrialState {
  Design design;
  Eigen::MatrixXd rescaled;  // D^{-1} (X X^T)^{-1}
  double denom = 0.0;        // squared Frobenius norm of rescaled
};

// Draws until the design has full row rank and no vanishing leverage
// denominator; each discard counts as one redraw, ten in a row aborts.
inline TrialState draw_trial_design(const CovariateSampler& sampler,
                                    Eigen::Index n, RngStream& rng,
                                    std::atomic<long>& redraws) {
  for (int attempt = 0;; ++attempt) {
    Design design = make_design(sampler.rows(n, rng));
    if (design.regime == Regime::HighDimFullRowRank) {
      Eigen::MatrixXd gram_inv = design.svd.u *
                                 design.svd.s.cwiseAbs2()
                                     .cwiseInverse()
                                     .asDiagonal() *
                                 design.svd.u.transpose();
      if (gram_inv.diagonal().minCoeff() > design.tol.div_tol) {
        TrialState state;
        state.rescaled =
            gram_inv.diagonal().cwiseInverse().asDiagonal() * gram_inv;
        state.denom = state.rescaled.squaredNorm();
        state.design = std::move(design);
        return state;
      }
    }
    if (attempt >= 10) {
      throw NumericalFailure(
          "ten consecutive degenerate covariate draws; giving up");
    }
    redraws.fetch_add(1);
  }
}

inline void append_csv_double(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace detail

// Fresh covariate draw: population parameters and the sample both come
// from the given stream (population first).
inline Eigen::MatrixXd gen_covariates(const CovariateModel& model,
                                      Eigen::Index n, Eigen::Index p,
                                      RngStream& rng) {
  detail::CovariateSampler sampler(model, p, rng);
  return sampler.rows(n, rng);
}

namespace detail {

inline void validate_sim_config(const SimConfig& config) {
  validate_model(config.model);
  if (config.trials < 1 || config.reps_per_trial < 1) {
    throw InvalidInput("trials and reps_per_trial must be at least 1");
  }
  if (!(config.sigma >= 0.0) || !std::isfinite(config.sigma)) {
    throw InvalidInput("noise level must be finite and nonnegative");
  }
}

// One sweep point. Stream keys: trial t of point k uses
// (seed, k*trials + t, 0) for the covariates and (seed, k*trials + t, r+1)
// for replication r, so results do not depend on scheduling. Each
// replication draws the noise first; coverage runs then rerun the whole
// covariate generator (fresh spikes or rotation, then a fresh unit row)
// for the test point, which is what reproduces the published interval
// lengths, unlike reusing the trial's own covariance.
inline SimReport run_point(const SimConfig& config, Eigen::Index n,
                           Eigen::Index p, double sigma,
                           std::uint64_t trial_base, double alpha,
                           int workers) {
  if (n < 1 || p < 1) throw InvalidInput("n and p must be positive");
  if (n > p) {
    throw InvalidInput("simulation points require n <= p (full row rank)");
  }
  const bool coverage_run = !std::isnan(alpha);
  const int trials = config.trials;
  const int reps = config.reps_per_trial;
  const double z = coverage_run ? invnorm(1.0 - alpha / 2.0) : 0.0;

  SimReport report;
  report.config = config;
  report.n = n;
  report.p = p;
  report.sigma = sigma;
  report.alpha = alpha;
  report.trial_seed.resize(static_cast<std::size_t>(trials));
  report.trial_bias.resize(static_cast<std::size_t>(trials));
  report.records.resize(static_cast<std::size_t>(trials) * reps);

  std::atomic<long> redraws{0};

  parallel_trials(trials, workers, [&](int t) {
    const std::uint64_t id = trial_base + static_cast<std::uint64_t>(t);
    report.trial_seed[static_cast<std::size_t>(t)] =
        RngStream::mixed_seed(config.seed, id, 0);
    RngStream trial_rng(config.seed, id, 0);
    CovariateSampler sampler(config.model, p, trial_rng);
    TrialState state = draw_trial_design(sampler, n, trial_rng, redraws);

    const Eigen::VectorXd beta = beta_for(config, p);
    const Eigen::VectorXd signal = state.design.x * beta;
    const auto& svd = state.design.svd;

    double bias_sum = 0.0;
    for (int r = 0; r < reps; ++r) {
      RngStream rep_rng(config.seed, id, static_cast<std::uint64_t>(r) + 1);
      Eigen::VectorXd y = signal;
      if (config.noise == NoiseKind::Gaussian) {
        for (Eigen::Index i = 0; i < n; ++i) y(i) += sigma * rep_rng.normal();
      } else {
        for (Eigen::Index i = 0; i < n; ++i) y(i) += rep_rng.uniform01();
      }
      const double estimate =
          (state.rescaled * y).squaredNorm() / state.denom;

      RepRecord rec;
      rec.trial = t;
      rec.rep = r;
      rec.n = n;
      rec.p = p;
      rec.sigma = sigma;
      rec.estimate = estimate;
      rec.bias = estimate - sigma * sigma;
      bias_sum += rec.bias;

      if (coverage_run) {
        CovariateSampler test_sampler(config.model, p, rep_rng);
        Eigen::VectorXd x_new = test_sampler.test_row(rep_rng);
        Eigen::VectorXd vx = svd.v.transpose() * x_new;
        Eigen::VectorXd uy = svd.u.transpose() * y;
        const double y_hat =
            vx.cwiseQuotient(svd.s).dot(uy);
        const double quad = vx.cwiseQuotient(svd.s).squaredNorm();
        const double half = z * std::sqrt(estimate * quad);
        const double target = x_new.dot(beta);
        rec.covered = std::abs(y_hat - target) <= half ? 1 : 0;
        rec.length = 2.0 * half;
      }
      report.records[static_cast<std::size_t>(t) * reps + r] = rec;
    }
    report.trial_bias[static_cast<std::size_t>(t)] = bias_sum / reps;
  });

  report.redraws = redraws.load();

  double mean = 0.0;
  for (double b : report.trial_bias) mean += b;
  mean /= trials;
  report.mean_bias = mean;
  if (trials > 1) {
    double ss = 0.0;
    for (double b : report.trial_bias) ss += (b - mean) * (b - mean);
    report.se_bias = std::sqrt(ss / (trials - 1)) / std::sqrt(double(trials));
  }

  if (coverage_run) {
    double hits = 0.0, total_length = 0.0;
    for (const RepRecord& rec : report.records) {
      hits += rec.covered;
      total_length += rec.length;
    }
    const double count = double(report.records.size());
    report.coverage = hits / count;
    report.mean_length = total_length / count;
  }
  return report;
}

}  // namespace detail

// Bias experiment: per point, `trials` covariate draws with
// `reps_per_trial` noise draws each; reports per-trial mean bias of the
// noise-variance estimate. An empty sweep runs the config's own point.
inline std::vector<SimReport> run_bias_sim(const SimConfig& config,
                                           std::vector<SweepPoint> sweep,
                                           int workers = 1) {
  detail::validate_sim_config(config);
  if (sweep.empty()) sweep.push_back({config.n, config.p, config.sigma});
  std::vector<SimReport> reports;
  reports.reserve(sweep.size());
  const double no_alpha = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    reports.push_back(detail::run_point(
        config, sweep[k].n, sweep[k].p, sweep[k].sigma,
        k * static_cast<std::uint64_t>(config.trials), no_alpha, workers));
  }
  return reports;
}

// Coverage experiment at the config's point: each replication adds a test
// covariate from the trial's population and checks whether the two-sided
// normal interval captures the expected test response.
inline SimReport run_coverage_sim(const SimConfig& config, double alpha,
                                  int workers = 1) {
  detail::validate_sim_config(config);
  if (!(alpha > 0.0) || !(alpha < 1.0)) {
    throw InvalidInput("alpha must lie in (0,1)");
  }
  return detail::run_point(config, config.n, config.p, config.sigma, 0,
                           alpha, workers);
}

// Per-replication table; the coverage columns stay empty for bias runs.
inline void write_records_csv(std::ostream& os,
                              const std::vector<RepRecord>& records) {
  std::string out = "trial,rep,n,p,sigma,estimate,bias,covered,length\n";
  for (const RepRecord& r : records) {
    out += std::to_string(r.trial);
    out += ',';
    out += std::to_string(r.rep);
    out += ',';
    out += std::to_string(r.n);
    out += ',';
    out += std::to_string(r.p);
    out += ',';
    detail::append_csv_double(out, r.sigma);
    out += ',';
    detail::append_csv_double(out, r.estimate);
    out += ',';
    detail::append_csv_double(out, r.bias);
    out += ',';
    if (r.covered >= 0) {
      out += std::to_string(r.covered);
      out += ',';
      detail::append_csv_double(out, r.length);
    } else {
      out += ',';
    }
    out += '\n';
  }
  os << out;
}

}  // namespace minnorm

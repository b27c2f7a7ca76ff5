#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "minnorm/colops.hpp"
#include "minnorm/inference.hpp"
#include "minnorm/rowops.hpp"
#include "minnorm/simlab.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

struct Shared {
  bool header = false;
  std::string out = "-";
  std::string format = "json";
  double rel_rank_tol = 0.0;  // 0 = keep default
  double div_tol = 0.0;
};

double parse_number(std::string_view text, const std::string& what) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw minnorm::InvalidInput(what + ": cannot parse '" + std::string(text) +
                                "' as a number");
  }
  return v;
}

minnorm::Tolerance effective_tol(const Shared& g) {
  minnorm::Tolerance t;
  if (const char* v = std::getenv("REL_RANK_TOL"); v != nullptr && *v != 0) {
    t.rel_rank_tol = parse_number(v, "REL_RANK_TOL");
  }
  if (const char* v = std::getenv("DIV_TOL"); v != nullptr && *v != 0) {
    t.div_tol = parse_number(v, "DIV_TOL");
  }
  if (g.rel_rank_tol > 0.0) t.rel_rank_tol = g.rel_rank_tol;
  if (g.div_tol > 0.0) t.div_tol = g.div_tol;
  if (!(t.rel_rank_tol > 0.0) || !(t.div_tol > 0.0)) {
    throw minnorm::InvalidInput("tolerance overrides must be positive");
  }
  return t;
}

std::string_view trimmed(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  return s;
}

MatrixXd read_csv_matrix(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw minnorm::InvalidInput("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trimmed(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::vector<double> row;
    std::size_t start = 0;
    std::size_t col = 0;
    for (;;) {
      std::size_t comma = line.find(',', start);
      std::size_t stop = comma == std::string::npos ? line.size() : comma;
      std::string_view field =
          trimmed(std::string_view(line).substr(start, stop - start));
      ++col;
      const std::string where =
          path + " line " + std::to_string(line_no) + " column " +
          std::to_string(col);
      if (field.empty()) {
        throw minnorm::InvalidInput(where + ": empty field");
      }
      double v = parse_number(field, where);
      if (!std::isfinite(v)) {
        throw minnorm::InvalidInput(where + ": non-finite value '" +
                                    std::string(field) + "'");
      }
      row.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw minnorm::InvalidInput(
          path + " line " + std::to_string(line_no) + ": ragged row with " +
          std::to_string(row.size()) + " fields, expected " +
          std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw minnorm::InvalidInput(path + ": no data rows");
  MatrixXd m(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return m;
}

VectorXd read_csv_vector(const std::string& path, bool has_header) {
  MatrixXd m = read_csv_matrix(path, has_header);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw minnorm::InvalidInput(path + ": expected a single row or column, got " +
                              std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()));
}

// 1-based sets like "1,3,5-9"; returned 0-based, unsorted duplicates allowed
// (the library sorts and dedups).
std::vector<Eigen::Index> parse_index_set(const std::string& text) {
  std::vector<Eigen::Index> out;
  auto parse_one = [&](std::string_view tok) -> long {
    tok = trimmed(tok);
    long v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || v < 1) {
      throw minnorm::InvalidInput("bad index '" + std::string(tok) +
                                  "' (indices are 1-based integers)");
    }
    return v;
  };
  std::string_view rest = text;
  while (!rest.empty()) {
    std::size_t comma = rest.find(',');
    std::string_view tok = trimmed(rest.substr(0, comma));
    if (tok.empty()) throw minnorm::InvalidInput("empty entry in index set");
    std::size_t dash = tok.find('-');
    if (dash != std::string_view::npos) {
      long lo = parse_one(tok.substr(0, dash));
      long hi = parse_one(tok.substr(dash + 1));
      if (lo > hi) {
        throw minnorm::InvalidInput("descending range in index set: '" +
                                    std::string(tok) + "'");
      }
      for (long v = lo; v <= hi; ++v) out.push_back(v - 1);
    } else {
      out.push_back(parse_one(tok) - 1);
    }
    if (comma == std::string::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (out.empty()) throw minnorm::InvalidInput("empty index set");
  return out;
}

json vec_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json mat_json(const MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

void flatten_csv(const json& j, const std::string& prefix, std::string& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten_csv(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(),
                  out);
    }
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      flatten_csv(j[i], prefix + "[" + std::to_string(i) + "]", out);
    }
  } else {
    out += prefix;
    out += ',';
    if (j.is_string()) {
      out += j.get<std::string>();
    } else {
      out += j.dump();
    }
    out += '\n';
  }
}

void emit_result(const Shared& g, const json& j) {
  std::string text;
  if (g.format == "csv") {
    text = "field,value\n";
    flatten_csv(j, "", text);
  } else {
    text = j.dump(2);
    text += '\n';
  }
  if (g.out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(g.out);
  if (!f) throw minnorm::InvalidInput("cannot open output file '" + g.out + "'");
  f << text;
}

struct XyOpts {
  std::string x_path;
  std::string y_path;
  long y_col = 0;
};

void add_xy_options(CLI::App* cmd, XyOpts& o) {
  cmd->add_option("--x", o.x_path, "design matrix CSV")->required();
  auto* y = cmd->add_option("--y", o.y_path, "response vector CSV");
  cmd->add_option("--y-col", o.y_col,
                  "1-based column of --x to use as the response "
                  "(remaining columns form the design)")
      ->excludes(y);
}

std::pair<MatrixXd, VectorXd> load_xy(const XyOpts& o, bool header) {
  MatrixXd m = read_csv_matrix(o.x_path, header);
  if (o.y_col > 0) {
    if (o.y_col > m.cols()) {
      throw minnorm::InvalidInput("--y-col " + std::to_string(o.y_col) +
                                  " out of range for " +
                                  std::to_string(m.cols()) + " columns");
    }
    if (m.cols() < 2) {
      throw minnorm::InvalidInput("no covariate columns left after --y-col");
    }
    VectorXd y = m.col(o.y_col - 1);
    MatrixXd x(m.rows(), m.cols() - 1);
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j != o.y_col - 1) x.col(c++) = m.col(j);
    }
    return {std::move(x), std::move(y)};
  }
  if (o.y_path.empty()) {
    throw minnorm::InvalidInput("a response is required: --y or --y-col");
  }
  return {std::move(m), read_csv_vector(o.y_path, header)};
}

const char* method_name(minnorm::IntervalMethod m) {
  switch (m) {
    case minnorm::IntervalMethod::ZHomoskedastic: return "z-homoskedastic";
    case minnorm::IntervalMethod::Jackknife: return "jackknife";
    case minnorm::IntervalMethod::JackknifePlus: return "jackknife+";
  }
  return "unknown";
}

json interval_json(const minnorm::PredictionInterval& pi) {
  return json{{"lower", pi.lower},
              {"upper", pi.upper},
              {"alpha", pi.alpha},
              {"method", method_name(pi.method)}};
}

json optional_vec(const VectorXd& v, bool available) {
  if (!available) return nullptr;
  return vec_json(v);
}

// ---- simulate ----

struct SimOpts {
  std::string model = "standard-normal";
  long n = 0;
  long p = 0;
  double sigma = 1.0;
  long trials = 100;
  long reps = 100;
  std::uint64_t seed = 0;
  std::string noise = "gaussian";
  double sigma_x2 = 1.0;
  long spikes = 10;
  double spike_lo = 10.0;
  double spike_hi = 20.0;
  double lambda = 1.0;
  double rho = 0.95;
  long workers = 0;
  std::vector<long> n_list;
  std::vector<double> sigma_list;
  double alpha = 0.1;
};

void add_sim_options(CLI::App* cmd, SimOpts& o) {
  cmd->add_option("--model", o.model, "covariate model")
      ->check(CLI::IsMember({"standard-normal", "spiked", "geometric"}));
  cmd->add_option("--n", o.n, "sample size")->required();
  cmd->add_option("--p", o.p, "covariate dimension")->required();
  cmd->add_option("--sigma", o.sigma, "noise standard deviation");
  cmd->add_option("--trials", o.trials, "independent covariate draws");
  cmd->add_option("--reps", o.reps, "noise replications per trial");
  cmd->add_option("--seed", o.seed, "stream seed");
  cmd->add_option("--noise", o.noise, "noise law")
      ->check(CLI::IsMember({"gaussian", "uniform01"}));
  cmd->add_option("--sigma-x2", o.sigma_x2, "spiked: isotropic scale");
  cmd->add_option("--spikes", o.spikes, "spiked: number of spikes");
  cmd->add_option("--spike-lo", o.spike_lo, "spiked: spike weight lower bound");
  cmd->add_option("--spike-hi", o.spike_hi, "spiked: spike weight upper bound");
  cmd->add_option("--lambda", o.lambda, "geometric: overall scale");
  cmd->add_option("--rho", o.rho, "geometric: decay rate in (0,1)");
  cmd->add_option("--workers", o.workers,
                  "worker threads (0 = hardware concurrency); never affects "
                  "the results");
}

minnorm::SimConfig make_sim_config(const SimOpts& o) {
  minnorm::SimConfig c;
  if (o.model == "spiked") {
    c.model.kind = minnorm::CovariateKind::Spiked;
  } else if (o.model == "geometric") {
    c.model.kind = minnorm::CovariateKind::Geometric;
  } else {
    c.model.kind = minnorm::CovariateKind::StandardNormal;
  }
  c.model.sigma_x2 = o.sigma_x2;
  c.model.spikes = static_cast<int>(o.spikes);
  c.model.spike_lo = o.spike_lo;
  c.model.spike_hi = o.spike_hi;
  c.model.lambda = o.lambda;
  c.model.rho = o.rho;
  c.n = o.n;
  c.p = o.p;
  c.sigma = o.sigma;
  c.trials = static_cast<int>(o.trials);
  c.reps_per_trial = static_cast<int>(o.reps);
  c.seed = o.seed;
  c.noise = o.noise == "uniform01" ? minnorm::NoiseKind::Uniform01
                                   : minnorm::NoiseKind::Gaussian;
  return c;
}

int resolve_workers(long requested) {
  if (requested > 0) return static_cast<int>(requested);
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

json model_echo(const minnorm::CovariateModel& m) {
  switch (m.kind) {
    case minnorm::CovariateKind::Spiked:
      return json{{"kind", "spiked"},
                  {"sigma_x2", m.sigma_x2},
                  {"spikes", m.spikes},
                  {"spike_lo", m.spike_lo},
                  {"spike_hi", m.spike_hi}};
    case minnorm::CovariateKind::Geometric:
      return json{{"kind", "geometric"}, {"lambda", m.lambda}, {"rho", m.rho}};
    default:
      return json{{"kind", "standard-normal"}};
  }
}

json point_json(const minnorm::SimReport& rep, bool coverage) {
  json j{{"n", rep.n},
         {"p", rep.p},
         {"sigma", rep.sigma},
         {"mean_bias", rep.mean_bias},
         {"se_bias", rep.se_bias},
         {"redraws", rep.redraws},
         {"trial_seed", rep.trial_seed}};
  if (coverage) {
    j["alpha"] = rep.alpha;
    j["coverage"] = rep.coverage;
    j["mean_length"] = rep.mean_length;
  }
  return j;
}

// Writes PREFIX.csv (per-replication records) and PREFIX.json (aggregates).
// The worker count is deliberately not echoed: outputs are identical for
// any --workers value.
void write_sim_outputs(const Shared& g, const json& aggregate,
                       const std::vector<minnorm::RepRecord>& records) {
  const std::string prefix = g.out == "-" ? "sim" : g.out;
  {
    std::ofstream csv(prefix + ".csv");
    if (!csv) {
      throw minnorm::InvalidInput("cannot open output file '" + prefix +
                                  ".csv'");
    }
    minnorm::write_records_csv(csv, records);
  }
  std::ofstream js(prefix + ".json");
  if (!js) {
    throw minnorm::InvalidInput("cannot open output file '" + prefix +
                                ".json'");
  }
  js << aggregate.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Minimum-norm least squares: fits, leave-one-out shortcuts, "
      "prediction intervals, and simulation experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  Shared g;
  app.add_flag("--header", g.header, "input CSV files start with a header row");
  app.add_option("--out", g.out,
                 "output path ('-' = stdout); used as a file prefix by "
                 "simulate");
  app.add_option("--format", g.format, "output format for results")
      ->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--rel-rank-tol", g.rel_rank_tol,
                 "relative singular-value cutoff (env REL_RANK_TOL)");
  app.add_option("--div-tol", g.div_tol,
                 "smallest trusted divisor (env DIV_TOL)");

  // fit
  auto* fit_cmd = app.add_subcommand(
      "fit", "minimum-norm least squares coefficients");
  XyOpts fit_xy;
  std::string fit_gls_path;
  add_xy_options(fit_cmd, fit_xy);
  fit_cmd->add_option("--gls", fit_gls_path,
                      "noise covariance CSV; whitens before fitting");
  fit_cmd->callback([&] {
    auto [x, y] = load_xy(fit_xy, g.header);
    minnorm::Design d = minnorm::make_design(std::move(x), effective_tol(g));
    minnorm::FitResult f =
        fit_gls_path.empty()
            ? minnorm::fit(d, y)
            : minnorm::fit_gls(d, y, read_csv_matrix(fit_gls_path, g.header));
    emit_result(g, json{{"regime", minnorm::regime_name(f.design.regime)},
                        {"n", f.design.n},
                        {"p", f.design.p},
                        {"rank", f.design.rank},
                        {"beta", vec_json(f.beta_hat)},
                        {"fitted", vec_json(f.fitted)},
                        {"residuals", vec_json(f.residuals)}});
  });

  // loo
  auto* loo_cmd = app.add_subcommand(
      "loo", "leave-one-out residuals without refitting");
  XyOpts loo_xy;
  add_xy_options(loo_cmd, loo_xy);
  loo_cmd->callback([&] {
    auto [x, y] = load_xy(loo_xy, g.header);
    minnorm::LooResult r = minnorm::loo_residuals(
        minnorm::make_design(std::move(x), effective_tol(g)), y);
    emit_result(g, json{{"loo_residuals", vec_json(r.loo_residuals)},
                        {"press", r.press}});
  });

  // press
  auto* press_cmd = app.add_subcommand(
      "press", "predicted residual sum of squares");
  XyOpts press_xy;
  add_xy_options(press_cmd, press_xy);
  press_cmd->callback([&] {
    auto [x, y] = load_xy(press_xy, g.header);
    minnorm::LooResult r = minnorm::loo_residuals(
        minnorm::make_design(std::move(x), effective_tol(g)), y);
    emit_result(g, json{{"press", r.press}});
  });

  // update
  auto* update_cmd = app.add_subcommand(
      "update", "append one observation and refit");
  XyOpts update_xy;
  std::string update_row_path;
  double update_y_new = 0.0;
  add_xy_options(update_cmd, update_xy);
  update_cmd->add_option("--x-new", update_row_path, "new covariate row CSV")
      ->required();
  update_cmd->add_option("--y-new", update_y_new, "new response value")
      ->required();
  update_cmd->callback([&] {
    auto [x, y] = load_xy(update_xy, g.header);
    minnorm::Design d = minnorm::make_design(std::move(x), effective_tol(g));
    minnorm::FitResult prev = minnorm::fit(d, y);
    minnorm::FitResult upd = minnorm::online_update(
        prev, read_csv_vector(update_row_path, g.header), update_y_new);
    emit_result(g, json{{"regime", minnorm::regime_name(upd.design.regime)},
                        {"n", upd.design.n},
                        {"p", upd.design.p},
                        {"rank", upd.design.rank},
                        {"beta", vec_json(upd.beta_hat)}});
  });

  // jackknife
  auto* jack_cmd = app.add_subcommand(
      "jackknife", "jackknife coefficients and robust covariance");
  XyOpts jack_xy;
  add_xy_options(jack_cmd, jack_xy);
  jack_cmd->callback([&] {
    auto [x, y] = load_xy(jack_xy, g.header);
    minnorm::JackknifeResult r = minnorm::jackknife(
        minnorm::make_design(std::move(x), effective_tol(g)), y);
    emit_result(g, json{{"beta_jack", vec_json(r.beta_jack)},
                        {"v_jack", mat_json(r.v_jack)}});
  });

  // interval commands share their options
  XyOpts jki_xy, jkp_xy, ci_xy;
  std::string jki_row, jkp_row, ci_row;
  double jki_alpha = 0.0, jkp_alpha = 0.0, ci_alpha = 0.0;
  auto add_interval_options = [&](CLI::App* cmd, XyOpts& xy, std::string& row,
                                  double& alpha) {
    add_xy_options(cmd, xy);
    cmd->add_option("--x-new", row, "test covariate CSV")->required();
    cmd->add_option("--alpha", alpha, "miscoverage level in (0,1)")
        ->required();
  };

  auto* jki_cmd = app.add_subcommand(
      "jk-interval", "jackknife prediction interval");
  add_interval_options(jki_cmd, jki_xy, jki_row, jki_alpha);
  jki_cmd->callback([&] {
    auto [x, y] = load_xy(jki_xy, g.header);
    emit_result(g, interval_json(minnorm::jackknife_interval(
                       minnorm::make_design(std::move(x), effective_tol(g)), y,
                       read_csv_vector(jki_row, g.header), jki_alpha)));
  });

  auto* jkp_cmd = app.add_subcommand(
      "jkplus-interval", "jackknife+ prediction interval");
  add_interval_options(jkp_cmd, jkp_xy, jkp_row, jkp_alpha);
  jkp_cmd->callback([&] {
    auto [x, y] = load_xy(jkp_xy, g.header);
    emit_result(g, interval_json(minnorm::jackknife_plus_interval(
                       minnorm::make_design(std::move(x), effective_tol(g)), y,
                       read_csv_vector(jkp_row, g.header), jkp_alpha)));
  });

  auto* ci_cmd = app.add_subcommand(
      "ci", "normal-quantile prediction interval from the variance estimate");
  add_interval_options(ci_cmd, ci_xy, ci_row, ci_alpha);
  ci_cmd->callback([&] {
    auto [x, y] = load_xy(ci_xy, g.header);
    emit_result(g, interval_json(minnorm::prediction_ci(
                       minnorm::make_design(std::move(x), effective_tol(g)), y,
                       read_csv_vector(ci_row, g.header), ci_alpha)));
  });

  // cochran
  auto* cochran_cmd = app.add_subcommand(
      "cochran", "short regression = long regression + channeled omitted "
                 "effect");
  XyOpts cochran_xy;
  std::string cochran_j;
  add_xy_options(cochran_cmd, cochran_xy);
  cochran_cmd->add_option("--j", cochran_j, "kept columns, 1-based ('1,3,5-9')")
      ->required();
  cochran_cmd->callback([&] {
    auto [x, y] = load_xy(cochran_xy, g.header);
    minnorm::Design d = minnorm::make_design(std::move(x), effective_tol(g));
    minnorm::ColSplit split =
        minnorm::make_col_split(d, parse_index_set(cochran_j));
    minnorm::CochranReport r = minnorm::cochran(d, y, split);
    emit_result(g, json{{"b2_satisfied", split.b2_satisfied},
                        {"alpha_hat", vec_json(r.triple.alpha_hat)},
                        {"beta_hat", vec_json(r.triple.beta_hat)},
                        {"delta_hat", mat_json(r.triple.delta_hat)},
                        {"direct_term", vec_json(r.direct_term)},
                        {"bias_term", vec_json(r.bias_term)},
                        {"identity_gap", r.identity_gap}});
  });

  // fwl
  auto* fwl_cmd = app.add_subcommand(
      "fwl", "block coefficients of the partially regularized interpolator");
  XyOpts fwl_xy;
  std::string fwl_j;
  add_xy_options(fwl_cmd, fwl_xy);
  fwl_cmd->add_option("--j", fwl_j, "penalized columns, 1-based ('1,3,5-9')")
      ->required();
  fwl_cmd->callback([&] {
    auto [x, y] = load_xy(fwl_xy, g.header);
    minnorm::Design d = minnorm::make_design(std::move(x), effective_tol(g));
    minnorm::ColSplit split = minnorm::make_col_split(d, parse_index_set(fwl_j));
    minnorm::PartialRegResult r = minnorm::partial_regularized(d, y, split);
    emit_result(g, json{{"b2_satisfied", split.b2_satisfied},
                        {"beta_j", optional_vec(r.beta_j, r.beta_j_available)},
                        {"beta_j_available", r.beta_j_available},
                        {"beta_jc",
                         optional_vec(r.beta_jc, r.beta_jc_available)},
                        {"beta_jc_available", r.beta_jc_available}});
  });

  // ate
  auto* ate_cmd = app.add_subcommand(
      "ate", "average treatment effect from a binary treatment column");
  std::string ate_x, ate_z, ate_y;
  ate_cmd->add_option("--x", ate_x, "covariate matrix CSV")->required();
  ate_cmd->add_option("--z", ate_z, "binary treatment vector CSV")->required();
  ate_cmd->add_option("--y", ate_y, "response vector CSV")->required();
  ate_cmd->callback([&] {
    double tau = minnorm::ate_estimate(read_csv_matrix(ate_x, g.header),
                                       read_csv_vector(ate_z, g.header),
                                       read_csv_vector(ate_y, g.header),
                                       effective_tol(g));
    emit_result(g, json{{"ate", tau}});
  });

  // variance
  auto* var_cmd = app.add_subcommand(
      "variance", "homoskedastic noise-variance estimate from leave-one-out "
                  "residuals; --j switches to the block estimators");
  XyOpts var_xy;
  std::string var_j;
  add_xy_options(var_cmd, var_xy);
  var_cmd->add_option("--j", var_j, "penalized columns, 1-based ('1,3,5-9')");
  var_cmd->callback([&] {
    auto [x, y] = load_xy(var_xy, g.header);
    minnorm::Design d = minnorm::make_design(std::move(x), effective_tol(g));
    if (var_j.empty()) {
      minnorm::VarianceEstimate v = minnorm::sigma2_hat(d, y);
      emit_result(g, json{{"sigma2_hat", v.sigma2_hat},
                          {"denominator", v.denominator},
                          {"regime", minnorm::regime_name(v.regime)}});
      return;
    }
    minnorm::ColSplit split = minnorm::make_col_split(d, parse_index_set(var_j));
    minnorm::PartialVariance pv =
        minnorm::partial_variance_estimators(d, y, split);
    emit_result(g,
                json{{"sigma2_j", pv.j_available ? json(pv.sigma2_j) : nullptr},
                     {"denom_j", pv.denom_j},
                     {"j_available", pv.j_available},
                     {"sigma2_jc",
                      pv.jc_available ? json(pv.sigma2_jc) : nullptr},
                     {"denom_jc", pv.denom_jc},
                     {"jc_available", pv.jc_available}});
  });

  // gm-check
  auto* gm_cmd = app.add_subcommand(
      "gm-check", "compare a competing linear unbiased estimator's covariance "
                  "against the fit");
  std::string gm_x, gm_m;
  double gm_sigma2 = 1.0;
  gm_cmd->add_option("--x", gm_x, "design matrix CSV")->required();
  gm_cmd->add_option("--m", gm_m, "competitor matrix CSV (p x n)")->required();
  gm_cmd->add_option("--sigma2", gm_sigma2, "noise variance");
  gm_cmd->callback([&] {
    minnorm::Design d =
        minnorm::make_design(read_csv_matrix(gm_x, g.header), effective_tol(g));
    minnorm::GaussMarkovReport r = minnorm::gauss_markov_compare(
        d, read_csv_matrix(gm_m, g.header), gm_sigma2);
    emit_result(g, json{{"trace_ols", r.trace_ols},
                        {"trace_competitor", r.trace_competitor},
                        {"trace_dominates", r.trace_dominates},
                        {"rowspace_gap", vec_json(r.rowspace_gap)},
                        {"rowspace_dominates", r.rowspace_dominates},
                        {"cov_gap", mat_json(r.cov_gap)},
                        {"min_eigenvalue_gap", r.min_eigenvalue_gap},
                        {"loewner_dominates", r.loewner_dominates}});
  });

  // simulate
  auto* sim_cmd = app.add_subcommand(
      "simulate", "seeded Monte Carlo experiments; writes PREFIX.csv and "
                  "PREFIX.json");
  sim_cmd->require_subcommand(1);

  SimOpts bias_opts;
  auto* bias_cmd = sim_cmd->add_subcommand(
      "bias", "bias of the noise-variance estimate over covariate draws");
  add_sim_options(bias_cmd, bias_opts);
  bias_cmd->add_option("--n-list", bias_opts.n_list,
                       "sweep of sample sizes (overrides --n)")
      ->delimiter(',');
  bias_cmd->add_option("--sigma-list", bias_opts.sigma_list,
                       "sweep of noise levels (overrides --sigma)")
      ->delimiter(',');
  bias_cmd->callback([&] {
    minnorm::SimConfig config = make_sim_config(bias_opts);
    std::vector<minnorm::SweepPoint> sweep;
    std::vector<long> ns =
        bias_opts.n_list.empty() ? std::vector<long>{bias_opts.n}
                                 : bias_opts.n_list;
    std::vector<double> sigmas = bias_opts.sigma_list.empty()
                                     ? std::vector<double>{bias_opts.sigma}
                                     : bias_opts.sigma_list;
    for (long n : ns) {
      for (double s : sigmas) sweep.push_back({n, bias_opts.p, s});
    }
    std::vector<minnorm::SimReport> reports = minnorm::run_bias_sim(
        config, sweep, resolve_workers(bias_opts.workers));
    json points = json::array();
    std::vector<minnorm::RepRecord> all;
    for (const minnorm::SimReport& rep : reports) {
      points.push_back(point_json(rep, false));
      all.insert(all.end(), rep.records.begin(), rep.records.end());
    }
    write_sim_outputs(g, json{{"command", "simulate bias"},
                              {"model", model_echo(config.model)},
                              {"trials", config.trials},
                              {"reps_per_trial", config.reps_per_trial},
                              {"seed", config.seed},
                              {"noise", bias_opts.noise},
                              {"points", points}},
                      all);
  });

  SimOpts cov_opts;
  auto* cov_cmd = sim_cmd->add_subcommand(
      "coverage", "prediction-interval coverage at a nominal level");
  add_sim_options(cov_cmd, cov_opts);
  cov_cmd->add_option("--alpha", cov_opts.alpha, "miscoverage level in (0,1)");
  cov_cmd->callback([&] {
    minnorm::SimConfig config = make_sim_config(cov_opts);
    minnorm::SimReport rep = minnorm::run_coverage_sim(
        config, cov_opts.alpha, resolve_workers(cov_opts.workers));
    write_sim_outputs(g, json{{"command", "simulate coverage"},
                              {"model", model_echo(config.model)},
                              {"trials", config.trials},
                              {"reps_per_trial", config.reps_per_trial},
                              {"seed", config.seed},
                              {"noise", cov_opts.noise},
                              {"point", point_json(rep, true)}},
                      rep.records);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const minnorm::Error& e) {
    switch (e.kind()) {
      case minnorm::ErrorKind::Input:
        std::cerr << "error (input): " << e.what() << '\n';
        return 2;
      case minnorm::ErrorKind::Assumption:
        // Name the structural assumptions so scripts can tell which class
        // of failure occurred: A1 = full column rank, B1 = full row rank,
        // B2 = the column-split rank condition.
        std::cerr << "error (assumption A1/B1/B2): " << e.what() << '\n';
        return 3;
      case minnorm::ErrorKind::Numerical:
        std::cerr << "error (numerical): " << e.what() << '\n';
        return 4;
    }
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

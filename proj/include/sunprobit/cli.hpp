#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "csv.hpp"
#include "errors.hpp"
#include "matrix.hpp"
#include "mcmc.hpp"
#include "normal.hpp"
#include "probit.hpp"
#include "sun.hpp"
#include "version.hpp"

// Command line front end. Reports are JSON with insertion-ordered keys and
// contain no wall-clock fields outside `bench`, so a rerun with the same
// inputs and seed produces byte-identical output.

namespace sunprobit::cli {

using json = nlohmann::ordered_json;

namespace detail {

struct CommonOpts {
  std::string data_path;
  std::string response = "y";
  bool intercept = true;
  bool standardize = true;
  double prior_mean = 0.0;
  double prior_scale = 16.0;
  std::string prior_cov_path;
  std::uint64_t seed = kDefaultSeed;
  double accuracy = 1e-4;
  std::string out_path;
};

inline void add_common(CLI::App* sub, CommonOpts& o, bool require_seed) {
  sub->add_option("--data", o.data_path, "CSV file with predictors and a 0/1 response")
      ->required();
  sub->add_option("--response", o.response, "response column name (default y)");
  sub->add_flag("--intercept,!--no-intercept", o.intercept,
                "prepend an intercept column (default on)");
  sub->add_flag("--standardize,!--no-standardize", o.standardize,
                "center predictors and rescale to sd 0.5 (default on)");
  sub->add_option("--prior-mean", o.prior_mean, "prior mean, broadcast to all coefficients");
  sub->add_option("--prior-scale", o.prior_scale,
                  "prior variance v in Omega = v I (default 16)");
  sub->add_option("--prior-cov-file", o.prior_cov_path,
                  "headerless CSV with a full p x p prior covariance");
  auto* seed = sub->add_option("--seed", o.seed, "RNG seed");
  if (require_seed) seed->required();
  sub->add_option("--accuracy", o.accuracy, "target relative CDF error (default 1e-4)");
  sub->add_option("--out", o.out_path, "write the JSON report here instead of stdout");
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (sunprobit::detail::trim_cell(line).empty()) continue;
    std::vector<std::string> cells = sunprobit::detail::split_line(line);
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      try {
        std::size_t used = 0;
        row[j] = std::stod(cells[j], &used);
        if (used != cells[j].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(lineno) +
                         ": cannot parse '" + cells[j] + "' as a number");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path + ": line " + std::to_string(lineno) + " has " +
                       std::to_string(row.size()) + " fields, expected " +
                       std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": empty matrix file");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j) m(i, j) = rows[i][j];
  return m;
}

struct Prior {
  Vector xi;
  Matrix omega;
};

inline Prior build_prior(const CommonOpts& o, Eigen::Index p, bool defaulted) {
  if (defaulted)
    std::cerr << "note: no prior given, using mean 0 and covariance 16 I\n";
  Prior pr;
  pr.xi = Vector::Constant(p, o.prior_mean);
  if (!o.prior_cov_path.empty()) {
    pr.omega = read_matrix_csv(o.prior_cov_path);
    if (pr.omega.rows() != p || pr.omega.cols() != p)
      throw ConfigError("prior covariance is " + std::to_string(pr.omega.rows()) + " x " +
                        std::to_string(pr.omega.cols()) + ", design needs " +
                        std::to_string(p) + " x " + std::to_string(p));
  } else {
    if (!(o.prior_scale > 0.0)) throw ConfigError("--prior-scale must be positive");
    pr.omega = o.prior_scale * Matrix::Identity(p, p);
  }
  return pr;
}

inline FitOptions fit_options(const CommonOpts& o) {
  if (!(o.accuracy > 0.0) || o.accuracy > 0.1)
    throw ConfigError("--accuracy must lie in (0, 0.1]");
  FitOptions f;
  f.accuracy = o.accuracy;
  f.seed = o.seed;
  return f;
}

inline json vec_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json header_json(const char* command, const CommonOpts& o, const Design& d) {
  json j;
  j["version"] = version();
  j["command"] = command;
  j["data"] = o.data_path;
  j["n"] = d.data.X.rows();
  j["p"] = d.data.X.cols();
  j["columns"] = d.names;
  j["response"] = d.response_name;
  j["standardized"] = o.standardize;
  if (!d.constant_columns.empty()) j["constant_columns"] = d.constant_columns;
  j["seed"] = o.seed;
  j["accuracy"] = o.accuracy;
  return j;
}

inline void emit(const CommonOpts& o, const json& j) {
  std::string text = j.dump(2);
  text += "\n";
  if (o.out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(o.out_path);
    if (!out) throw ConfigError("cannot write " + o.out_path);
    out << text;
  }
}

inline double se_of_column(const Matrix& draws, Eigen::Index j, double denom) {
  double mean = draws.col(j).mean();
  double var = (draws.col(j).array() - mean).square().sum() /
               (static_cast<double>(draws.rows()) - 1.0);
  return std::sqrt(var / denom);
}

// fit: posterior summary with equal-tailed intervals

inline void run_fit(const CommonOpts& o, const Design& d, const Prior& prior, double level,
                    std::size_t ci_draws) {
  if (!(level > 0.0 && level <= 1.0)) throw ConfigError("--level must be in (0, 1]");
  PosteriorFit fit = fit_gaussian_prior(d.data, prior.xi, prior.omega, fit_options(o));
  double mean_rel = 0.0;
  Vector mean = posterior_mean(fit, &mean_rel);
  SunSampleBatch batch = sample_posterior(fit, ci_draws, derive_seed(o.seed, 0xc1ULL));
  Vector lo(mean.size()), hi(mean.size());
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    Interval iv = credible_interval(batch.draws, j, level);
    lo[j] = iv.lo;
    hi[j] = iv.hi;
  }
  json j = header_json("fit", o, d);
  j["posterior_mean"] = vec_json(mean);
  j["posterior_mean_rel_error"] = mean_rel;
  j["ci_level"] = level;
  j["ci_draws"] = ci_draws;
  j["ci_lo"] = vec_json(lo);
  j["ci_hi"] = vec_json(hi);
  j["log_evidence"] = fit.log_evidence;
  j["log_evidence_rel_error"] = fit.evidence_rel_error;
  emit(o, j);
}

// sample: posterior draws to CSV plus a summary report

inline void run_sample(const CommonOpts& o, const Design& d, const Prior& prior,
                       const std::string& method, std::size_t R, std::size_t burn_in,
                       const std::string& draws_path) {
  json j = header_json("sample", o, d);
  j["method"] = method;
  j["draws"] = R;
  Matrix draws;
  if (method == "exact") {
    PosteriorFit fit = fit_gaussian_prior(d.data, prior.xi, prior.omega, fit_options(o));
    SunSampleBatch batch = sample_posterior(fit, R, o.seed);
    draws = std::move(batch.draws);
    j["acceptance_rate"] = batch.acceptance_rate;
    if (batch.low_acceptance) j["low_acceptance"] = true;
    if (batch.tilt_fallback) j["tilt_fallback"] = true;
  } else if (method == "gibbs") {
    ChainSummary chain =
        gibbs_albert_chib(d.data, prior.xi, prior.omega, R, burn_in, o.seed);
    draws = std::move(chain.draws);
    j["burn_in"] = burn_in;
  } else {
    throw ConfigError("--method must be exact or gibbs");
  }
  j["ess"] = vec_json(effective_sample_size(draws));
  if (!draws_path.empty()) {
    write_draws_csv(draws_path, d.names, draws);
    j["draws_file"] = draws_path;
  }
  emit(o, j);
}

// predict: success probabilities for new rows

inline void run_predict(const CommonOpts& o, const Design& d, const Prior& prior,
                        const std::string& new_data_path) {
  if (new_data_path.empty()) throw ConfigError("predict needs --new-data");
  CsvTable table = read_csv_table(new_data_path);
  Matrix rows = design_rows(d, table);
  PosteriorFit fit = fit_gaussian_prior(d.data, prior.xi, prior.omega, fit_options(o));
  json preds = json::array();
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Prediction pr = predict_prob(fit, Vector(rows.row(i).transpose()), 1);
    json one;
    one["row"] = i;
    one["prob"] = pr.prob;
    one["rel_error"] = pr.rel_error;
    if (pr.uncertain) one["uncertain"] = true;
    preds.push_back(std::move(one));
  }
  json j = header_json("predict", o, d);
  j["new_data"] = new_data_path;
  j["predictions"] = std::move(preds);
  emit(o, j);
}

// evidence: marginal likelihood of the data under the prior

inline void run_evidence(const CommonOpts& o, const Design& d, const Prior& prior) {
  PosteriorFit fit = fit_gaussian_prior(d.data, prior.xi, prior.omega, fit_options(o));
  json j = header_json("evidence", o, d);
  j["log_evidence"] = fit.log_evidence;
  j["rel_error"] = fit.evidence_rel_error;
  emit(o, j);
}

// select: posterior probabilities over a model list

inline void run_select(const CommonOpts& o, const Design& d, const std::string& models_path) {
  if (models_path.empty()) throw ConfigError("select needs --models-file");
  std::ifstream in(models_path);
  if (!in) throw ConfigError("cannot open " + models_path);
  json spec_json;
  try {
    in >> spec_json;
  } catch (const std::exception& e) {
    throw ParseError(models_path + ": " + e.what());
  }
  if (!spec_json.is_array() || spec_json.empty())
    throw ConfigError(models_path + ": expected a non-empty JSON array of models");

  auto column_index = [&](const json& c) -> Eigen::Index {
    if (c.is_number_integer()) return c.get<Eigen::Index>();
    if (c.is_string()) {
      const std::string name = c.get<std::string>();
      for (std::size_t k = 0; k < d.names.size(); ++k)
        if (d.names[k] == name) return static_cast<Eigen::Index>(k);
      throw ConfigError(models_path + ": unknown column '" + name + "'");
    }
    throw ConfigError(models_path + ": columns must be names or indices");
  };

  std::vector<ModelSpec> models;
  std::vector<std::string> names;
  for (const auto& m : spec_json) {
    ModelSpec spec;
    names.push_back(m.value("name", "model" + std::to_string(names.size())));
    if (!m.contains("columns") || !m["columns"].is_array() || m["columns"].empty())
      throw ConfigError(models_path + ": each model needs a non-empty columns array");
    for (const auto& c : m["columns"]) spec.columns.push_back(column_index(c));
    double scale = m.value("prior_scale", o.prior_scale);
    if (!(scale > 0.0)) throw ConfigError(models_path + ": prior_scale must be positive");
    double weight = m.value("prior_weight", 1.0);
    if (!(weight > 0.0)) throw ConfigError(models_path + ": prior_weight must be positive");
    const Eigen::Index k = static_cast<Eigen::Index>(spec.columns.size());
    spec.xi = Vector::Constant(k, m.value("prior_mean", o.prior_mean));
    spec.omega = scale * Matrix::Identity(k, k);
    spec.log_prior_weight = std::log(weight);
    models.push_back(std::move(spec));
  }

  ModelPosterior mp = model_posterior(d.data, models, fit_options(o));
  json out_models = json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    json one;
    one["name"] = names[i];
    json cols = json::array();
    for (auto c : models[i].columns) cols.push_back(d.names[static_cast<std::size_t>(c)]);
    one["columns"] = std::move(cols);
    one["log_marginal"] = mp.log_marginal[i];
    one["rel_error"] = mp.rel_error[i];
    one["probability"] = mp.probability[i];
    out_models.push_back(std::move(one));
  }
  json bf = json::array();
  for (Eigen::Index i = 0; i < mp.log_bayes_factors.rows(); ++i)
    bf.push_back(vec_json(Vector(mp.log_bayes_factors.row(i).transpose())));

  json j = header_json("select", o, d);
  j["models_file"] = models_path;
  j["models"] = std::move(out_models);
  j["log_bayes_factors"] = std::move(bf);
  emit(o, j);
}

// bench: matched-draw comparison of the exact and Gibbs samplers, the one
// report that carries timing fields

inline void run_bench(const CommonOpts& o, const Design& d, const Prior& prior, std::size_t R,
                      std::size_t burn_in, const std::string& new_data_path) {
  PosteriorFit fit = fit_gaussian_prior(d.data, prior.xi, prior.omega, fit_options(o));
  double ref_rel = 0.0;
  Vector reference = posterior_mean(fit, &ref_rel);

  SunSampleBatch exact = sample_posterior(fit, R, derive_seed(o.seed, 0xe5ac7ULL));
  ChainSummary gibbs = gibbs_albert_chib(d.data, prior.xi, prior.omega, R, burn_in,
                                         derive_seed(o.seed, 0x6b5ULL));

  const Eigen::Index p = reference.size();
  Vector ess_exact = effective_sample_size(exact.draws);
  Vector mean_exact = exact.draws.colwise().mean();
  Vector mean_gibbs = gibbs.draws.colwise().mean();
  Vector se_exact(p), se_gibbs(p), diff_exact(p), diff_gibbs(p);
  int ok_exact = 0, ok_gibbs = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    se_exact[j] = se_of_column(exact.draws, j, static_cast<double>(R));
    se_gibbs[j] = se_of_column(gibbs.draws, j, std::max(gibbs.ess[j], 1.0));
    diff_exact[j] = mean_exact[j] - reference[j];
    diff_gibbs[j] = mean_gibbs[j] - reference[j];
    if (std::abs(diff_exact[j]) <= 4.0 * se_exact[j]) ++ok_exact;
    if (std::abs(diff_gibbs[j]) <= 4.0 * se_gibbs[j]) ++ok_gibbs;
  }

  auto sampler_json = [&](const Matrix& draws, const Vector& ess, double elapsed,
                          int agree) {
    json s;
    s["draws"] = static_cast<std::size_t>(draws.rows());
    s["elapsed_sec"] = elapsed;
    s["samples_per_sec"] =
        elapsed > 0.0 ? static_cast<double>(draws.rows()) / elapsed : 0.0;
    Vector sorted = ess;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    s["ess"] = {{"min", sorted[0]},
                {"median", median_of(ess)},
                {"max", sorted[sorted.size() - 1]}};
    double med = median_of(ess);
    s["sec_per_effective_sample"] = med > 0.0 ? elapsed / med : 0.0;
    s["agree_frac"] = static_cast<double>(agree) / static_cast<double>(p);
    return s;
  };

  json j = header_json("bench", o, d);
  j["draws"] = R;
  j["burn_in"] = burn_in;
  j["reference_rel_error"] = ref_rel;
  j["exact"] = sampler_json(exact.draws, ess_exact, exact.elapsed_sec, ok_exact);
  j["gibbs"] = sampler_json(gibbs.draws, gibbs.ess, gibbs.elapsed_sec, ok_gibbs);
  j["mean_discrepancy"] = {{"exact", vec_json(diff_exact)},
                           {"gibbs", vec_json(diff_gibbs)},
                           {"se_exact", vec_json(se_exact)},
                           {"se_gibbs", vec_json(se_gibbs)}};

  // predictive check: exact formula vs each sampler's plug-in average
  Matrix rows;
  if (!new_data_path.empty()) {
    rows = design_rows(d, read_csv_table(new_data_path));
  } else {
    Eigen::Index k = std::min<Eigen::Index>(d.data.X.rows(), 24);
    rows = d.data.X.topRows(k);
  }
  json pred_ref = json::array(), pred_exact = json::array(), pred_gibbs = json::array();
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Vector x = rows.row(i).transpose();
    pred_ref.push_back(predict_prob(fit, x, 1).prob);
    double pe = 0.0, pg = 0.0;
    for (Eigen::Index r = 0; r < exact.draws.rows(); ++r)
      pe += norm_cdf(exact.draws.row(r).dot(x));
    for (Eigen::Index r = 0; r < gibbs.draws.rows(); ++r)
      pg += norm_cdf(gibbs.draws.row(r).dot(x));
    pred_exact.push_back(pe / static_cast<double>(exact.draws.rows()));
    pred_gibbs.push_back(pg / static_cast<double>(gibbs.draws.rows()));
  }
  j["predictive"] = {{"rows", rows.rows()},
                     {"reference", std::move(pred_ref)},
                     {"exact", std::move(pred_exact)},
                     {"gibbs", std::move(pred_gibbs)}};
  emit(o, j);
}

} // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"exact posterior inference for Bayesian probit regression"};
  app.require_subcommand(1);

  detail::CommonOpts fit_o, sample_o, predict_o, evidence_o, select_o, bench_o;
  double fit_level = 0.95;
  std::size_t fit_ci_draws = 20000;
  std::string sample_method = "exact", sample_draws_path, predict_new, select_models,
              bench_new;
  std::size_t sample_R = 10000, sample_burn = 5000, bench_R = 2000, bench_burn = 5000;

  CLI::App* fit = app.add_subcommand("fit", "posterior mean, intervals and evidence");
  detail::add_common(fit, fit_o, false);
  fit->add_option("--level", fit_level, "credible level (default 0.95)");
  fit->add_option("--ci-draws", fit_ci_draws, "draws behind the intervals (default 20000)");

  CLI::App* sample = app.add_subcommand("sample", "draw from the posterior");
  detail::add_common(sample, sample_o, true);
  sample->add_option("--method", sample_method, "exact or gibbs (default exact)");
  sample->add_option("--draws", sample_R, "number of retained draws (default 10000)");
  sample->add_option("--burn-in", sample_burn, "gibbs burn-in (default 5000)");
  sample->add_option("--draws-out", sample_draws_path, "write draws as CSV here");

  CLI::App* predict = app.add_subcommand("predict", "success probabilities for new rows");
  detail::add_common(predict, predict_o, false);
  predict->add_option("--new-data", predict_new, "CSV with the same predictor columns")
      ->required();

  CLI::App* evidence = app.add_subcommand("evidence", "marginal likelihood of the data");
  detail::add_common(evidence, evidence_o, false);

  CLI::App* select = app.add_subcommand("select", "posterior model probabilities");
  detail::add_common(select, select_o, false);
  select->add_option("--models-file", select_models, "JSON array of model definitions")
      ->required();

  CLI::App* bench = app.add_subcommand("bench", "compare exact and Gibbs samplers");
  detail::add_common(bench, bench_o, true);
  bench->add_option("--draws", bench_R, "retained draws per sampler (default 2000)");
  bench->add_option("--burn-in", bench_burn, "gibbs burn-in (default 5000)");
  bench->add_option("--new-data", bench_new, "rows for the predictive comparison");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    detail::CommonOpts* o = nullptr;
    if (sub == fit) o = &fit_o;
    else if (sub == sample) o = &sample_o;
    else if (sub == predict) o = &predict_o;
    else if (sub == evidence) o = &evidence_o;
    else if (sub == select) o = &select_o;
    else o = &bench_o;

    IngestOptions ing;
    ing.response = o->response;
    ing.intercept = o->intercept;
    ing.standardize = o->standardize;
    Design design = ingest_csv(o->data_path, ing);

    const bool defaulted = sub->count("--prior-mean") == 0 &&
                           sub->count("--prior-scale") == 0 &&
                           sub->count("--prior-cov-file") == 0;
    detail::Prior prior = detail::build_prior(*o, design.data.X.cols(), defaulted);

    if (sub == fit) detail::run_fit(*o, design, prior, fit_level, fit_ci_draws);
    else if (sub == sample)
      detail::run_sample(*o, design, prior, sample_method, sample_R, sample_burn,
                         sample_draws_path);
    else if (sub == predict) detail::run_predict(*o, design, prior, predict_new);
    else if (sub == evidence) detail::run_evidence(*o, design, prior);
    else if (sub == select) detail::run_select(*o, design, select_models);
    else detail::run_bench(*o, design, prior, bench_R, bench_burn, bench_new);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

} // namespace sunprobit::cli

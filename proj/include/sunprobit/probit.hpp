#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "matrix.hpp"
#include "normal.hpp"
#include "orthant.hpp"
#include "sun.hpp"

// Conjugate updating for probit regression: a Gaussian (or SUN) prior on the
// coefficients composed with binary observations yields a SUN posterior in
// closed form. Evidence, posterior means, predictions and model probabilities
// all reduce to Gaussian orthant evaluations; sampling is exact and i.i.d.

namespace sunprobit {

struct BinaryDataset {
  Matrix X;           // n x p design
  Eigen::VectorXi y;  // n responses in {0,1}
};

inline void validate_dataset(const BinaryDataset& data) {
  if (data.X.rows() != data.y.size())
    throw DimensionMismatch("dataset: X has " + std::to_string(data.X.rows()) +
                            " rows but y has " + std::to_string(data.y.size()) + " entries");
  if (data.X.cols() < 1) throw DimensionMismatch("dataset: need at least one predictor column");
  for (Eigen::Index i = 0; i < data.y.size(); ++i)
    if (data.y[i] != 0 && data.y[i] != 1)
      throw NonBinaryResponse("dataset: response entry " + std::to_string(i) + " is " +
                              std::to_string(data.y[i]) + ", expected 0 or 1");
}

struct FitOptions {
  double accuracy = 1e-4;
  std::size_t max_points = 2000000;
  int replicates = 12;
  std::uint64_t seed = kDefaultSeed;
};

inline CdfAccuracy cdf_config(const FitOptions& o) {
  return {o.accuracy, o.max_points, o.replicates};
}

struct PosteriorFit {
  SunParams posterior;
  SunParams prior;
  double log_evidence = 0.0;       // log marginal likelihood of the conditioning data
  double evidence_rel_error = 0.0;
  Matrix D;                        // signed design, diag(2y-1) X
  Vector s;                        // per-observation scale sqrt(d' Omega d + 1)
  Matrix G;                        // D Omega D'
  FitOptions options;
  bool gaussian_prior = true;      // prior had no latent block
};

// One update path covers both prior families: a Gaussian prior is the
// latent-free special case. New latent coordinates append after the prior's.
inline PosteriorFit fit_sun_prior(const BinaryDataset& data, const SunParams& prior,
                                  const FitOptions& opts = {}) {
  validate_dataset(data);
  const Eigen::Index p = prior.p();
  const Eigen::Index m = prior.n();
  const Eigen::Index n = data.X.rows();
  if (data.X.cols() != p)
    throw DimensionMismatch("fit: design has " + std::to_string(data.X.cols()) +
                            " columns, prior dimension is " + std::to_string(p));

  Matrix D = data.X;
  for (Eigen::Index i = 0; i < n; ++i)
    if (data.y[i] == 0) D.row(i) = -D.row(i);

  Matrix G = D * prior.omega() * D.transpose();
  G = 0.5 * (G + G.transpose());
  Vector s = (G.diagonal().array() + 1.0).sqrt();
  Vector sinv = s.array().inverse();

  Vector gamma_new = sinv.asDiagonal() * (D * prior.xi());
  Matrix gamma_mat_new = sinv.asDiagonal() * (G + Matrix::Identity(n, n)) * sinv.asDiagonal();
  gamma_mat_new.diagonal().setOnes();
  // p x n latent cross block: omega^{-1} Omega D' s^{-1}
  Matrix delta_new = prior.scale().array().inverse().matrix().asDiagonal() *
                     (prior.omega() * D.transpose()) * sinv.asDiagonal();

  Vector gamma_post(m + n);
  gamma_post << prior.gamma(), gamma_new;
  Matrix delta_post(p, m + n);
  delta_post << prior.delta(), delta_new;
  Matrix gamma_mat_post(m + n, m + n);
  gamma_mat_post.topLeftCorner(m, m) = prior.gamma_mat();
  gamma_mat_post.bottomRightCorner(n, n) = gamma_mat_new;
  if (m > 0 && n > 0) {
    Matrix cross = sinv.asDiagonal() * (D * prior.scale().asDiagonal() * prior.delta());
    gamma_mat_post.bottomLeftCorner(n, m) = cross;
    gamma_mat_post.topRightCorner(m, n) = cross.transpose();
  }

  PosteriorFit fit{SunParams(prior.xi(), prior.omega(), std::move(delta_post),
                             std::move(gamma_post), std::move(gamma_mat_post)),
                   prior, 0.0, 0.0, std::move(D), std::move(s), std::move(G), opts, m == 0};

  OrthantEstimate post_norm = fit.posterior.log_normalizer(cdf_config(opts), opts.seed);
  OrthantEstimate prior_norm = prior.log_normalizer(cdf_config(opts), opts.seed);
  fit.log_evidence = post_norm.log_value - prior_norm.log_value;
  fit.evidence_rel_error = std::sqrt(post_norm.rel_error * post_norm.rel_error +
                                     prior_norm.rel_error * prior_norm.rel_error);
  return fit;
}

inline PosteriorFit fit_gaussian_prior(const BinaryDataset& data, const Vector& xi,
                                       const Matrix& omega, const FitOptions& opts = {}) {
  const Eigen::Index p = xi.size();
  SunParams prior(xi, omega, Matrix(p, 0), Vector(0), Matrix(0, 0));
  return fit_sun_prior(data, prior, opts);
}

// Closed-form posterior mean: one density weight per observation, each an
// (n-1)-dim orthant evaluation at the conditional threshold, normalized by
// the evidence. Gaussian-prior fits only.
inline Vector posterior_mean(const PosteriorFit& fit, double* rel_error_out = nullptr,
                             const FitOptions* opts_in = nullptr) {
  if (!fit.gaussian_prior)
    throw ConfigError("posterior_mean: closed form needs a Gaussian prior; use sun_mean_mc");
  const FitOptions opts = opts_in ? *opts_in : fit.options;
  const Eigen::Index n = fit.D.rows();
  if (rel_error_out) *rel_error_out = 0.0;
  if (n == 0) return fit.prior.xi();

  const Vector& gbar = fit.posterior.gamma();
  const Matrix& Gbar = fit.posterior.gamma_mat();

  std::vector<OrthantProblem> problems;
  problems.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix cov(n - 1, n - 1);
    Vector upper(n - 1);
    Eigen::Index a = 0;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == i) continue;
      upper[a] = gbar[r] - Gbar(r, i) * gbar[i];
      Eigen::Index b = 0;
      for (Eigen::Index c = 0; c < n; ++c) {
        if (c == i) continue;
        cov(a, b) = Gbar(r, c) - Gbar(r, i) * Gbar(c, i);
        ++b;
      }
      ++a;
    }
    problems.push_back({std::move(cov), std::move(upper), opts.accuracy, opts.max_points,
                        opts.replicates});
  }
  std::vector<OrthantEstimate> tails = phi_n_batch(problems, opts.seed);
  OrthantEstimate denom = fit.posterior.log_normalizer(cdf_config(opts), opts.seed);

  Vector v(n);
  double worst = denom.rel_error * denom.rel_error;
  for (Eigen::Index i = 0; i < n; ++i) {
    v[i] = std::exp(norm_logpdf(gbar[i]) + tails[i].log_value - denom.log_value) / fit.s[i];
    worst = std::max(worst, denom.rel_error * denom.rel_error +
                                tails[i].rel_error * tails[i].rel_error);
  }
  if (rel_error_out) *rel_error_out = std::sqrt(worst);
  return fit.prior.xi() + fit.prior.omega() * (fit.D.transpose() * v);
}

struct Prediction {
  double prob = 0.0;
  double rel_error = 0.0;
  bool uncertain = false;  // combined CDF error above 1e-3
};

// Success probability for a new unit: ratio of the bordered selection
// probability to the fitted one. The border row reuses the fit's cached
// blocks bit-for-bit, so structurally independent cases cancel exactly.
inline Prediction predict_prob(const PosteriorFit& fit, const Vector& x_new, int y_value = 1,
                               const FitOptions* opts_in = nullptr) {
  if (x_new.size() != fit.prior.p())
    throw DimensionMismatch("predict_prob: x_new has wrong length");
  if (y_value != 0 && y_value != 1)
    throw NonBinaryResponse("predict_prob: y must be 0 or 1");
  const FitOptions opts = opts_in ? *opts_in : fit.options;
  const Eigen::Index n = fit.D.rows();
  const Eigen::Index m = fit.prior.n();
  const Eigen::Index q = m + n;

  Vector d_new = (y_value == 1) ? x_new : Vector(-x_new);
  Vector om_d = fit.prior.omega() * d_new;
  double g_new = d_new.dot(om_d);
  double s_new = std::sqrt(g_new + 1.0);

  Matrix cov(q + 1, q + 1);
  Vector upper(q + 1);
  cov.topLeftCorner(q, q) = fit.posterior.gamma_mat();
  upper.head(q) = fit.posterior.gamma();
  if (m > 0)
    cov.block(q, 0, 1, m) =
        (d_new.transpose() * fit.prior.scale().asDiagonal() * fit.prior.delta()) / s_new;
  if (n > 0)
    cov.block(q, m, 1, n) =
        (fit.D * om_d).transpose().cwiseQuotient(fit.s.transpose()) / s_new;
  cov.block(0, q, q, 1) = cov.block(q, 0, 1, q).transpose();
  cov(q, q) = 1.0;
  upper[q] = d_new.dot(fit.prior.xi()) / s_new;

  OrthantProblem num_prob{std::move(cov), std::move(upper), opts.accuracy, opts.max_points,
                          opts.replicates};
  OrthantEstimate num = phi_n(num_prob, opts.seed);
  OrthantEstimate denom = fit.posterior.log_normalizer(cdf_config(opts), opts.seed);

  Prediction out;
  out.prob = std::min(1.0, std::max(0.0, std::exp(num.log_value - denom.log_value)));
  out.rel_error =
      std::sqrt(num.rel_error * num.rel_error + denom.rel_error * denom.rel_error);
  out.uncertain = out.rel_error > 1e-3;
  return out;
}

struct ModelSpec {
  std::vector<Eigen::Index> columns;  // design columns the model uses
  Vector xi;
  Matrix omega;
  double log_prior_weight = 0.0;      // unnormalized
};

struct EvidenceValue {
  double log_value = 0.0;
  double rel_error = 0.0;
};

inline EvidenceValue log_marginal_likelihood(const BinaryDataset& data, const ModelSpec& model,
                                             const FitOptions& opts = {}) {
  validate_dataset(data);
  if (model.columns.empty()) throw ConfigError("model: needs at least one column");
  std::vector<bool> seen(data.X.cols(), false);
  for (auto c : model.columns) {
    if (c < 0 || c >= data.X.cols())
      throw IndexOutOfRange("model: column " + std::to_string(c) + " out of range");
    if (seen[c]) throw ConfigError("model: duplicate column " + std::to_string(c));
    seen[c] = true;
  }
  const Eigen::Index k = static_cast<Eigen::Index>(model.columns.size());
  if (model.xi.size() != k || model.omega.rows() != k || model.omega.cols() != k)
    throw DimensionMismatch("model: prior dimensions do not match the column subset");
  BinaryDataset sub;
  sub.y = data.y;
  sub.X.resize(data.X.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) sub.X.col(j) = data.X.col(model.columns[j]);
  PosteriorFit fit = fit_gaussian_prior(sub, model.xi, model.omega, opts);
  return {fit.log_evidence, fit.evidence_rel_error};
}

struct ModelPosterior {
  Vector log_marginal;        // per model
  Vector rel_error;           // CDF error of each marginal likelihood
  Vector probability;         // normalized posterior model probabilities
  Matrix log_bayes_factors;   // [i][j] = log ML_i - log ML_j
};

inline ModelPosterior model_posterior(const BinaryDataset& data,
                                      const std::vector<ModelSpec>& models,
                                      const FitOptions& opts = {}) {
  if (models.empty()) throw EmptyModelSet("model_posterior: no models given");
  const std::size_t k = models.size();
  ModelPosterior out;
  out.log_marginal.resize(k);
  out.rel_error.resize(k);
  Vector log_w(k);
  for (std::size_t i = 0; i < k; ++i) {
    EvidenceValue ev = log_marginal_likelihood(data, models[i], opts);
    out.log_marginal[i] = ev.log_value;
    out.rel_error[i] = ev.rel_error;
    log_w[i] = models[i].log_prior_weight + out.log_marginal[i];
  }
  double m = log_w.maxCoeff();
  Vector unnorm = (log_w.array() - m).exp();
  out.probability = unnorm / unnorm.sum();
  out.log_bayes_factors.resize(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      out.log_bayes_factors(i, j) = out.log_marginal[i] - out.log_marginal[j];
  return out;
}

inline SunSampleBatch sample_posterior(const PosteriorFit& fit, std::size_t R,
                                       std::uint64_t seed) {
  return sun_sample(fit.posterior, R, seed);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Equal-tailed empirical interval from a draws matrix (linear interpolation
// between order statistics). level = 1 degenerates to the sample range.
inline Interval credible_interval(const Matrix& draws, Eigen::Index j, double level) {
  if (j < 0 || j >= draws.cols())
    throw IndexOutOfRange("credible_interval: coordinate " + std::to_string(j) +
                          " out of range");
  if (!(level > 0.0 && level <= 1.0))
    throw ConfigError("credible_interval: level must be in (0, 1]");
  if (draws.rows() < 2)
    throw ConfigError("credible_interval: need at least two draws");
  std::vector<double> col(draws.rows());
  for (Eigen::Index r = 0; r < draws.rows(); ++r) col[r] = draws(r, j);
  std::sort(col.begin(), col.end());
  auto quant = [&](double q) {
    double h = q * static_cast<double>(col.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, col.size() - 1);
    double frac = h - std::floor(h);
    return col[lo] * (1.0 - frac) + col[hi] * frac;
  };
  double tail = 0.5 * (1.0 - level);
  return {quant(tail), quant(1.0 - tail)};
}

inline Interval credible_interval(const PosteriorFit& fit, Eigen::Index j, double level,
                                  std::size_t R = 20000, std::uint64_t seed = kDefaultSeed) {
  SunSampleBatch batch = sample_posterior(fit, R, seed);
  return credible_interval(batch.draws, j, level);
}

} // namespace sunprobit

#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "matrix.hpp"
#include "normal.hpp"
#include "probit.hpp"
#include "rng.hpp"
#include "sun.hpp"

// Data-augmentation Gibbs baseline for the same probit posterior, plus chain
// diagnostics. Serves as the reference point the exact sampler is measured
// against: identical target, very different autocorrelation behavior.

namespace sunprobit {

struct ChainSummary {
  Matrix draws;             // R x p, post burn-in
  Vector ess;               // per coordinate
  double elapsed_sec = 0.0; // full run including burn-in
  double samples_per_sec = 0.0;
  std::size_t burn_in = 0;
  std::uint64_t seed = 0;
};

// Geyer initial-positive-sequence estimate. Autocorrelation pairs
// rho_{2m} + rho_{2m+1} are summed while positive; the first non-positive
// pair truncates the series. Result clamped to (0, R].
inline double effective_sample_size(const Vector& series) {
  const Eigen::Index R = series.size();
  if (R < 2) return static_cast<double>(R);
  const double mean = series.mean();
  Vector centered = series.array() - mean;
  const double c0 = centered.squaredNorm() / static_cast<double>(R);
  // a chain stuck at one value leaves only rounding residue in c0; that
  // residue is perfectly autocorrelated and would report ess near 1
  const double residue = std::numeric_limits<double>::epsilon() * (std::abs(mean) + 1.0);
  if (c0 <= static_cast<double>(R) * residue * residue) return static_cast<double>(R);

  auto acov = [&](Eigen::Index k) {
    return centered.head(R - k).dot(centered.tail(R - k)) / static_cast<double>(R);
  };
  double pair_sum = 0.0;
  for (Eigen::Index m = 0; 2 * m + 1 < R; ++m) {
    double g = acov(2 * m) + acov(2 * m + 1);
    if (g <= 0.0) break;
    pair_sum += g;
  }
  double tau = std::max(2.0 * pair_sum / c0 - 1.0, 1e-12);
  double ess = static_cast<double>(R) / tau;
  return std::min(ess, static_cast<double>(R));
}

inline Vector effective_sample_size(const Matrix& draws) {
  Vector out(draws.cols());
  for (Eigen::Index j = 0; j < draws.cols(); ++j)
    out[j] = effective_sample_size(Vector(draws.col(j)));
  return out;
}

// Albert-Chib sampler: latent z_i | beta is a unit-variance truncated normal
// on the side selected by y_i, beta | z is Gaussian with fixed precision
// Omega^{-1} + X'X (factored once).
inline ChainSummary gibbs_albert_chib(const BinaryDataset& data, const Vector& xi,
                                      const Matrix& omega, std::size_t R,
                                      std::size_t burn_in = 5000,
                                      std::uint64_t seed = kDefaultSeed) {
  validate_dataset(data);
  const Eigen::Index n = data.X.rows();
  const Eigen::Index p = data.X.cols();
  if (xi.size() != p || omega.rows() != p || omega.cols() != p)
    throw DimensionMismatch("gibbs: prior dimensions do not match the design");
  if (R == 0) throw ConfigError("gibbs: need at least one retained draw");

  auto t0 = std::chrono::steady_clock::now();

  CholFactor om_chol = cholesky(SymMatrix(omega).mat());
  Matrix omega_inv = om_chol.L.transpose()
                         .triangularView<Eigen::Upper>()
                         .solve(om_chol.L.triangularView<Eigen::Lower>().solve(
                             Matrix(Matrix::Identity(p, p))));
  Vector b0 = omega_inv * xi;
  Matrix precision = omega_inv + data.X.transpose() * data.X;
  CholFactor prec_chol = cholesky(SymMatrix(precision).mat());
  const auto& L = prec_chol.L;

  Rng rng(seed, 0x6769ULL);
  Vector beta = xi;
  Vector z(n), rhs(p), noise(p);
  Matrix draws(R, p);

  const std::size_t total = burn_in + R;
  for (std::size_t it = 0; it < total; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double m = data.X.row(i).dot(beta);
      double u = rng.uniform();
      double t = (data.y[i] == 1) ? trunc_norm_quantile(u, -m, kInf)
                                  : trunc_norm_quantile(u, -kInf, -m);
      z[i] = m + t;
    }
    rhs = b0 + data.X.transpose() * z;
    Vector mean = L.transpose().triangularView<Eigen::Upper>().solve(
        L.triangularView<Eigen::Lower>().solve(rhs));
    for (Eigen::Index j = 0; j < p; ++j) noise[j] = rng.normal();
    beta = mean + L.transpose().triangularView<Eigen::Upper>().solve(noise);
    if (it >= burn_in) draws.row(it - burn_in) = beta.transpose();
  }

  auto t1 = std::chrono::steady_clock::now();
  ChainSummary out;
  out.draws = std::move(draws);
  out.ess = effective_sample_size(out.draws);
  out.elapsed_sec = std::chrono::duration<double>(t1 - t0).count();
  out.samples_per_sec =
      out.elapsed_sec > 0.0 ? static_cast<double>(R) / out.elapsed_sec : kInf;
  out.burn_in = burn_in;
  out.seed = seed;
  return out;
}

struct SamplerComparison {
  Vector reference_mean;      // closed-form posterior mean
  double reference_rel_error = 0.0;
  Vector exact_mean, gibbs_mean;
  Vector exact_se, gibbs_se;  // MC standard errors of the sample means
  Vector ess_exact, ess_gibbs;
  double agree_frac_exact = 0.0;    // coords with |mean - ref| <= 4 SE
  double agree_frac_gibbs = 0.0;
  double agree_frac_between = 0.0;  // exact vs gibbs, combined SE
  double exact_elapsed_sec = 0.0, gibbs_elapsed_sec = 0.0;
  double exact_samples_per_sec = 0.0, gibbs_samples_per_sec = 0.0;
  double exact_ess_median = 0.0, gibbs_ess_median = 0.0;
  double exact_sec_per_es = 0.0, gibbs_sec_per_es = 0.0;
  std::size_t draws = 0;
};

inline double median_of(Vector v) {
  std::sort(v.data(), v.data() + v.size());
  Eigen::Index k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// Runs both samplers at matched retained-draw counts against the same
// posterior and scores them against the closed-form mean.
inline SamplerComparison compare_samplers(const BinaryDataset& data, const Vector& xi,
                                          const Matrix& omega, std::size_t R,
                                          std::size_t burn_in = 5000,
                                          std::uint64_t seed = kDefaultSeed,
                                          const FitOptions& opts = {}) {
  PosteriorFit fit = fit_gaussian_prior(data, xi, omega, opts);
  SamplerComparison out;
  out.draws = R;
  out.reference_mean = posterior_mean(fit, &out.reference_rel_error);

  SunSampleBatch exact = sample_posterior(fit, R, derive_seed(seed, 0xe5ac7ULL));
  ChainSummary gibbs =
      gibbs_albert_chib(data, xi, omega, R, burn_in, derive_seed(seed, 0x6b5ULL));

  const Eigen::Index p = xi.size();
  const double Rd = static_cast<double>(R);
  out.exact_mean = exact.draws.colwise().mean();
  out.gibbs_mean = gibbs.draws.colwise().mean();
  out.exact_se.resize(p);
  out.gibbs_se.resize(p);
  out.ess_exact = effective_sample_size(exact.draws);
  out.ess_gibbs = gibbs.ess;

  int ok_exact = 0, ok_gibbs = 0, ok_between = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    double sd_e = std::sqrt((exact.draws.col(j).array() - out.exact_mean[j]).square().sum() /
                            (Rd - 1.0));
    double sd_g = std::sqrt((gibbs.draws.col(j).array() - out.gibbs_mean[j]).square().sum() /
                            (Rd - 1.0));
    out.exact_se[j] = sd_e / std::sqrt(Rd);
    out.gibbs_se[j] = sd_g / std::sqrt(std::max(out.ess_gibbs[j], 1.0));
    if (std::abs(out.exact_mean[j] - out.reference_mean[j]) <= 4.0 * out.exact_se[j])
      ++ok_exact;
    if (std::abs(out.gibbs_mean[j] - out.reference_mean[j]) <= 4.0 * out.gibbs_se[j])
      ++ok_gibbs;
    double combined = std::sqrt(out.exact_se[j] * out.exact_se[j] +
                                out.gibbs_se[j] * out.gibbs_se[j]);
    if (std::abs(out.exact_mean[j] - out.gibbs_mean[j]) <= 4.0 * combined) ++ok_between;
  }
  out.agree_frac_exact = static_cast<double>(ok_exact) / static_cast<double>(p);
  out.agree_frac_gibbs = static_cast<double>(ok_gibbs) / static_cast<double>(p);
  out.agree_frac_between = static_cast<double>(ok_between) / static_cast<double>(p);

  out.exact_elapsed_sec = exact.elapsed_sec;
  out.gibbs_elapsed_sec = gibbs.elapsed_sec;
  out.exact_samples_per_sec = exact.elapsed_sec > 0.0 ? Rd / exact.elapsed_sec : kInf;
  out.gibbs_samples_per_sec = gibbs.samples_per_sec;
  out.exact_ess_median = median_of(out.ess_exact);
  out.gibbs_ess_median = median_of(out.ess_gibbs);
  out.exact_sec_per_es =
      out.exact_ess_median > 0.0 ? exact.elapsed_sec / out.exact_ess_median : kInf;
  out.gibbs_sec_per_es =
      out.gibbs_ess_median > 0.0 ? gibbs.elapsed_sec / out.gibbs_ess_median : kInf;
  return out;
}

} // namespace sunprobit

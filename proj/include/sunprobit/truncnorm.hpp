#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "errors.hpp"
#include "matrix.hpp"
#include "normal.hpp"
#include "orthant.hpp"
#include "rng.hpp"

// Exact i.i.d. sampling from a zero-mean Gaussian restricted below by a bound
// vector: accept-reject with the minimax-tilted sequential proposal prepared
// in orthant.hpp. The envelope constant is the saddle value, so acceptance
// stays workable even when the region probability underflows.

namespace sunprobit {

struct TruncNormSpec {
  Matrix cov;
  Vector lower;  // entries may be -inf
};

struct TruncSampleBatch {
  Matrix draws;                    // R x n, original coordinate order
  double acceptance_rate = 1.0;    // R / proposals_used, exact bookkeeping
  std::size_t proposals_used = 0;
  bool low_acceptance = false;     // acceptance below 1e-3
  bool tilt_fallback = false;      // proposal ran untilted
};

inline TruncSampleBatch sample_tmvn(const TruncNormSpec& spec, std::size_t R,
                                    std::uint64_t seed) {
  const Eigen::Index n = spec.cov.rows();
  if (n != spec.cov.cols() || n < 1)
    throw DimensionMismatch("sample_tmvn: covariance must be square, dimension >= 1");
  if (spec.lower.size() != n)
    throw DimensionMismatch("sample_tmvn: lower bound length does not match dimension");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(spec.cov(i, i) > 0.0))
      throw NotPositiveDefinite("sample_tmvn: nonpositive variance at coordinate " +
                                std::to_string(i));
    if (spec.lower[i] == kInf)
      throw InfeasibleRegion("sample_tmvn: lower bound +inf at coordinate " +
                             std::to_string(i));
  }

  Vector upper = Vector::Constant(n, kInf);
  detail::TiltedSystem sys = detail::prepare_box(spec.cov, spec.lower, upper);
  if (!std::isfinite(sys.psi_star))
    throw NumericalError("sample_tmvn: tilting saddle point and untilted envelope both failed");

  {
    // cheap region-mass probe; only the sign of the outcome matters
    detail::QmcOptions probe;
    probe.accuracy = 0.5;
    probe.replicates = 4;
    probe.start_points = 128;
    probe.max_points = 4096;
    OrthantEstimate mass = detail::qmc_log_prob(sys, probe, derive_seed(seed, 0xfea5ULL));
    if (mass.log_value == -kInf)
      throw InfeasibleRegion("sample_tmvn: truncation region has numerically zero probability");
  }

  TruncSampleBatch out;
  out.tilt_fallback = sys.tilt_fallback;
  out.draws.resize(R, n);
  if (R == 0) {
    out.acceptance_rate = 1.0;
    return out;
  }

  const std::size_t block = std::max<std::size_t>(2 * R, 1024);
  const std::size_t proposal_cap = std::max<std::size_t>(std::size_t(1) << 27, 4096 * R);
  std::size_t accepted = 0;
  std::size_t proposals = 0;
  Vector z(n), x(n);

  for (std::size_t b = 0; accepted < R; ++b) {
    if (proposals > proposal_cap)
      throw NumericalError("sample_tmvn: acceptance rate too low to make progress (" +
                           std::to_string(accepted) + "/" + std::to_string(proposals) + ")");
    Rng rng(seed, 0x7275ULL, b);
    for (std::size_t i = 0; i < block && accepted < R; ++i) {
      ++proposals;
      double logpr = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        double c = k > 0 ? sys.Ls.row(k).head(k).dot(z.head(k)) : 0.0;
        double lt = sys.lower[k] - sys.mu[k] - c;
        double ut = sys.upper[k] - sys.mu[k] - c;
        double zk = sys.mu[k] + trunc_norm_quantile(rng.uniform(), lt, ut);
        z[k] = zk;
        logpr += log_norm_interval(lt, ut) + 0.5 * sys.mu[k] * sys.mu[k] - sys.mu[k] * zk;
      }
      double u = rng.uniform();
      if (std::log(u) > logpr - sys.psi_star) continue;
      x.noalias() = sys.Lfull * z;
      for (Eigen::Index k = 0; k < n; ++k) out.draws(accepted, sys.perm[k]) = x[k];
      ++accepted;
    }
  }
  out.proposals_used = proposals;
  out.acceptance_rate = static_cast<double>(R) / static_cast<double>(proposals);
  out.low_acceptance = out.acceptance_rate < 1e-3;
  return out;
}

// Unrestricted Gaussian draws; positive semidefinite covariances are fine
// (degenerate directions come back as exact constants).
inline Matrix sample_mvn(const Matrix& cov, std::size_t R, std::uint64_t seed) {
  const Eigen::Index n = cov.rows();
  if (n != cov.cols() || n < 1)
    throw DimensionMismatch("sample_mvn: covariance must be square, dimension >= 1");
  Matrix f;
  try {
    f = cholesky(cov).L;
  } catch (const NotPositiveDefinite&) {
    f = psd_factor(cov);
  }
  Matrix out(R, n);
  Rng rng(seed, 0x6d766eULL);
  Vector z(n);
  for (std::size_t r = 0; r < R; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
    out.row(r) = (f * z).transpose();
  }
  return out;
}

} // namespace sunprobit

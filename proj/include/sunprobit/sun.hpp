#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "errors.hpp"
#include "matrix.hpp"
#include "normal.hpp"
#include "orthant.hpp"
#include "truncnorm.hpp"

// Unified skew-normal distribution: a p-dim Gaussian with location xi and
// covariance Omega, selection-skewed by n latent unit-variance coordinates
// with cross-correlation Delta, threshold shift gamma and correlation Gamma.
// The extended block matrix [[Gamma, Delta^T], [Delta, Omega_bar]] must be a
// full-rank correlation matrix; every constructor enforces it.

namespace sunprobit {

struct CdfAccuracy {
  double accuracy = 1e-5;       // density/MGF CDF terms run at an elevated budget
  std::size_t max_points = 8000000;
  int replicates = 12;
};

namespace detail {

struct NormalizerKey {
  double accuracy;
  std::size_t max_points;
  int replicates;
  std::uint64_t seed;
  bool operator==(const NormalizerKey& o) const {
    return accuracy == o.accuracy && max_points == o.max_points &&
           replicates == o.replicates && seed == o.seed;
  }
};

struct NormalizerCache {
  std::mutex m;
  std::vector<std::pair<NormalizerKey, OrthantEstimate>> entries;
};

inline double log_mvn_pdf(const Vector& centered, const Matrix& cholL) {
  Vector w = cholL.triangularView<Eigen::Lower>().solve(centered);
  double logdet = cholL.diagonal().array().log().sum();
  return -0.5 * w.squaredNorm() - logdet -
         0.5 * static_cast<double>(centered.size()) * std::log(2.0 * M_PI);
}

} // namespace detail

class SunParams {
public:
  SunParams(Vector xi, Matrix omega, Matrix delta, Vector gamma, Matrix gamma_mat)
      : xi_(std::move(xi)), omega_(std::move(omega)), delta_(std::move(delta)),
        gamma_(std::move(gamma)), gamma_mat_(std::move(gamma_mat)),
        cache_(std::make_shared<detail::NormalizerCache>()) {
    validate();
  }

  Eigen::Index p() const { return xi_.size(); }
  Eigen::Index n() const { return gamma_.size(); }

  const Vector& xi() const { return xi_; }
  const Matrix& omega() const { return omega_; }
  const Matrix& delta() const { return delta_; }
  const Vector& gamma() const { return gamma_; }
  const Matrix& gamma_mat() const { return gamma_mat_; }

  const Vector& scale() const { return scale_; }        // omega: sqrt diag of Omega
  const Matrix& corr() const { return corr_; }          // Omega_bar
  const Matrix& chol_omega() const { return chol_omega_; }
  const Matrix& corr_inv_delta() const { return corr_inv_delta_; }  // Omega_bar^{-1} Delta
  const Matrix& cond_cov() const { return cond_cov_; }  // Gamma - Delta^T Omega_bar^{-1} Delta

  // log Phi_n(gamma; Gamma), memoized per accuracy configuration and seed.
  OrthantEstimate log_normalizer(const CdfAccuracy& cfg, std::uint64_t seed) const {
    if (n() == 0) return {};
    detail::NormalizerKey key{cfg.accuracy, cfg.max_points, cfg.replicates, seed};
    std::lock_guard<std::mutex> lock(cache_->m);
    for (const auto& e : cache_->entries)
      if (e.first == key) return e.second;
    OrthantProblem prob{gamma_mat_, gamma_, cfg.accuracy, cfg.max_points, cfg.replicates};
    OrthantEstimate est = phi_n(prob, seed);
    cache_->entries.emplace_back(key, est);
    return est;
  }

private:
  void validate() {
    const Eigen::Index p = xi_.size();
    const Eigen::Index n = gamma_.size();
    if (p < 1) throw DimensionMismatch("SunParams: dimension p must be >= 1");
    if (omega_.rows() != p || omega_.cols() != p)
      throw DimensionMismatch("SunParams: Omega must be p x p");
    if (delta_.rows() != p || delta_.cols() != n)
      throw DimensionMismatch("SunParams: Delta must be p x n");
    if (gamma_mat_.rows() != n || gamma_mat_.cols() != n)
      throw DimensionMismatch("SunParams: Gamma must be n x n");

    chol_omega_ = cholesky(omega_).L;
    auto cd = correlation_decompose(omega_);
    scale_ = std::move(cd.omega);
    corr_ = std::move(cd.corr);

    if (n > 0) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::fabs(gamma_mat_(i, i) - 1.0) > 1e-8)
          throw InvalidParams("SunParams: Gamma must have unit diagonal");
      Matrix star(n + p, n + p);
      star.topLeftCorner(n, n) = 0.5 * (gamma_mat_ + gamma_mat_.transpose());
      star.topRightCorner(n, p) = delta_.transpose();
      star.bottomLeftCorner(p, n) = delta_;
      star.bottomRightCorner(p, p) = corr_;
      Eigen::LDLT<Matrix> ldlt(star);
      if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < 1e-10)
        throw InvalidParams("SunParams: extended correlation block is not full-rank positive "
                            "definite (min pivot " +
                            std::to_string(ldlt.vectorD().minCoeff()) + ")");
      corr_inv_delta_ = solve_spd(corr_, delta_);
      cond_cov_ = gamma_mat_ - delta_.transpose() * corr_inv_delta_;
      cond_cov_ = 0.5 * (cond_cov_ + cond_cov_.transpose());
    } else {
      corr_inv_delta_.resize(p, 0);
      cond_cov_.resize(0, 0);
    }
  }

  Vector xi_;
  Matrix omega_;
  Matrix delta_;
  Vector gamma_;
  Matrix gamma_mat_;

  Vector scale_;
  Matrix corr_;
  Matrix chol_omega_;
  Matrix corr_inv_delta_;
  Matrix cond_cov_;
  std::shared_ptr<detail::NormalizerCache> cache_;
};

// log density at z. Latent coordinates whose conditional variance collapses
// act as point masses: their CDF factor is an exact 0/1 indicator.
inline double sun_log_density(const SunParams& s, const Vector& z,
                              const CdfAccuracy& cfg = {}, std::uint64_t seed = kDefaultSeed,
                              double* rel_error_out = nullptr) {
  if (z.size() != s.p())
    throw DimensionMismatch("sun_log_density: point has wrong dimension");
  if (rel_error_out) *rel_error_out = 0.0;
  Vector centered = z - s.xi();
  double logphi = detail::log_mvn_pdf(centered, s.chol_omega());
  if (s.n() == 0) return logphi;

  Vector t = centered.cwiseQuotient(s.scale());
  Vector u = s.gamma() + s.corr_inv_delta().transpose() * t;
  const Matrix& C = s.cond_cov();

  std::vector<Eigen::Index> live;
  for (Eigen::Index i = 0; i < s.n(); ++i) {
    if (C(i, i) < 1e-12) {
      if (u[i] < 0.0) return -kInf;  // indicator 0: z lies outside the degenerate support
    } else {
      live.push_back(i);
    }
  }

  OrthantEstimate denom = s.log_normalizer(cfg, seed);
  double rel2 = denom.rel_error * denom.rel_error;
  double lognum = 0.0;
  if (!live.empty()) {
    Matrix ck(live.size(), live.size());
    Vector uk(live.size());
    for (std::size_t a = 0; a < live.size(); ++a) {
      uk[a] = u[live[a]];
      for (std::size_t b = 0; b < live.size(); ++b) ck(a, b) = C(live[a], live[b]);
    }
    OrthantProblem prob{std::move(ck), std::move(uk), cfg.accuracy, cfg.max_points,
                        cfg.replicates};
    OrthantEstimate num = phi_n(prob, seed);
    lognum = num.log_value;
    rel2 += num.rel_error * num.rel_error;
  }
  if (rel_error_out) *rel_error_out = std::sqrt(rel2);
  return logphi + lognum - denom.log_value;
}

// log E[exp(t'Z)]: Gaussian part plus the ratio of shifted to unshifted
// selection probabilities.
inline double sun_log_mgf(const SunParams& s, const Vector& t, const CdfAccuracy& cfg = {},
                          std::uint64_t seed = kDefaultSeed, double* rel_error_out = nullptr) {
  if (t.size() != s.p())
    throw DimensionMismatch("sun_log_mgf: argument has wrong dimension");
  if (rel_error_out) *rel_error_out = 0.0;
  double gaussian = s.xi().dot(t) + 0.5 * t.dot(s.omega() * t);
  if (s.n() == 0) return gaussian;
  Vector shifted = s.gamma() + s.delta().transpose() * s.scale().cwiseProduct(t);
  OrthantProblem prob{s.gamma_mat(), std::move(shifted), cfg.accuracy, cfg.max_points,
                      cfg.replicates};
  OrthantEstimate num = phi_n(prob, seed);
  OrthantEstimate denom = s.log_normalizer(cfg, seed);
  if (rel_error_out)
    *rel_error_out = std::sqrt(num.rel_error * num.rel_error + denom.rel_error * denom.rel_error);
  return gaussian + num.log_value - denom.log_value;
}

struct SunSampleBatch {
  Matrix draws;   // R x p
  std::uint64_t seed = 0;
  double elapsed_sec = 0.0;
  double acceptance_rate = 1.0;
  bool low_acceptance = false;
  bool tilt_fallback = false;
};

// Exact i.i.d. draws via the additive representation: a free Gaussian part
// plus the latent truncated part pushed through Delta Gamma^{-1}. Only n x n
// systems are solved on the latent side.
inline SunSampleBatch sun_sample(const SunParams& s, std::size_t R, std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  SunSampleBatch out;
  out.seed = seed;
  const Eigen::Index p = s.p(), n = s.n();
  Matrix v0cov;
  if (n > 0) {
    Matrix ginv_dt = solve_spd(s.gamma_mat(), s.delta().transpose());  // n x p
    v0cov = s.corr() - s.delta() * ginv_dt;
    v0cov = 0.5 * (v0cov + v0cov.transpose());
    TruncNormSpec tspec{s.gamma_mat(), -s.gamma()};
    TruncSampleBatch v1 = sample_tmvn(tspec, R, derive_seed(seed, 0x7631ULL));
    out.acceptance_rate = v1.acceptance_rate;
    out.low_acceptance = v1.low_acceptance;
    out.tilt_fallback = v1.tilt_fallback;
    Matrix v0 = sample_mvn(v0cov, R, derive_seed(seed, 0x7630ULL));
    out.draws = (v0 + v1.draws * ginv_dt) * s.scale().asDiagonal();
  } else {
    out.draws = sample_mvn(s.corr(), R, derive_seed(seed, 0x7630ULL)) * s.scale().asDiagonal();
  }
  out.draws.rowwise() += s.xi().transpose();
  (void)p;
  out.elapsed_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// Closure under coordinate selection: keep rows of Delta, latent part intact.
inline SunParams sun_marginal(const SunParams& s, const std::vector<Eigen::Index>& idx) {
  if (idx.empty()) throw IndexOutOfRange("sun_marginal: empty index set");
  for (auto i : idx)
    if (i < 0 || i >= s.p())
      throw IndexOutOfRange("sun_marginal: index " + std::to_string(i) + " out of range");
  const Eigen::Index q = static_cast<Eigen::Index>(idx.size());
  Vector xi(q);
  Matrix omega(q, q), delta(q, s.n());
  for (Eigen::Index a = 0; a < q; ++a) {
    xi[a] = s.xi()[idx[a]];
    delta.row(a) = s.delta().row(idx[a]);
    for (Eigen::Index b = 0; b < q; ++b) omega(a, b) = s.omega()(idx[a], idx[b]);
  }
  return SunParams(std::move(xi), std::move(omega), std::move(delta), s.gamma(), s.gamma_mat());
}

// Closure under w = a + A^T z. The Gaussian block transforms as usual; the
// latent cross block is rescaled by the new standard deviations so the
// extended matrix stays a correlation matrix.
inline SunParams sun_affine(const SunParams& s, const Vector& a, const Matrix& A) {
  if (A.rows() != s.p())
    throw DimensionMismatch("sun_affine: A must have p rows");
  const Eigen::Index q = A.cols();
  if (q < 1 || a.size() != q)
    throw DimensionMismatch("sun_affine: shift length must match A's column count");
  Matrix omega_new = A.transpose() * s.omega() * A;
  omega_new = 0.5 * (omega_new + omega_new.transpose());
  for (Eigen::Index i = 0; i < q; ++i)
    if (!(omega_new(i, i) > 0.0))
      throw RankDeficient("sun_affine: transformed covariance has nonpositive variance");
  Vector omega_sqrt = omega_new.diagonal().array().sqrt();
  Matrix delta_new =
      omega_sqrt.array().inverse().matrix().asDiagonal() *
      (A.transpose() * (s.scale().asDiagonal() * s.delta()));
  Vector xi_new = a + A.transpose() * s.xi();
  try {
    return SunParams(std::move(xi_new), std::move(omega_new), std::move(delta_new), s.gamma(),
                     s.gamma_mat());
  } catch (const InvalidParams& e) {
    throw RankDeficient(std::string("sun_affine: transform degenerates the distribution (") +
                        e.what() + ")");
  }
}

// Conditions on z[fixed] = values and returns the law of the remaining block.
// Gaussian conditioning on the observed block, a mean shift on the latent
// thresholds, then restandardization of both blocks.
inline SunParams sun_conditional(const SunParams& s, const std::vector<Eigen::Index>& fixed,
                                 const Vector& values) {
  if (fixed.empty()) return s;
  if (static_cast<Eigen::Index>(fixed.size()) != values.size())
    throw DimensionMismatch("sun_conditional: one value per fixed index");
  std::vector<bool> is_fixed(s.p(), false);
  for (auto i : fixed) {
    if (i < 0 || i >= s.p())
      throw IndexOutOfRange("sun_conditional: index " + std::to_string(i) + " out of range");
    if (is_fixed[i]) throw IndexOutOfRange("sun_conditional: duplicate index");
    is_fixed[i] = true;
  }
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < s.p(); ++i)
    if (!is_fixed[i]) free.push_back(i);
  if (free.empty())
    throw DimensionMismatch("sun_conditional: cannot condition on every coordinate");

  const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
  const Eigen::Index nc = static_cast<Eigen::Index>(fixed.size());
  const Eigen::Index n = s.n();

  Matrix corr_ff(nf, nf), corr_fc(nf, nc), corr_cc(nc, nc);
  Matrix delta_f(nf, n), delta_c(nc, n);
  Vector uc(nc);
  for (Eigen::Index a = 0; a < nc; ++a)
    uc[a] = (values[a] - s.xi()[fixed[a]]) / s.scale()[fixed[a]];
  for (Eigen::Index a = 0; a < nf; ++a) {
    delta_f.row(a) = s.delta().row(free[a]);
    for (Eigen::Index b = 0; b < nf; ++b) corr_ff(a, b) = s.corr()(free[a], free[b]);
    for (Eigen::Index b = 0; b < nc; ++b) corr_fc(a, b) = s.corr()(free[a], fixed[b]);
  }
  for (Eigen::Index a = 0; a < nc; ++a) {
    delta_c.row(a) = s.delta().row(fixed[a]);
    for (Eigen::Index b = 0; b < nc; ++b) corr_cc(a, b) = s.corr()(fixed[a], fixed[b]);
  }

  Matrix cc_inv_fc = solve_spd(corr_cc, corr_fc.transpose());  // nc x nf
  Matrix cc_inv_dc = n > 0 ? Matrix(solve_spd(corr_cc, delta_c)) : Matrix(nc, 0);
  Vector cc_inv_uc = solve_spd(corr_cc, uc);

  Matrix bar_cond = corr_ff - corr_fc * cc_inv_fc;
  bar_cond = 0.5 * (bar_cond + bar_cond.transpose());
  Vector mean_shift(nf);
  for (Eigen::Index a = 0; a < nf; ++a)
    mean_shift[a] = corr_fc.row(a).dot(cc_inv_uc);

  Vector xi_new(nf);
  Matrix omega_new(nf, nf);
  for (Eigen::Index a = 0; a < nf; ++a) {
    xi_new[a] = s.xi()[free[a]] + s.scale()[free[a]] * mean_shift[a];
    for (Eigen::Index b = 0; b < nf; ++b)
      omega_new(a, b) = s.scale()[free[a]] * bar_cond(a, b) * s.scale()[free[b]];
  }

  if (n == 0)
    return SunParams(std::move(xi_new), std::move(omega_new), Matrix(nf, 0), Vector(0),
                     Matrix(0, 0));

  Matrix gam_cond = s.gamma_mat() - delta_c.transpose() * cc_inv_dc;
  gam_cond = 0.5 * (gam_cond + gam_cond.transpose());
  Vector gamma_shifted = s.gamma() + cc_inv_dc.transpose() * uc;
  Matrix cross = delta_f - corr_fc * cc_inv_dc;  // nf x n

  // latent coordinates that collapse under conditioning resolve to hard
  // indicators: keep the ones already satisfied, reject impossible ones
  std::vector<Eigen::Index> live;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (gam_cond(i, i) < 1e-12) {
      if (gamma_shifted[i] <= 0.0)
        throw DegenerateConditional(
            "sun_conditional: conditioning drives a latent constraint to probability zero");
    } else {
      live.push_back(i);
    }
  }
  const Eigen::Index nl = static_cast<Eigen::Index>(live.size());
  Matrix gam_live(nl, nl), cross_live(nf, nl);
  Vector gamma_live(nl);
  for (Eigen::Index a = 0; a < nl; ++a) {
    gamma_live[a] = gamma_shifted[live[a]];
    cross_live.col(a) = cross.col(live[a]);
    for (Eigen::Index b = 0; b < nl; ++b) gam_live(a, b) = gam_cond(live[a], live[b]);
  }

  // cross lives in correlation space, so only the conditional-variance
  // shrinkage is undone here; the outer scale stays in omega_new
  Vector lam = gam_live.diagonal().array().sqrt();
  Vector bar_sqrt = bar_cond.diagonal().array().sqrt();
  Matrix gamma_mat_new = lam.array().inverse().matrix().asDiagonal() * gam_live *
                         lam.array().inverse().matrix().asDiagonal();
  gamma_mat_new.diagonal().setOnes();
  Vector gamma_new = gamma_live.cwiseQuotient(lam);
  Matrix delta_new = bar_sqrt.array().inverse().matrix().asDiagonal() * cross_live *
                     lam.array().inverse().matrix().asDiagonal();

  return SunParams(std::move(xi_new), std::move(omega_new), std::move(delta_new),
                   std::move(gamma_new), std::move(gamma_mat_new));
}

struct SunMeanEstimate {
  Vector mean;
  Vector se;
  bool se_undefined = false;  // single-draw batches have no spread estimate
};

inline SunMeanEstimate sun_mean_mc(const SunParams& s, std::size_t R, std::uint64_t seed) {
  if (R < 1) throw ConfigError("sun_mean_mc: need at least one draw");
  SunSampleBatch batch = sun_sample(s, R, seed);
  SunMeanEstimate out;
  out.mean = batch.draws.colwise().mean();
  if (R == 1) {
    out.se = Vector::Constant(s.p(), kNaN);
    out.se_undefined = true;
    return out;
  }
  Matrix centered = batch.draws.rowwise() - out.mean.transpose();
  Vector var = centered.array().square().colwise().sum() / static_cast<double>(R - 1);
  out.se = (var / static_cast<double>(R)).array().sqrt();
  return out;
}

} // namespace sunprobit

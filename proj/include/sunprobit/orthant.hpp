#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "matrix.hpp"
#include "normal.hpp"
#include "parallel.hpp"
#include "rng.hpp"

// Gaussian orthant/box probabilities: separation-of-variables estimator on a
// randomized rank-1 lattice, with exponential tilting of the sequential
// proposal chosen at the minimax saddle point. The same prepared system also
// drives the truncated-normal accept-reject sampler.

namespace sunprobit {

inline constexpr std::uint64_t kDefaultSeed = 0x5eed0001u;

struct OrthantProblem {
  Matrix cov;
  Vector upper;                  // entries may be +inf (dropped) or -inf (probability 0)
  double accuracy = 1e-4;        // target relative standard error
  std::size_t max_points = 2000000;  // total integrand evaluations across replicates
  int replicates = 12;
};

struct OrthantEstimate {
  double log_value = 0.0;
  double rel_error = 0.0;
  std::size_t points_used = 0;
  bool budget_exhausted = false;
  bool tilt_fallback = false;
};

namespace detail {

inline std::vector<double> lattice_generators(int dim) {
  std::vector<double> q;
  q.reserve(dim);
  int candidate = 1;
  while (static_cast<int>(q.size()) < dim) {
    ++candidate;
    bool prime = candidate >= 2;
    for (int d = 2; d * d <= candidate; ++d)
      if (candidate % d == 0) { prime = false; break; }
    if (prime) {
      double r = std::sqrt(static_cast<double>(candidate));
      q.push_back(r - std::floor(r));
    }
  }
  return q;
}

// Cholesky with outer-to-inner variable reordering: at every step pivot in
// the coordinate whose conditional interval (at the running conditional
// means) has the smallest probability. Hard constraints go first, which is
// what keeps the sequential factorization flat.
struct OrderedChol {
  Matrix L;                         // permuted lower factor
  Vector lower, upper;              // permuted limits
  std::vector<Eigen::Index> perm;   // perm[k] = original index at position k
};

inline OrderedChol reorder_cholesky(Matrix sig, Vector lower, Vector upper) {
  const Eigen::Index n = sig.rows();
  OrderedChol out;
  out.perm.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.perm[i] = i;
  Matrix L = Matrix::Zero(n, n);
  Vector z = Vector::Zero(n);
  const double scale = std::max(sig.diagonal().maxCoeff(), 1e-300);
  const double clamp = 1e-14 * scale;

  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index best = j;
    double best_pr = kInf;
    for (Eigen::Index i = j; i < n; ++i) {
      double s2 = sig(i, i) - L.row(i).head(j).squaredNorm();
      double s = std::sqrt(std::max(s2, clamp));
      double c = j > 0 ? L.row(i).head(j).dot(z.head(j)) : 0.0;
      double pr = log_norm_interval((lower[i] - c) / s, (upper[i] - c) / s);
      if (pr < best_pr) { best_pr = pr; best = i; }
    }
    if (best != j) {
      sig.row(j).swap(sig.row(best));
      sig.col(j).swap(sig.col(best));
      L.row(j).swap(L.row(best));
      std::swap(lower[j], lower[best]);
      std::swap(upper[j], upper[best]);
      std::swap(out.perm[j], out.perm[best]);
    }
    double s2 = sig(j, j) - L.row(j).head(j).squaredNorm();
    if (s2 < -1e-8 * scale)
      throw NotPositiveDefinite("covariance is not positive semidefinite (pivot " +
                                std::to_string(s2) + " at step " + std::to_string(j) + ")");
    L(j, j) = std::sqrt(std::max(s2, clamp));
    for (Eigen::Index i = j + 1; i < n; ++i)
      L(i, j) = (sig(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    double c = j > 0 ? L.row(j).head(j).dot(z.head(j)) : 0.0;
    z[j] = trunc_norm_mean((lower[j] - c) / L(j, j), (upper[j] - c) / L(j, j));
  }
  out.L = std::move(L);
  out.lower = std::move(lower);
  out.upper = std::move(upper);
  return out;
}

// Prepared sequential system in scaled coordinates: constraints read
// lower_k <= z_k + sum_{j<k} Ls(k,j) z_j <= upper_k with z standard normal.
struct TiltedSystem {
  Matrix Lfull;                    // unscaled permuted factor, draws map back via Lfull * z
  Matrix Ls;                       // strictly lower part of the row-scaled factor
  Vector lower, upper;             // scaled permuted limits
  std::vector<Eigen::Index> perm;
  Vector mu;                       // tilting shifts, last entry always 0
  double psi_star = 0.0;           // saddle value; envelope constant for the sampler
  bool tilt_fallback = false;
  Eigen::Index n = 0;
};

struct PsiParts {
  Vector lt, ut, w, pl, pu, P, dP;
};

// Interval terms at proposal shifts mu and path x (x enters through the
// running partial sums). Quantities follow the stable exp(logpdf - logint)
// form so nothing cancels in the tails.
inline PsiParts psi_parts(const TiltedSystem& sys, const Vector& x, const Vector& mu) {
  const Eigen::Index n = sys.n;
  PsiParts ps;
  ps.lt.resize(n); ps.ut.resize(n); ps.w.resize(n);
  ps.pl.resize(n); ps.pu.resize(n); ps.P.resize(n); ps.dP.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double c = k > 0 ? sys.Ls.row(k).head(k).dot(x.head(k)) : 0.0;
    double lt = sys.lower[k] - mu[k] - c;
    double ut = sys.upper[k] - mu[k] - c;
    double w = log_norm_interval(lt, ut);
    double pl = (lt == -kInf) ? 0.0 : std::exp(norm_logpdf(lt) - w);
    double pu = (ut == kInf) ? 0.0 : std::exp(norm_logpdf(ut) - w);
    double ltc = std::isinf(lt) ? 0.0 : lt;
    double utc = std::isinf(ut) ? 0.0 : ut;
    ps.lt[k] = lt; ps.ut[k] = ut; ps.w[k] = w;
    ps.pl[k] = pl; ps.pu[k] = pu;
    ps.P[k] = pl - pu;
    ps.dP[k] = -ps.P[k] * ps.P[k] + ltc * pl - utc * pu;
  }
  return ps;
}

inline double psi_value(const TiltedSystem& sys, const Vector& x, const Vector& mu) {
  PsiParts ps = psi_parts(sys, x, mu);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < sys.n; ++k)
    acc += ps.w[k] + 0.5 * mu[k] * mu[k] - mu[k] * x[k];
  return acc;
}

// Stationarity system of the minimax tilting problem in the 2(n-1) unknowns
// (x, mu); the final coordinate is pinned at zero. Returns sup-norm of the
// gradient through *gnorm.
inline Vector saddle_gradient(const TiltedSystem& sys, const Vector& y, double* gnorm,
                              Matrix* jac = nullptr) {
  const Eigen::Index n = sys.n;
  const Eigen::Index m = n - 1;
  Vector x = Vector::Zero(n), mu = Vector::Zero(n);
  x.head(m) = y.head(m);
  mu.head(m) = y.tail(m);
  PsiParts ps = psi_parts(sys, x, mu);
  Vector g(2 * m);
  for (Eigen::Index j = 0; j < m; ++j) {
    double acc = -mu[j];
    for (Eigen::Index k = j + 1; k < n; ++k) acc += ps.P[k] * sys.Ls(k, j);
    g[j] = acc;
  }
  for (Eigen::Index k = 0; k < m; ++k) g[m + k] = mu[k] - x[k] + ps.P[k];
  *gnorm = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
  if (jac) {
    Matrix J = Matrix::Zero(2 * m, 2 * m);
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < m; ++i) {
        double acc = 0.0;
        for (Eigen::Index k = std::max(i, j) + 1; k < n; ++k)
          acc += sys.Ls(k, j) * ps.dP[k] * sys.Ls(k, i);
        J(j, i) = acc;
      }
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index k = 0; k < m; ++k) {
        double v = ps.dP[k] * sys.Ls(k, j) - (j == k ? 1.0 : 0.0);
        J(j, m + k) = v;   // d g_x[j] / d mu[k]
        J(m + k, j) = v;   // d g_mu[k] / d x[j]
      }
    for (Eigen::Index k = 0; k < m; ++k) J(m + k, m + k) = 1.0 + ps.dP[k];
    *jac = std::move(J);
  }
  return g;
}

inline bool newton_solve(const TiltedSystem& sys, Vector& y) {
  const Eigen::Index m = sys.n - 1;
  if (m <= 0) return true;
  double gnorm = 0.0;
  Matrix J;
  Vector g = saddle_gradient(sys, y, &gnorm, &J);
  for (int it = 0; it < 100; ++it) {
    if (gnorm <= 1e-8) return true;
    Eigen::PartialPivLU<Matrix> lu(J);
    Vector step = lu.solve(g);
    if (!step.allFinite()) return false;
    double lambda = 1.0;
    bool improved = false;
    for (int half = 0; half < 12; ++half) {
      Vector trial = y - lambda * step;
      double tnorm = 0.0;
      Matrix Jt;
      Vector gt = saddle_gradient(sys, trial, &tnorm, &Jt);
      if (std::isfinite(tnorm) && tnorm < gnorm) {
        y = trial; g = gt; J = Jt; gnorm = tnorm;
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) return false;
  }
  return gnorm <= 1e-8;
}

// Untilted envelope: maximize the sequential log-weight over the path alone.
// Concave whenever each coordinate is one-sidedly truncated, which covers
// both consumers; used when the joint saddle solve does not converge.
inline bool newton_solve_path_only(const TiltedSystem& sys, Vector& x_out) {
  const Eigen::Index n = sys.n;
  const Eigen::Index m = n - 1;
  Vector x = Vector::Zero(n);
  const Vector mu = Vector::Zero(n);
  if (m <= 0) { x_out = x; return true; }
  auto grad = [&](const Vector& xv, double* gn, Matrix* H) {
    PsiParts ps = psi_parts(sys, xv, mu);
    Vector g(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = j + 1; k < n; ++k) acc += ps.P[k] * sys.Ls(k, j);
      g[j] = acc;
    }
    *gn = g.cwiseAbs().maxCoeff();
    if (H) {
      Matrix Hm = Matrix::Zero(m, m);
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < m; ++i) {
          double acc = 0.0;
          for (Eigen::Index k = std::max(i, j) + 1; k < n; ++k)
            acc += sys.Ls(k, j) * ps.dP[k] * sys.Ls(k, i);
          Hm(j, i) = acc;
        }
      Hm.diagonal().array() -= 1e-12;
      *H = std::move(Hm);
    }
    return g;
  };
  double gnorm = 0.0;
  Matrix H;
  Vector g = grad(x, &gnorm, &H);
  for (int it = 0; it < 100; ++it) {
    if (gnorm <= 1e-8) { x_out = x; return true; }
    Eigen::PartialPivLU<Matrix> lu(H);
    Vector step = lu.solve(g);
    if (!step.allFinite()) return false;
    double lambda = 1.0;
    bool improved = false;
    for (int half = 0; half < 12; ++half) {
      Vector trial = x;
      trial.head(m) -= lambda * step;
      double tnorm = 0.0;
      Matrix Ht;
      Vector gt = grad(trial, &tnorm, &Ht);
      if (std::isfinite(tnorm) && tnorm < gnorm) {
        x = trial; g = gt; H = Ht; gnorm = tnorm;
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) return false;
  }
  if (gnorm <= 1e-8) { x_out = x; return true; }
  return false;
}

inline TiltedSystem prepare_box(const Matrix& cov, const Vector& lower, const Vector& upper) {
  const Eigen::Index n = cov.rows();
  TiltedSystem sys;
  sys.n = n;
  OrderedChol oc = reorder_cholesky(0.5 * (cov + cov.transpose()), lower, upper);
  sys.Lfull = std::move(oc.L);
  sys.perm = std::move(oc.perm);
  Vector d = sys.Lfull.diagonal();
  sys.lower = oc.lower.cwiseQuotient(d);
  sys.upper = oc.upper.cwiseQuotient(d);
  sys.Ls = d.array().inverse().matrix().asDiagonal() * sys.Lfull;
  sys.Ls.diagonal().setZero();
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i) sys.Ls(i, j) = 0.0;

  sys.mu = Vector::Zero(n);
  const Eigen::Index m = n - 1;
  if (m > 0) {
    Vector y = Vector::Zero(2 * m);
    if (newton_solve(sys, y)) {
      sys.mu.head(m) = y.tail(m);
      Vector x = Vector::Zero(n);
      x.head(m) = y.head(m);
      sys.psi_star = psi_value(sys, x, sys.mu);
      return sys;
    }
    sys.tilt_fallback = true;
    Vector x;
    if (newton_solve_path_only(sys, x)) {
      sys.psi_star = psi_value(sys, x, sys.mu);
    } else {
      // last resort: the envelope at the conditional-mean path; only used to
      // flag, never silently wrong, because the sampler re-checks acceptance
      sys.psi_star = kInf;
    }
    return sys;
  }
  sys.psi_star = log_norm_interval(sys.lower[0], sys.upper[0]);
  return sys;
}

// Tilted separation-of-variables weight along one lattice point. Draws the
// first n-1 scaled coordinates by inverse CDF; the final interval term needs
// no draw.
inline double sov_log_weight(const TiltedSystem& sys, const double* u, Vector& zbuf) {
  const Eigen::Index n = sys.n;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    double c = k > 0 ? sys.Ls.row(k).head(k).dot(zbuf.head(k)) : 0.0;
    double lt = sys.lower[k] - sys.mu[k] - c;
    double ut = sys.upper[k] - sys.mu[k] - c;
    double w = log_norm_interval(lt, ut);
    if (w == -kInf) return -kInf;
    acc += w;
    if (k < n - 1) {
      double zk = sys.mu[k] + trunc_norm_quantile(u[k], lt, ut);
      acc += 0.5 * sys.mu[k] * sys.mu[k] - sys.mu[k] * zk;
      zbuf[k] = zk;
    }
  }
  return acc;
}

struct ReplicateState {
  Vector shift;
  double lse_max = -kInf;
  double lse_sum = 0.0;
  std::size_t count = 0;

  void add(double v) {
    ++count;
    if (v == -kInf) return;
    if (v <= lse_max) {
      lse_sum += std::exp(v - lse_max);
    } else {
      lse_sum = lse_sum * std::exp(lse_max - v) + 1.0;
      lse_max = v;
    }
  }
  double log_mean() const {
    if (count == 0 || lse_sum == 0.0) return -kInf;
    return lse_max + std::log(lse_sum) - std::log(static_cast<double>(count));
  }
};

struct QmcOptions {
  double accuracy = 1e-4;
  std::size_t max_points = 2000000;
  int replicates = 12;
  std::size_t start_points = 256;
  bool parallel = true;
};

inline OrthantEstimate qmc_log_prob(const TiltedSystem& sys, const QmcOptions& opt,
                                    std::uint64_t seed) {
  OrthantEstimate est;
  est.tilt_fallback = sys.tilt_fallback;
  if (sys.n == 1) {
    est.log_value = sys.psi_star;
    est.rel_error = 0.0;
    est.points_used = 0;
    return est;
  }
  const int dim = static_cast<int>(sys.n) - 1;
  const std::vector<double> q = lattice_generators(dim);
  const int reps = std::max(2, opt.replicates);

  std::vector<ReplicateState> states(reps);
  for (int r = 0; r < reps; ++r) {
    Rng rng(seed, 0x9d2c5680u, static_cast<std::uint64_t>(r));
    states[r].shift.resize(dim);
    for (int j = 0; j < dim; ++j) states[r].shift[j] = rng.uniform();
  }

  std::size_t n_per_rep = opt.start_points;
  std::size_t done_per_rep = 0;

  auto extend = [&](std::size_t from, std::size_t to) {
    // thread spawns cost more than small chunks do; stay serial until the
    // extension is worth distributing (results are identical either way)
    const std::size_t work = (to - from) * static_cast<std::size_t>(reps) *
                             static_cast<std::size_t>(dim);
    const bool spread = opt.parallel && work >= 100000;
    parallel_for(static_cast<std::size_t>(reps), [&](std::size_t r) {
      ReplicateState& st = states[r];
      Vector zbuf(sys.n);
      std::vector<double> uloc(dim);
      for (std::size_t i = from; i < to; ++i) {
        double idx = static_cast<double>(i + 1);
        for (int j = 0; j < dim; ++j) {
          double v = idx * q[j] + st.shift[j];
          uloc[j] = v - std::floor(v);
          if (uloc[j] <= 0.0) uloc[j] = 1e-16;
          if (uloc[j] >= 1.0) uloc[j] = 1.0 - 1e-16;
        }
        st.add(sov_log_weight(sys, uloc.data(), zbuf));
      }
    }, spread ? 0 : 1);
  };

  double rel = kInf;
  double log_value = -kInf;
  while (true) {
    extend(done_per_rep, n_per_rep);
    done_per_rep = n_per_rep;

    double lmax = -kInf;
    for (auto& st : states) lmax = std::max(lmax, st.log_mean());
    if (lmax == -kInf) {
      est.log_value = -kInf;
      est.rel_error = 0.0;
      est.points_used = done_per_rep * reps;
      return est;
    }
    double mean = 0.0;
    for (auto& st : states) mean += std::exp(st.log_mean() - lmax);
    mean /= reps;
    double var = 0.0;
    for (auto& st : states) {
      double d = std::exp(st.log_mean() - lmax) - mean;
      var += d * d;
    }
    var /= (reps - 1);
    rel = std::sqrt(var / reps) / mean;
    log_value = lmax + std::log(mean);

    if (rel <= opt.accuracy) break;
    if (done_per_rep * reps * 2 > opt.max_points) {
      est.budget_exhausted = true;
      break;
    }
    n_per_rep *= 2;
  }
  est.log_value = log_value;
  est.rel_error = rel;
  est.points_used = done_per_rep * reps;
  return est;
}

// Connected components of the off-diagonal sparsity pattern. Independent
// blocks multiply, singletons reduce to the exact scalar CDF; this is also
// what makes ratios of structurally nested problems cancel exactly.
inline std::vector<std::vector<Eigen::Index>> independence_blocks(const Matrix& cov) {
  const Eigen::Index n = cov.rows();
  std::vector<int> comp(n, -1);
  std::vector<std::vector<Eigen::Index>> blocks;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (comp[i] >= 0) continue;
    std::vector<Eigen::Index> stack{i}, members;
    comp[i] = static_cast<int>(blocks.size());
    while (!stack.empty()) {
      Eigen::Index k = stack.back();
      stack.pop_back();
      members.push_back(k);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (comp[j] >= 0 || j == k) continue;
        double tol = 1e-14 * std::sqrt(std::max(cov(k, k) * cov(j, j), 1e-300));
        if (std::fabs(cov(k, j)) > tol) {
          comp[j] = comp[i];
          stack.push_back(j);
        }
      }
    }
    std::sort(members.begin(), members.end());
    blocks.push_back(std::move(members));
  }
  std::sort(blocks.begin(), blocks.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return blocks;
}

inline OrthantEstimate box_log_prob(const Matrix& cov, const Vector& lower, const Vector& upper,
                                    const QmcOptions& opt, std::uint64_t seed) {
  TiltedSystem sys = prepare_box(cov, lower, upper);
  return qmc_log_prob(sys, opt, seed);
}

} // namespace detail

// log Phi_n(upper; cov) for a zero-mean Gaussian. Deterministic given the
// seed; rel_error is the replicate-spread standard error of the estimate.
inline OrthantEstimate phi_n(const OrthantProblem& prob, std::uint64_t seed = kDefaultSeed,
                             bool parallel = true) {
  const Eigen::Index n = prob.cov.rows();
  if (n != prob.cov.cols())
    throw DimensionMismatch("phi_n: covariance must be square");
  if (prob.upper.size() != n)
    throw DimensionMismatch("phi_n: upper limit length " + std::to_string(prob.upper.size()) +
                            " does not match dimension " + std::to_string(n));
  if (!(prob.accuracy > 0.0) || prob.accuracy > 0.1)
    throw InvalidParams("phi_n: accuracy must lie in (0, 0.1]");
  OrthantEstimate total;
  if (n == 0) return total;

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(prob.cov(i, i) > 0.0))
      throw NotPositiveDefinite("phi_n: nonpositive variance at coordinate " + std::to_string(i));
    if (prob.upper[i] == -kInf) {
      total.log_value = -kInf;
      return total;
    }
  }

  // +inf limits integrate out exactly: keep the finite face only
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (prob.upper[i] != kInf) keep.push_back(i);
  if (keep.empty()) return total;

  Matrix cov(keep.size(), keep.size());
  Vector upper(keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a) {
    upper[a] = prob.upper[keep[a]];
    for (std::size_t b = 0; b < keep.size(); ++b) cov(a, b) = prob.cov(keep[a], keep[b]);
  }

  detail::QmcOptions opt;
  opt.accuracy = prob.accuracy;
  opt.max_points = prob.max_points;
  opt.replicates = prob.replicates;
  opt.parallel = parallel;

  auto blocks = detail::independence_blocks(cov);
  double rel2 = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& idx = blocks[b];
    if (idx.size() == 1) {
      Eigen::Index i = idx[0];
      total.log_value += norm_logcdf(upper[i] / std::sqrt(cov(i, i)));
      continue;
    }
    Matrix c(idx.size(), idx.size());
    Vector u(idx.size()), l(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
      u[a] = upper[idx[a]];
      l[a] = -kInf;
      for (std::size_t bb = 0; bb < idx.size(); ++bb) c(a, bb) = cov(idx[a], idx[bb]);
    }
    OrthantEstimate be =
        detail::box_log_prob(c, l, u, opt, derive_seed(seed, 0xb10cULL, b));
    total.log_value += be.log_value;
    rel2 += be.rel_error * be.rel_error;
    total.points_used += be.points_used;
    total.budget_exhausted = total.budget_exhausted || be.budget_exhausted;
    total.tilt_fallback = total.tilt_fallback || be.tilt_fallback;
    if (total.log_value == -kInf) break;
  }
  total.rel_error = std::sqrt(rel2);
  total.log_value = std::min(total.log_value, 0.0);
  return total;
}

// Independent problems, each evaluated exactly as a lone phi_n call with the
// same seed would be; the batch only adds fan-out.
inline std::vector<OrthantEstimate> phi_n_batch(const std::vector<OrthantProblem>& problems,
                                                std::uint64_t seed = kDefaultSeed) {
  std::vector<OrthantEstimate> out(problems.size());
  detail::parallel_for(problems.size(),
                       [&](std::size_t i) { out[i] = phi_n(problems[i], seed, false); });
  return out;
}

} // namespace sunprobit

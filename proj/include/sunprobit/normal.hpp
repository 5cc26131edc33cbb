#pragma once

#include <cmath>
#include <limits>

// Scalar normal kernels. Everything downstream (orthant probabilities,
// truncated sampling, Gibbs) leans on these staying accurate far into the
// tails, so they are written in log space with explicit branch switches
// instead of naive Phi arithmetic.

namespace sunprobit {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;
inline constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

inline double norm_logpdf(double x) {
  if (std::isinf(x)) return -kInf;
  return -0.5 * x * x - kLogSqrt2Pi;
}

inline double norm_pdf(double x) { return std::exp(norm_logpdf(x)); }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

// log Phi(x), accurate over the whole double range. erfc holds to x ~ -37;
// past that the usual tail expansion takes over.
inline double norm_logcdf(double x) {
  if (x > -37.0) return std::log(0.5 * std::erfc(-x * kInvSqrt2));
  double zi = 1.0 / (x * x);
  double series = 1.0 + zi * (-1.0 + zi * (3.0 + zi * (-15.0 + zi * 105.0)));
  return -0.5 * x * x - std::log(-x) - kLogSqrt2Pi + std::log(series);
}

// log P(a < Z < b) for a < b, either side possibly infinite. Shifts to the
// better-conditioned tail before differencing, so the result keeps relative
// accuracy even when both endpoints sit far out.
inline double log_norm_interval(double a, double b) {
  if (!(a < b)) return -kInf;
  if (a == -kInf && b == kInf) return 0.0;
  if (a > 0.0) {
    double la = norm_logcdf(-a);
    double lb = norm_logcdf(-b);
    return la + std::log1p(-std::exp(lb - la));
  }
  if (b < 0.0) {
    double lb = norm_logcdf(b);
    double la = norm_logcdf(a);
    return lb + std::log1p(-std::exp(la - lb));
  }
  // straddles zero: 1 - Phi(-b)... - Phi(a), both pieces <= 1/2
  double upper_miss = 0.5 * std::erfc(b * kInvSqrt2);
  double lower_miss = 0.5 * std::erfc(-a * kInvSqrt2);
  return std::log1p(-(upper_miss + lower_miss));
}

// E[Z | a < Z < b] for a standard normal, stable for far-out intervals.
inline double trunc_norm_mean(double a, double b) {
  double lw = log_norm_interval(a, b);
  double pa = (a == -kInf) ? 0.0 : std::exp(norm_logpdf(a) - lw);
  double pb = (b == kInf) ? 0.0 : std::exp(norm_logpdf(b) - lw);
  return pa - pb;
}

// Wichura's PPND16 rational approximations; good to ~1e-15 over (0,1).
inline double norm_quantile(double p) {
  if (!(p > 0.0)) return -kInf;
  if (!(p < 1.0)) return kInf;
  double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    double num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                       6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                     1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                   1.3314166789178437745e2) * r + 3.3871328727963666080e0);
    double den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                       3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                     5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                   4.2313330701600911252e1) * r + 1.0);
    return q * num / den;
  }
  r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    double num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                       2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                     3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                   4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    double den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                       1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                     6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                   2.05319162663775882187e0) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    double num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                       1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                     2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                   5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    double den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                       1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                     1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                   5.99832206555887937690e-1) * r + 1.0);
    val = num / den;
  }
  return (q < 0.0) ? -val : val;
}

// Inverse of norm_logcdf: the z with log Phi(z) = lp. Needed where the
// probability itself underflows. Newton on the log-CDF, which is concave, so
// the iteration is tame from the tail-side start.
inline double norm_quantile_logp(double lp) {
  if (lp >= 0.0) return kInf;
  if (lp == -kInf) return -kInf;
  if (lp > -15.0) return norm_quantile(std::exp(lp));
  double z = -std::sqrt(-2.0 * lp);
  for (int it = 0; it < 64; ++it) {
    double f = norm_logcdf(z) - lp;
    double step = f * std::exp(norm_logcdf(z) - norm_logpdf(z));
    z -= step;
    if (std::fabs(step) < 1e-13 * std::max(1.0, std::fabs(z))) break;
  }
  return z;
}

// Quantile of a standard normal truncated to (a,b), evaluated at w in (0,1).
// Routed through whichever tail representation keeps the interpolation exact.
inline double trunc_norm_quantile(double w, double a, double b) {
  if (a == -kInf && b == kInf) return norm_quantile(w);
  if (a >= 0.0) {
    // both bounds in the upper tail: interpolate survival probabilities
    double la = norm_logcdf(-a);
    double lb = (b == kInf) ? -kInf : norm_logcdf(-b);
    double hi = std::log1p(-w) + la;
    double lo = std::log(w) + lb;
    double m = std::max(hi, lo);
    double ls = m + std::log(std::exp(hi - m) + std::exp(lo - m));
    return -norm_quantile_logp(ls);
  }
  if (b <= 0.0) {
    double lb = norm_logcdf(b);
    double la = (a == -kInf) ? -kInf : norm_logcdf(a);
    double hi = std::log(w) + lb;
    double lo = std::log1p(-w) + la;
    double m = std::max(hi, lo);
    double ls = m + std::log(std::exp(hi - m) + std::exp(lo - m));
    return norm_quantile_logp(ls);
  }
  // interval straddles zero, probabilities are moderate
  double pa = (a == -kInf) ? 0.0 : norm_cdf(a);
  double pb = (b == kInf) ? 1.0 : norm_cdf(b);
  return norm_quantile(pa + w * (pb - pa));
}

} // namespace sunprobit

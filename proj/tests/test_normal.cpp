#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "sunprobit/normal.hpp"

using namespace sunprobit;

// log Phi(-x) for x > 0 through the Mills-ratio continued fraction in long
// double; reference for the deep-tail branches.
static long double mills_logcdf_neg(long double x) {
  long double r = 0.0L;
  for (int k = 220; k >= 1; --k) r = static_cast<long double>(k) / (x + r);
  r = 1.0L / (x + r);
  return -0.5L * x * x - 0.91893853320467274178032973640562L + std::log(r);
}

TEST_CASE("normal cdf basics") {
  CHECK(norm_cdf(0.0) == 0.5);
  CHECK(norm_cdf(1.959963984540054) == Catch::Approx(0.975).epsilon(1e-12));
  for (double x : {0.1, 0.7, 1.3, 2.9, 4.5})
    CHECK(norm_cdf(x) + norm_cdf(-x) == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("log cdf matches Mills continued fraction far out") {
  for (double x : {-5.0, -10.0, -20.0, -30.0, -36.5, -37.5, -40.0, -60.0, -100.0, -200.0}) {
    double ref = static_cast<double>(mills_logcdf_neg(-static_cast<long double>(x)));
    CHECK(norm_logcdf(x) == Catch::Approx(ref).epsilon(5e-13));
  }
  // continuity across the branch switch
  CHECK(norm_logcdf(-37.0 - 1e-9) ==
        Catch::Approx(norm_logcdf(-37.0 + 1e-9)).epsilon(1e-9));
  CHECK(norm_logcdf(0.0) == Catch::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(norm_logcdf(40.0) == Catch::Approx(0.0).margin(1e-300));
}

TEST_CASE("interval probability in log space") {
  CHECK(log_norm_interval(-1.0, 1.0) ==
        Catch::Approx(std::log(0.6826894921370859)).epsilon(1e-12));
  CHECK(log_norm_interval(-kInf, 1.3) == Catch::Approx(norm_logcdf(1.3)).epsilon(1e-15));
  CHECK(log_norm_interval(-0.4, kInf) == Catch::Approx(norm_logcdf(0.4)).epsilon(1e-12));
  CHECK(log_norm_interval(2.0, 1.0) == -kInf);
  CHECK(log_norm_interval(-40.0, 40.0) == Catch::Approx(0.0).margin(1e-200));

  // tail interval against long double reference
  long double la = mills_logcdf_neg(10.0L), lb = mills_logcdf_neg(11.0L);
  long double ref = la + std::log(1.0L - std::exp(lb - la));
  CHECK(log_norm_interval(10.0, 11.0) ==
        Catch::Approx(static_cast<double>(ref)).epsilon(1e-12));
  // mirror symmetry
  CHECK(log_norm_interval(-11.0, -10.0) ==
        Catch::Approx(log_norm_interval(10.0, 11.0)).epsilon(1e-14));
  // far tail stays finite and ordered
  double deep = log_norm_interval(38.0, 39.0);
  CHECK(std::isfinite(deep));
  CHECK(deep < log_norm_interval(37.0, 38.0));
}

TEST_CASE("truncated normal mean") {
  CHECK(trunc_norm_mean(0.0, kInf) == Catch::Approx(0.7978845608028654).epsilon(1e-12));
  double ref2 = oracle::phi(2.0) / (1.0 - oracle::Phi(2.0));
  CHECK(trunc_norm_mean(2.0, kInf) == Catch::Approx(ref2).epsilon(1e-11));
  // deep truncation: mean = 1 / Mills(40)
  long double r = 0.0L;
  for (int k = 220; k >= 1; --k) r = static_cast<long double>(k) / (40.0L + r);
  r = 1.0L / (40.0L + r);
  CHECK(trunc_norm_mean(40.0, kInf) ==
        Catch::Approx(static_cast<double>(1.0L / r)).epsilon(1e-12));
  CHECK(trunc_norm_mean(-1.5, 1.5) == Catch::Approx(0.0).margin(1e-15));
  double mass = oracle::Phi(0.5) - oracle::Phi(-1.0);
  double num = oracle::integrate([](double x) { return x * oracle::phi(x); }, -1.0, 0.5);
  CHECK(trunc_norm_mean(-1.0, 0.5) == Catch::Approx(num / mass).epsilon(1e-10));
}

TEST_CASE("normal quantile") {
  CHECK(norm_quantile(0.5) == 0.0);
  CHECK(norm_quantile(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-13));
  for (double p : {1e-12, 1e-6, 0.013, 0.3, 0.5, 0.77, 0.9999, 1.0 - 1e-10}) {
    double q = norm_quantile(p);
    CHECK(norm_cdf(q) == Catch::Approx(p).epsilon(1e-10));
    CHECK(norm_quantile(1.0 - p) == Catch::Approx(-q).margin(1e-11));
  }
  CHECK(norm_quantile(0.0) == -kInf);
  CHECK(norm_quantile(1.0) == kInf);
}

TEST_CASE("quantile from log probability") {
  for (double lp : {-0.2, -2.0, -14.5, -15.5, -40.0, -1e2, -1e3, -1e5}) {
    double z = norm_quantile_logp(lp);
    CHECK(norm_logcdf(z) == Catch::Approx(lp).epsilon(1e-10));
  }
  CHECK(norm_quantile_logp(-kInf) == -kInf);
}

TEST_CASE("truncated quantile round trips through the interval CDF") {
  const double grid_w[] = {1e-10, 1e-4, 0.25, 0.5, 0.75, 1.0 - 1e-6};
  const double bounds[][2] = {{-kInf, kInf}, {0.0, kInf},  {-2.0, 1.0}, {5.0, kInf},
                              {38.0, kInf},  {5.0, 6.0},   {-kInf, -38.0}, {-6.0, -5.0},
                              {-0.3, 0.2}};
  for (const auto& ab : bounds) {
    double a = ab[0], b = ab[1];
    double prev = -kInf;
    for (double w : grid_w) {
      double x = trunc_norm_quantile(w, a, b);
      CHECK(x >= prev);
      prev = x;
      if (a != -kInf) CHECK(x >= a - 1e-9 * std::max(1.0, std::fabs(a)));
      if (b != kInf) CHECK(x <= b + 1e-9 * std::max(1.0, std::fabs(b)));
      double num = log_norm_interval(a, std::min(x, b));
      double den = log_norm_interval(a, b);
      double cdf = std::exp(num - den);
      CHECK(cdf == Catch::Approx(w).epsilon(1e-7).margin(1e-11));
    }
  }
  // half-normal identity
  for (double w : {0.1, 0.5, 0.9})
    CHECK(trunc_norm_quantile(w, 0.0, kInf) ==
          Catch::Approx(norm_quantile(0.5 + 0.5 * w)).epsilon(1e-12));
}

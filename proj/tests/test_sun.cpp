#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sunprobit/sun.hpp"

using namespace sunprobit;

namespace {

// well-conditioned random parameters: carve a (p+n) correlation matrix into
// the latent/observed blocks, so the joint restriction holds by construction
SunParams random_sun(std::mt19937_64& gen, int p, int n) {
  Matrix big = oracle::random_correlation(gen, p + n);
  Matrix gamma_mat = big.topLeftCorner(n, n);
  Matrix delta = big.bottomLeftCorner(p, n);
  Matrix corr = big.bottomRightCorner(p, p);
  std::uniform_real_distribution<double> us(0.6, 1.8), ux(-1.0, 1.0);
  Vector w(p), xi(p), gamma(n);
  for (int i = 0; i < p; ++i) w[i] = us(gen);
  for (int i = 0; i < p; ++i) xi[i] = ux(gen);
  for (int i = 0; i < n; ++i) gamma[i] = ux(gen);
  Matrix omega = w.asDiagonal() * corr * w.asDiagonal();
  return SunParams(xi, omega, delta, gamma, gamma_mat);
}

SunParams lemma_case() {
  // unit Gaussian prior updated by one positive response at x = 1
  Matrix delta(1, 1);
  delta << 1.0 / std::sqrt(2.0);
  return SunParams(Vector::Zero(1), Matrix::Identity(1, 1), delta, Vector::Zero(1),
                   Matrix::Identity(1, 1));
}

SunParams gaussian_case(std::mt19937_64& gen, int p, int n) {
  SunParams s = random_sun(gen, p, n);
  return SunParams(s.xi(), s.omega(), Matrix::Zero(p, n), s.gamma(), s.gamma_mat());
}

double gauss_logpdf(const Vector& z, const Vector& xi, const Matrix& omega) {
  Eigen::LLT<Matrix> llt(omega);
  Matrix L = llt.matrixL();
  Vector w = L.triangularView<Eigen::Lower>().solve(z - xi);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += std::log(L(i, i));
  return -0.5 * w.squaredNorm() - logdet -
         0.918938533204672741780329736405617639 * static_cast<double>(z.size());
}

} // namespace

TEST_CASE("construction validates the joint correlation restriction") {
  std::mt19937_64 gen(1);
  SunParams ok = random_sun(gen, 2, 2);
  CHECK(ok.p() == 2);
  CHECK(ok.n() == 2);

  // |delta| = 1 collapses the joint matrix
  Matrix delta(1, 1);
  delta << 1.0;
  CHECK_THROWS_AS(SunParams(Vector::Zero(1), Matrix::Identity(1, 1), delta, Vector::Zero(1),
                            Matrix::Identity(1, 1)),
                  InvalidParams);

  // non-unit diagonal in the latent correlation
  Matrix gbad(1, 1);
  gbad << 1.4;
  CHECK_THROWS_AS(SunParams(Vector::Zero(1), Matrix::Identity(1, 1), Matrix::Zero(1, 1),
                            Vector::Zero(1), gbad),
                  InvalidParams);

  CHECK_THROWS_AS(SunParams(Vector::Zero(2), Matrix::Identity(1, 1), Matrix::Zero(1, 0),
                            Vector(0), Matrix(0, 0)),
                  DimensionMismatch);
}

TEST_CASE("zero skewness collapses the density to the Gaussian") {
  std::mt19937_64 gen(2);
  SunParams s = gaussian_case(gen, 2, 2);
  for (double a : {-1.3, 0.0, 0.9}) {
    Vector z = s.xi().array() + a;
    double got = sun_log_density(s, z);
    CHECK(got == Catch::Approx(gauss_logpdf(z, s.xi(), s.omega())).epsilon(1e-12));
  }
}

TEST_CASE("unit posterior density lands on the normal value at the origin") {
  SunParams s = lemma_case();
  double got = sun_log_density(s, Vector::Zero(1));
  CHECK(got == Catch::Approx(std::log(0.3989422804014327)).epsilon(1e-14));
}

TEST_CASE("one dimensional skew case matches the classic skew normal") {
  for (double delta : {0.3, 0.7071067811865476, -0.5}) {
    Matrix d(1, 1);
    d << delta;
    SunParams s(Vector::Zero(1), Matrix::Identity(1, 1), d, Vector::Zero(1),
                Matrix::Identity(1, 1));
    double alpha = delta / std::sqrt(1.0 - delta * delta);
    for (double z = -3.0; z <= 3.0; z += 0.5) {
      double ref = 2.0 * oracle::phi(z) * oracle::Phi(alpha * z);
      CHECK(std::exp(sun_log_density(s, Vector::Constant(1, z))) ==
            Catch::Approx(ref).margin(1e-6));
    }
  }
}

TEST_CASE("density integrates to one") {
  std::mt19937_64 gen(3);
  // pointwise CDF accuracy well under the mass tolerance, but not so tight
  // that every grid node pays for precision the integral cannot see
  CdfAccuracy cfg{3e-5, 4000000, 12};
  const int dims[4][2] = {{1, 1}, {1, 3}, {2, 1}, {2, 2}};
  for (auto [p, n] : dims) {
    SunParams s = random_sun(gen, p, n);
    if (p == 1) {
      double lo = s.xi()[0] - 10.0 * s.scale()[0], hi = s.xi()[0] + 10.0 * s.scale()[0];
      double mass = oracle::integrate(
          [&](double z) { return std::exp(sun_log_density(s, Vector::Constant(1, z), cfg)); },
          lo, hi, 1e-8);
      CHECK(mass == Catch::Approx(1.0).margin(1e-4));
    } else {
      oracle::QuadRule g1 = oracle::gauss_legendre(56, s.xi()[0] - 8.5 * s.scale()[0],
                                                   s.xi()[0] + 8.5 * s.scale()[0]);
      oracle::QuadRule g2 = oracle::gauss_legendre(56, s.xi()[1] - 8.5 * s.scale()[1],
                                                   s.xi()[1] + 8.5 * s.scale()[1]);
      double mass = 0.0;
      Vector z(2);
      for (int i = 0; i < 56; ++i)
        for (int j = 0; j < 56; ++j) {
          z << g1.x[i], g2.x[j];
          mass += g1.w[i] * g2.w[j] * std::exp(sun_log_density(s, z, cfg));
        }
      CHECK(mass == Catch::Approx(1.0).margin(1e-4));
    }
  }
}

TEST_CASE("log MGF basics and mean recovery") {
  std::mt19937_64 gen(4);
  SunParams s = random_sun(gen, 2, 2);
  CHECK(sun_log_mgf(s, Vector::Zero(2)) == 0.0);

  SunParams g = gaussian_case(gen, 2, 1);
  Vector t(2);
  t << 0.3, -0.7;
  double ref = g.xi().dot(t) + 0.5 * t.dot(g.omega() * t);
  CHECK(sun_log_mgf(g, t) == Catch::Approx(ref).epsilon(1e-12));

  // derivative of the log MGF at zero is the mean
  SunParams lem = lemma_case();
  double h = 1e-4;
  double fd = (sun_log_mgf(lem, Vector::Constant(1, h)) -
               sun_log_mgf(lem, Vector::Constant(1, -h))) /
              (2.0 * h);
  CHECK(fd == Catch::Approx(0.5641895835477563).margin(1e-4));

  // wider step and tighter tail accuracy keep quadrature noise out of the
  // central difference
  SunMeanEstimate mc = sun_mean_mc(s, 200000, 11u);
  CdfAccuracy tight{1e-7, 8000000, 12};
  double hs = 0.01;
  for (int j = 0; j < 2; ++j) {
    Vector e = Vector::Zero(2);
    e[j] = hs;
    double fd2 =
        (sun_log_mgf(s, e, tight) - sun_log_mgf(s, Vector(-e), tight)) / (2.0 * hs);
    CHECK(fd2 == Catch::Approx(mc.mean[j]).margin(3.0 * mc.se[j] + 5e-4));
  }
}

TEST_CASE("sampling matches the Gaussian special case and the unit posterior") {
  std::mt19937_64 gen(5);
  SunParams g = gaussian_case(gen, 2, 1);
  const std::size_t R = 100000;
  SunSampleBatch b = sun_sample(g, R, 17u);
  Vector mean = b.draws.colwise().mean();
  Matrix centered = b.draws.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / (static_cast<double>(R) - 1.0);
  for (int i = 0; i < 2; ++i) {
    double se = std::sqrt(g.omega()(i, i) / static_cast<double>(R));
    CHECK(mean[i] == Catch::Approx(g.xi()[i]).margin(4.0 * se));
    for (int j = 0; j < 2; ++j) {
      double sec = 2.0 * std::sqrt(g.omega()(i, i) * g.omega()(j, j) / static_cast<double>(R));
      CHECK(cov(i, j) == Catch::Approx(g.omega()(i, j)).margin(4.0 * sec));
    }
  }

  SunParams lem = lemma_case();
  SunSampleBatch lb = sun_sample(lem, R, 19u);
  double mu = 0.5641895835477563;
  double se = std::sqrt((1.0 - mu * mu) / static_cast<double>(R));
  CHECK(lb.draws.col(0).mean() == Catch::Approx(mu).margin(3.0 * se));
}

TEST_CASE("draws agree with the quadrature CDF of the density") {
  std::mt19937_64 gen(6);
  SunParams s = random_sun(gen, 1, 2);
  double lo = s.xi()[0] - 10.0 * s.scale()[0], hi = s.xi()[0] + 10.0 * s.scale()[0];
  // the KS comparison at R = 1e5 resolves ~1e-3, so a 1e-4 density suffices
  CdfAccuracy cfg{1e-4, 2000000, 12};
  oracle::GridCdf cdf = oracle::cdf_from_density(
      [&](double z) { return std::exp(sun_log_density(s, Vector::Constant(1, z), cfg)); }, lo,
      hi, 1500);
  SunSampleBatch b = sun_sample(s, 100000, 29u);
  std::vector<double> draws(b.draws.rows());
  for (Eigen::Index i = 0; i < b.draws.rows(); ++i) draws[i] = b.draws(i, 0);
  CHECK(oracle::ks_one_sample(draws, [&](double x) { return cdf(x); }) > 0.01);
}

TEST_CASE("marginalization closure") {
  std::mt19937_64 gen(7);
  SunParams s = random_sun(gen, 2, 1);

  SunParams full = sun_marginal(s, {0, 1});
  CHECK(full.xi().isApprox(s.xi(), 0.0));
  CHECK(full.delta().isApprox(s.delta(), 0.0));

  SunParams m0 = sun_marginal(s, {0});
  for (double z1 = -2.0; z1 <= 2.0; z1 += 0.8) {
    double direct = std::exp(sun_log_density(m0, Vector::Constant(1, z1)));
    double integrated = oracle::integrate(
        [&](double z2) {
          Vector z(2);
          z << z1, z2;
          return std::exp(sun_log_density(s, z));
        },
        s.xi()[1] - 10.0 * s.scale()[1], s.xi()[1] + 10.0 * s.scale()[1], 1e-8);
    CHECK(direct == Catch::Approx(integrated).margin(1e-4));
  }

  CHECK_THROWS_AS(sun_marginal(s, {}), IndexOutOfRange);
  CHECK_THROWS_AS(sun_marginal(s, {2}), IndexOutOfRange);
}

TEST_CASE("affine closure") {
  std::mt19937_64 gen(8);
  SunParams s = random_sun(gen, 2, 1);

  SunParams same = sun_affine(s, Vector::Zero(2), Matrix::Identity(2, 2));
  CHECK(same.xi().isApprox(s.xi(), 1e-14));
  CHECK(same.omega().isApprox(s.omega(), 1e-14));
  CHECK(same.delta().isApprox(s.delta(), 1e-14));

  SunParams g = gaussian_case(gen, 2, 1);
  Matrix A(2, 1);
  A << 0.7, -0.4;
  Vector a = Vector::Constant(1, 0.3);
  SunParams ga = sun_affine(g, a, A);
  CHECK(ga.xi()[0] == Catch::Approx(a[0] + A.col(0).dot(g.xi())).epsilon(1e-14));
  CHECK(ga.omega()(0, 0) == Catch::Approx(A.col(0).dot(g.omega() * A.col(0))).epsilon(1e-14));
  CHECK(ga.delta().isZero(1e-15));

  // distributional check under a nontrivial map
  SunParams sa = sun_affine(s, a, A);
  SunSampleBatch direct = sun_sample(s, 60000, 31u);
  SunSampleBatch mapped = sun_sample(sa, 60000, 57u);
  std::vector<double> u(direct.draws.rows()), v(mapped.draws.rows());
  for (Eigen::Index i = 0; i < direct.draws.rows(); ++i)
    u[i] = a[0] + direct.draws.row(i).dot(A.col(0));
  for (Eigen::Index i = 0; i < mapped.draws.rows(); ++i) v[i] = mapped.draws(i, 0);
  CHECK(oracle::ks_two_sample(u, v) > 0.01);

  Matrix bad = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(sun_affine(s, Vector::Zero(1), bad), RankDeficient);
}

TEST_CASE("conditioning closure") {
  std::mt19937_64 gen(9);
  SunParams s = random_sun(gen, 2, 1);

  SunParams same = sun_conditional(s, {}, Vector(0));
  CHECK(same.xi().isApprox(s.xi(), 0.0));

  // Gaussian case reduces to standard conditioning
  SunParams g = gaussian_case(gen, 2, 1);
  double v = 0.4;
  SunParams gc = sun_conditional(g, {0}, Vector::Constant(1, v));
  double mref = g.xi()[1] + g.omega()(1, 0) / g.omega()(0, 0) * (v - g.xi()[0]);
  double cref = g.omega()(1, 1) - g.omega()(1, 0) * g.omega()(0, 1) / g.omega()(0, 0);
  CHECK(gc.xi()[0] == Catch::Approx(mref).epsilon(1e-12));
  CHECK(gc.omega()(0, 0) == Catch::Approx(cref).epsilon(1e-12));

  // Bayes-ratio check on a grid
  double z1 = 0.6;
  SunParams cond = sun_conditional(s, {0}, Vector::Constant(1, z1));
  double marg = oracle::integrate(
      [&](double z2) {
        Vector z(2);
        z << z1, z2;
        return std::exp(sun_log_density(s, z));
      },
      s.xi()[1] - 10.0 * s.scale()[1], s.xi()[1] + 10.0 * s.scale()[1], 1e-9);
  for (double z2 = -1.5; z2 <= 1.5; z2 += 0.6) {
    Vector z(2);
    z << z1, z2;
    double joint = std::exp(sun_log_density(s, z));
    double got = std::exp(sun_log_density(cond, Vector::Constant(1, z2)));
    CHECK(got == Catch::Approx(joint / marg).margin(1e-4));
  }

  CHECK_THROWS_AS(sun_conditional(s, {5}, Vector::Constant(1, 0.0)), IndexOutOfRange);
}

TEST_CASE("Monte Carlo mean helper") {
  std::mt19937_64 gen(10);
  SunParams g = gaussian_case(gen, 2, 1);
  SunMeanEstimate est = sun_mean_mc(g, 50000, 41u);
  CHECK_FALSE(est.se_undefined);
  for (int j = 0; j < 2; ++j)
    CHECK(est.mean[j] == Catch::Approx(g.xi()[j]).margin(3.5 * est.se[j]));

  SunMeanEstimate one = sun_mean_mc(g, 1, 43u);
  CHECK(one.se_undefined);
  CHECK(std::isnan(one.se[0]));

  CHECK_THROWS_AS(sun_mean_mc(g, 0, 1u), ConfigError);
}

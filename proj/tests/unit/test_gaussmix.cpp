#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "psda/error.hpp"
#include "psda/gaussmix.hpp"

using namespace psda;

namespace {

Mat random_spd(int n, Rng& rng, double lo = 0.3, double hi = 2.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), s(lo, hi);
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = u(rng);
  Eigen::HouseholderQR<Mat> qr(a);
  const Mat q = qr.householderQ();
  Vec d(n);
  for (int i = 0; i < n; ++i) d[i] = s(rng);
  return q * d.asDiagonal() * q.transpose();
}

GaussianMixture random_gm(int m, int n, Rng& rng, double spread = 5.0) {
  std::uniform_real_distribution<double> u(-spread, spread), w(0.1, 1.0);
  std::vector<double> weights;
  std::vector<Gaussian> comps;
  for (int i = 0; i < m; ++i) {
    Vec mu(n);
    for (int d = 0; d < n; ++d) mu[d] = u(rng);
    comps.emplace_back(mu, random_spd(n, rng));
    weights.push_back(w(rng));
  }
  return GaussianMixture::normalized(weights, comps);
}

// Textbook density, written out independently of the library.
double naive_normal(const Vec& x, const Vec& mu, const Mat& cov) {
  const int n = static_cast<int>(x.size());
  const Vec d = x - mu;
  const double q = d.dot(cov.inverse() * d);
  return std::exp(-0.5 * q) / std::sqrt(std::pow(2.0 * std::numbers::pi, n) * cov.determinant());
}

Gaussian g1(double mu, double var) { return Gaussian(Vec::Constant(1, mu), Mat::Constant(1, 1, var)); }

}  // namespace

TEST_CASE("standard normal peak") {
  const GaussianMixture gm(Gaussian(Vec::Zero(2), Mat::Identity(2, 2)));
  CHECK(gm_pdf(gm, Vec::Zero(2)) == doctest::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("duplicated component leaves the density unchanged") {
  const Gaussian g(Vec::Constant(2, 1.0), Mat::Identity(2, 2) * 2.0);
  const GaussianMixture one(g), two({0.5, 0.5}, {g, g});
  for (double x : {-3.0, 0.0, 1.0, 4.5}) {
    const Vec p = Vec::Constant(2, x);
    CHECK(gm_pdf(two, p) == doctest::Approx(gm_pdf(one, p)).epsilon(1e-14));
  }
}

TEST_CASE("mixture density matches per-component summation") {
  Rng rng(3);
  const GaussianMixture gm = random_gm(3, 2, rng);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const Vec x = Eigen::Vector2d(-6.0 + 1.3 * i, -6.0 + 1.3 * j);
      double ref = 0.0;
      for (std::size_t u = 0; u < gm.size(); ++u) ref += gm.weight(u) * naive_normal(x, gm.component(u).mean(), gm.component(u).covariance());
      CHECK(std::abs(gm_pdf(gm, x) - ref) <= 1e-12);
    }
  }
}

TEST_CASE("density integrates to one") {
  SUBCASE("1-D") {
    const GaussianMixture gm({0.3, 0.7}, {g1(-2.0, 0.5), g1(3.0, 2.0)});
    const double lo = -2.0 - 8.0 * std::sqrt(0.5), hi = 3.0 + 8.0 * std::sqrt(2.0);
    const int n = 20000;
    const double h = (hi - lo) / n;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += gm_pdf(gm, Vec::Constant(1, lo + (i + 0.5) * h)) * h;
    CHECK(sum >= 0.999);
    CHECK(sum <= 1.001);
  }
  SUBCASE("2-D") {
    Rng rng(11);
    const GaussianMixture gm = random_gm(3, 2, rng, 2.0);
    const double lo = -2.0 - 8.0 * std::sqrt(2.0), hi = 2.0 + 8.0 * std::sqrt(2.0);
    const int n = 400;
    const double h = (hi - lo) / n;
    Mat pts(2, n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) pts.col(i * n + j) << lo + (i + 0.5) * h, lo + (j + 0.5) * h;
    const double sum = gm_pdf_columns(gm, pts).sum() * h * h;
    CHECK(sum >= 0.999);
    CHECK(sum <= 1.001);
  }
}

TEST_CASE("sampling") {
  SUBCASE("law of large numbers") {
    const GaussianMixture gm(g1(0.0, 1.0));
    const Mat s = gm_sample(gm, 100000, 5);
    CHECK(std::abs(s.row(0).mean()) < 0.02);
  }
  SUBCASE("zero-weight component is never drawn") {
    const GaussianMixture gm({1.0, 0.0}, {g1(0.0, 1.0), g1(100.0, 1.0)});
    const Mat s = gm_sample(gm, 5000, 9);
    CHECK(s.maxCoeff() < 50.0);
  }
  SUBCASE("empirical covariance matches the moment-matched covariance") {
    Rng rng(21);
    const GaussianMixture gm = random_gm(2, 2, rng, 3.0);
    const Moments m = gm_moments(gm);
    const Mat s = gm_sample(gm, 100000, 77);
    const Vec mean = s.rowwise().mean();
    const Mat c = s.colwise() - mean;
    const Mat cov = c * c.transpose() / static_cast<double>(s.cols() - 1);
    for (int i = 0; i < 2; ++i) CHECK(cov(i, i) == doctest::Approx(m.covariance(i, i)).epsilon(0.03));
    CHECK(std::abs(cov(0, 1) - m.covariance(0, 1)) <= 0.03 * std::sqrt(m.covariance(0, 0) * m.covariance(1, 1)));
  }
  SUBCASE("same seed, same draws") {
    Rng rng(4);
    const GaussianMixture gm = random_gm(4, 2, rng);
    CHECK(gm_sample(gm, 100, 123) == gm_sample(gm, 100, 123));
    CHECK(gm_sample(gm, 100, 123) != gm_sample(gm, 100, 124));
  }
}

TEST_CASE("moments") {
  SUBCASE("single component") {
    const Gaussian g(Eigen::Vector2d(1.0, -2.0), Eigen::Matrix2d{{2.0, 0.3}, {0.3, 1.0}});
    const Moments m = gm_moments(GaussianMixture(g));
    CHECK((m.mean - g.mean()).norm() < 1e-15);
    CHECK((m.covariance - g.covariance()).norm() < 1e-15);
  }
  SUBCASE("two 1-D components") {
    const Moments m = gm_moments(GaussianMixture({0.5, 0.5}, {g1(0.0, 1.0), g1(2.0, 1.0)}));
    CHECK(m.mean[0] == doctest::Approx(1.0));
    CHECK(m.covariance(0, 0) == doctest::Approx(2.0));
  }
  SUBCASE("Monte Carlo agreement") {
    Rng rng(8);
    const GaussianMixture gm = random_gm(5, 2, rng);
    const Moments m = gm_moments(gm);
    const Mat s = gm_sample(gm, 200000, 31);
    const Vec mean = s.rowwise().mean();
    const Mat c = s.colwise() - mean;
    const Mat cov = c * c.transpose() / static_cast<double>(s.cols() - 1);
    const double scale = std::sqrt(m.covariance.trace());
    CHECK((mean - m.mean).norm() <= 0.03 * scale);
    CHECK((cov - m.covariance).norm() <= 0.03 * m.covariance.norm());
  }
}

TEST_CASE("Runnalls reduction") {
  SUBCASE("identical components merge at zero cost") {
    const Gaussian g(Eigen::Vector2d(1.0, 1.0), Mat::Identity(2, 2));
    CHECK(runnalls_cost(0.5, g, 0.5, g) == doctest::Approx(0.0).scale(1.0));
    const GaussianMixture out = runnalls_compress(GaussianMixture({0.5, 0.5}, {g, g}), 1);
    REQUIRE(out.size() == 1);
    CHECK((out.component(0).mean() - g.mean()).norm() < 1e-12);
    CHECK((out.component(0).covariance() - g.covariance()).norm() < 1e-12);
  }
  SUBCASE("cost is symmetric") {
    Rng rng(2);
    const GaussianMixture gm = random_gm(2, 2, rng);
    CHECK(runnalls_cost(0.3, gm.component(0), 0.7, gm.component(1)) ==
          doctest::Approx(runnalls_cost(0.7, gm.component(1), 0.3, gm.component(0))).epsilon(1e-12));
  }
  SUBCASE("already small enough") {
    Rng rng(6);
    const GaussianMixture gm = random_gm(5, 2, rng);
    const GaussianMixture out = runnalls_compress(gm, 25);
    REQUIRE(out.size() == gm.size());
    for (std::size_t u = 0; u < gm.size(); ++u) {
      CHECK(out.weight(u) == gm.weight(u));
      CHECK(out.component(u).mean() == gm.component(u).mean());
    }
  }
  SUBCASE("50 to 25 keeps the overall moments") {
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
      const GaussianMixture gm = random_gm(50, 2, rng, 20.0);
      const GaussianMixture out = runnalls_compress(gm, 25);
      CHECK(out.size() == 25);
      const Moments a = gm_moments(gm), b = gm_moments(out);
      CHECK((a.mean - b.mean).norm() < 1e-9);
      CHECK((a.covariance - b.covariance).norm() < 1e-9);
    }
  }
  SUBCASE("plain reduction") {
    Rng rng(14);
    const GaussianMixture gm = random_gm(30, 2, rng, 10.0);
    const GaussianMixture out = runnalls_reduce(gm, 7);
    CHECK(out.size() == 7);
    CHECK((gm_moments(gm).covariance - gm_moments(out).covariance).norm() < 1e-9);
  }
  SUBCASE("target below one is rejected") {
    Rng rng(15);
    CHECK_THROWS_AS(runnalls_compress(random_gm(3, 2, rng), 0), Error);
  }
}

TEST_CASE("MAP estimate") {
  SUBCASE("single Gaussian") {
    const Gaussian g(Eigen::Vector2d(3.0, -1.0), Eigen::Matrix2d{{2.0, 0.5}, {0.5, 1.0}});
    CHECK((gm_map(GaussianMixture(g)) - g.mean()).norm() < 1e-6);
  }
  SUBCASE("dominant mode") {
    const GaussianMixture gm({0.9, 0.1}, {Gaussian(Eigen::Vector2d(0.0, 0.0), Mat::Identity(2, 2)),
                                          Gaussian(Eigen::Vector2d(20.0, 20.0), Mat::Identity(2, 2))});
    CHECK(gm_map(gm).norm() < 0.1);
  }
  SUBCASE("grid argmax") {
    Rng rng(42);
    for (int trial = 0; trial < 3; ++trial) {
      const GaussianMixture gm = random_gm(10, 2, rng);
      const double lo = -10.0, hi = 10.0;
      const int n = 500;
      const double h = (hi - lo) / (n - 1);
      Mat pts(2, n * n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) pts.col(i * n + j) << lo + i * h, lo + j * h;
      Eigen::Index best = 0;
      gm_pdf_columns(gm, pts).maxCoeff(&best);
      const Vec map = gm_map(gm);
      CHECK((map - pts.col(best)).cwiseAbs().maxCoeff() <= h);
      for (const auto& c : gm.components()) CHECK(gm_pdf(gm, map) >= gm_pdf(gm, c.mean()) - 1e-15);
    }
  }
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(Gaussian(Vec::Zero(2), Eigen::Matrix2d{{1.0, 2.0}, {2.0, 1.0}}), Error);
  CHECK_THROWS_AS(GaussianMixture({0.4, 0.4}, {g1(0, 1), g1(1, 1)}), Error);
  CHECK_THROWS_AS(GaussianMixture({-0.5, 1.5}, {g1(0, 1), g1(1, 1)}), Error);
  const GaussianMixture gm(g1(0.0, 1.0));
  CHECK_THROWS_AS(gm_pdf(gm, Vec::Zero(2)), Error);
}

TEST_CASE("mix renormalizes") {
  const GaussianMixture a(g1(0.0, 1.0)), b({0.5, 0.5}, {g1(1.0, 1.0), g1(2.0, 1.0)});
  const GaussianMixture m = mix({{0.2, &a}, {0.6, &b}});
  REQUIRE(m.size() == 3);
  CHECK(m.weight(0) == doctest::Approx(0.25));
  CHECK(m.weight(1) == doctest::Approx(0.375));
}

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "doctest.h"
#include "psda/association.hpp"
#include "psda/error.hpp"

using namespace psda;
using oracle::gauss1;
using oracle::gauss2;

namespace {

SoftmaxModel flat(int h, int dim = 2) {
  std::vector<std::string> names;
  for (int i = 0; i < h; ++i) names.push_back("l" + std::to_string(i));
  return {Mat::Zero(h, dim), Vec::Zero(h), names};
}

void check_same(const GaussianMixture& a, const GaussianMixture& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t u = 0; u < a.size(); ++u) {
    CHECK(a.weight(u) == doctest::Approx(b.weight(u)).epsilon(1e-12));
    CHECK((a.component(u).mean() - b.component(u).mean()).norm() < 1e-12);
    CHECK((a.component(u).covariance() - b.component(u).covariance()).norm() < 1e-12);
  }
}

}  // namespace

TEST_CASE("gamma from evidence terms") {
  AssociationConfig cfg;
  cfg.false_positive_rate = 0.1;
  SUBCASE("two candidates, uniform likelihood") {
    const auto g = gamma_multi({0.1, 0.1}, cfg, 10);
    CHECK(g[0] == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(0.45).epsilon(1e-14));
    CHECK(g[2] == doctest::Approx(0.45).epsilon(1e-14));
  }
  SUBCASE("zero evidence") {
    const auto g = gamma_multi({0.0, 0.3}, cfg, 10);
    CHECK(g[1] == 0.0);
  }
  SUBCASE("no clutter and no evidence") {
    cfg.false_positive_rate = 0.0;
    CHECK_THROWS_AS(gamma_multi({0.0}, cfg, 10), Error);
  }
  SUBCASE("explicit hypothesis priors") {
    cfg.hypothesis_priors = {0.6, 0.3};
    const auto g = gamma_multi({0.5, 0.5}, cfg, 2);
    const double den = 0.05 + 0.3 + 0.15;
    CHECK(g[1] == doctest::Approx(0.3 / den));
    cfg.hypothesis_priors = {0.6, 0.6};
    CHECK_THROWS_AS(gamma_multi({0.5, 0.5}, cfg, 2), Error);
  }
  SUBCASE("sums to one and rises with p(theta_0)") {
    Rng rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> n(1, 6);
    for (int t = 0; t < 1000; ++t) {
      std::vector<double> c(static_cast<std::size_t>(n(rng)));
      for (double& x : c) x = u(rng);
      AssociationConfig a;
      a.false_positive_rate = u(rng);
      const auto g = gamma_multi(c, a, 10);
      double s = 0.0;
      for (double x : g) s += x;
      CHECK(std::abs(s - 1.0) <= 1e-9);
      AssociationConfig b = a;
      b.false_positive_rate = std::min(1.0, a.false_positive_rate + 0.05);
      CHECK(gamma_multi(c, b, 10)[0] >= g[0]);
    }
  }
}

TEST_CASE("single-target association") {
  const GaussianMixture prior({0.5, 0.5}, {gauss2(0, 0, 1, 0, 1), gauss2(4, 2, 2, 0, 1)});
  const SoftmaxModel compass = oracle::compass();
  SUBCASE("no clutter means full trust") {
    AssociationConfig cfg;
    cfg.false_positive_rate = 0.0;
    const AssociationResult r = psda_single(prior, compass, 0, cfg, 4);
    CHECK(r.gamma[1] == 1.0);
    const auto cond = conditional_updates({&prior}, compass, 0, cfg.fusion, 4);
    check_same(r.posteriors[0], cond[0].posterior.pruned());
  }
  SUBCASE("uniform likelihood") {
    AssociationConfig cfg;
    const AssociationResult r = psda_single(prior, flat(4), 1, cfg, 4);
    CHECK(r.gamma[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(gm_moments(r.posteriors[0]).mean.isApprox(gm_moments(prior).mean, 1e-9));
  }
  SUBCASE("matches the two-hypothesis formula") {
    AssociationConfig cfg;
    cfg.false_positive_rate = 0.3;
    const AssociationResult r = psda_single(prior, compass, 2, cfg, 4);
    const double c = oracle::quadrature(prior, compass, 2).evidence;
    const double g0 = 0.3 / 4.0 / (0.3 / 4.0 + 0.7 * c);
    CHECK(r.gamma[0] == doctest::Approx(g0).epsilon(0.02));
  }
  SUBCASE("one candidate equals the multi-target form") {
    AssociationConfig cfg;
    const AssociationResult a = psda_single(prior, compass, 3, cfg, 9);
    const AssociationResult b = psda_multi({&prior}, compass, 3, cfg, 9);
    CHECK(a.gamma == b.gamma);
    check_same(a.posteriors[0], b.posteriors[0]);
  }
}

TEST_CASE("erroneous data near the prior earns a lower gamma_0 than correct data far from it") {
  const oracle::IllustrativeScene scene = oracle::illustrative_scene();
  const SoftmaxModel model = build_spatial_model(scene.rover, ObservationType::kRangeBearing);
  AssociationConfig cfg;
  auto g0 = [&](const char* label) { return psda_single(scene.prior, model, model.label_index(label), cfg, 17).gamma[0]; };
  // near_ahead is the truthful description of the specimen's position
  CHECK(model.probability("near_ahead", scene.truth) > 0.5);
  const double a = g0("far_right"), b = g0("near_ahead"), c = g0("far_left");
  CHECK(c < b);
  CHECK(b < a);
}

TEST_CASE("gamma_0 rises as the datum's region slides off the prior") {
  const GaussianMixture prior(gauss2(0.0, 0.0, 4.0, 0.0, 4.0));
  AssociationConfig cfg;
  double last = -1.0;
  for (int d = 0; d < 10; ++d) {
    CAPTURE(d);
    const SoftmaxModel model = build_spatial_model(Pose(Vec2(1.5 * d, 0.0), 0.0), ObservationType::kRangeBearing);
    const double g0 = psda_single(prior, model, model.label_index("next_to"), cfg, 40).gamma[0];
    CHECK(g0 >= last);
    last = g0;
  }
}

TEST_CASE("two 1-D targets agree with the joint posterior") {
  const GaussianMixture p1({0.6, 0.4}, {gauss1(-1.0, 1.0), gauss1(2.0, 0.5)});
  const GaussianMixture p2(gauss1(1.0, 2.0));
  AssociationConfig cfg;
  cfg.false_positive_rate = 0.1;
  cfg.fusion.samples_per_component = 20000;
  // Each prior component's conditional is a single Gaussian, so steep likelihood
  // edges cost accuracy; slope 1 is the survey's scale, slope 2 is a stress case.
  for (const auto& [slope, tolerance] : {std::pair{1.0, 0.02}, std::pair{2.0, 0.05}}) {
    const SoftmaxModel m = oracle::bands(slope);
    for (int label = 0; label < 3; ++label) {
      CAPTURE(slope);
      CAPTURE(label);
      const AssociationResult r = psda_multi({&p1, &p2}, m, label, cfg, 30 + label);
      const oracle::JointMarginals j = oracle::joint_two_target(p1, p2, m, label, 0.1, 3, -12.0, 14.0, 1200);
      CHECK(oracle::total_variation(j.grid, j.m1, j.h, r.posteriors[0]) < tolerance);
      CHECK(oracle::total_variation(j.grid, j.m2, j.h, r.posteriors[1]) < tolerance);
    }
  }
}

TEST_CASE("three candidates against quadrature evidence") {
  Rng rng(77);
  std::uniform_real_distribution<double> pos(-4.0, 4.0), var(0.5, 2.0);
  const SoftmaxModel compass = oracle::compass();
  AssociationConfig cfg;
  cfg.false_positive_rate = 0.2;
  cfg.fusion.samples_per_component = 20000;
  for (int t = 0; t < 5; ++t) {
    std::vector<GaussianMixture> priors;
    for (int i = 0; i < 3; ++i) priors.emplace_back(gauss2(pos(rng), pos(rng), var(rng), 0.0, var(rng)));
    const int label = t % 4;
    const AssociationResult r = psda_multi({&priors[0], &priors[1], &priors[2]}, compass, label, cfg, 40 + t);
    std::vector<double> exact;
    for (const auto& p : priors) exact.push_back(oracle::quadrature(p, compass, label).evidence);
    const auto g = gamma_multi(exact, cfg, 4);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(r.gamma[i] - g[i]) <= 0.02 * std::max(g[i], 0.05));
  }
}

TEST_CASE("certain clutter keeps every prior") {
  const GaussianMixture a(gauss2(0, 0, 1, 0, 1)), b(gauss2(3, 3, 1, 0, 1));
  AssociationConfig cfg;
  cfg.false_positive_rate = 1.0;
  const AssociationResult r = psda_multi({&a, &b}, oracle::compass(), 0, cfg, 1);
  CHECK(r.gamma[0] == 1.0);
  check_same(r.posteriors[0], a);
  check_same(r.posteriors[1], b);
  const AssociationResult g = greedy_psda({&a, &b}, oracle::compass(), 0, cfg, 1);
  check_same(g.posteriors[0], a);
}

TEST_CASE("winner take all") {
  const GaussianMixture a(gauss2(3, 0, 1, 0, 1)), b(gauss2(-3, 0, 1, 0, 1));
  AssociationConfig cfg;
  const AssociationResult full = psda_multi({&a, &b}, oracle::compass(), 0, cfg, 2);
  const AssociationResult greedy = greedy_psda({&a, &b}, oracle::compass(), 0, cfg, 2);
  CHECK(full.gamma == greedy.gamma);
  REQUIRE(greedy.gamma[1] > greedy.gamma[2]);
  const auto cond = conditional_updates({&a, &b}, oracle::compass(), 0, cfg.fusion, 2);
  check_same(greedy.posteriors[0], cond[0].posterior.pruned());
  check_same(greedy.posteriors[1], b);
}

TEST_CASE("naive association") {
  const GaussianMixture a(gauss2(1, 1, 1, 0, 1));
  std::vector<GaussianMixture> four(4, a);
  std::vector<const GaussianMixture*> ptrs;
  for (const auto& g : four) ptrs.push_back(&g);
  AssociationConfig cfg;
  const auto cond = conditional_updates({&a}, oracle::compass(), 0, cfg.fusion, 6);

  SUBCASE("four candidates hedge a quarter") {
    const auto out = naive_da(ptrs, oracle::compass(), 0, Polarity::kPositive, cfg, 6);
    REQUIRE(out.size() == 4);
    REQUIRE(out[0].size() == 2);
    CHECK(out[0].weight(0) == doctest::Approx(0.25));
    CHECK(out[0].weight(1) == doctest::Approx(0.75));
    CHECK(out[0].component(1).mean() == a.component(0).mean());
  }
  SUBCASE("one candidate takes the update") {
    const auto out = naive_da({&a}, oracle::compass(), 0, Polarity::kPositive, cfg, 6);
    check_same(out[0], cond[0].posterior.pruned());
  }
  SUBCASE("negative data take the update") {
    const auto out = naive_da(ptrs, oracle::compass(), 0, Polarity::kNegative, cfg, 6);
    CHECK(out[0].size() == 1);
  }
}

TEST_CASE("trusting every datum") {
  const GaussianMixture a({0.5, 0.5}, {gauss2(1, 1, 1, 0, 1), gauss2(-2, 0, 1, 0, 1)});
  AssociationConfig cfg;
  SUBCASE("uniform likelihood leaves the prior") {
    const auto out = no_da({&a}, flat(3), 0, cfg, 3);
    CHECK(out[0].weight(0) == doctest::Approx(0.5));
    CHECK((gm_moments(out[0]).mean - gm_moments(a).mean).norm() < 0.1);
  }
  SUBCASE("same as PSDA without clutter") {
    cfg.false_positive_rate = 0.0;
    const auto trusted = no_da({&a}, oracle::compass(), 1, cfg, 3);
    const AssociationResult r = psda_multi({&a}, oracle::compass(), 1, cfg, 3);
    check_same(trusted[0], r.posteriors[0]);
  }
}

TEST_CASE("posteriors are compressed to the cap") {
  std::vector<Gaussian> comps;
  Rng rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 25; ++i) comps.push_back(gauss2(u(rng), u(rng), 1.0, 0.0, 1.0));
  const GaussianMixture prior = GaussianMixture::normalized(std::vector<double>(25, 1.0), comps);
  AssociationConfig cfg;
  const AssociationResult r = psda_single(prior, oracle::compass(), 0, cfg, 5);
  CHECK(r.posteriors[0].size() <= 25);
  double s = 0.0;
  for (double w : r.posteriors[0].weights()) s += w;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("empty candidate set is rejected") {
  AssociationConfig cfg;
  CHECK_THROWS_AS(psda_multi({}, oracle::compass(), 0, cfg, 1), Error);
}

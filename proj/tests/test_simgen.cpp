#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "hte/errors.hpp"
#include "hte/simgen.hpp"

using hte::ScenarioSpec;
using hte::ValidationError;

TEST_CASE("the three presets carry the published coefficients") {
  const auto no = ScenarioSpec::no_hte();
  CHECK(no.gamma0 == 0.4);
  CHECK(no.gamma1 == 0.0);
  CHECK(no.scenario_name == "NoHTE");

  const auto weak = ScenarioSpec::weak_hte();
  CHECK(weak.gamma0 == -0.05);
  CHECK(weak.gamma1 == 0.3);
  CHECK(weak.scenario_name == "WeakHTE");

  const auto strong = ScenarioSpec::strong_hte();
  CHECK(strong.gamma0 == -0.05);
  CHECK(strong.gamma1 == 1.0);
  CHECK(strong.scenario_name == "StrongHTE");

  for (const auto& spec : {no, weak, strong}) {
    CHECK(spec.beta0 == -0.6);
    CHECK(spec.beta[0] == 0.6);
    CHECK(spec.beta[1] == -0.2);
    CHECK(spec.beta[2] == 0.3);
    CHECK(spec.n == 2000);
    CHECK(spec.delta == 0.03);
  }

  CHECK(ScenarioSpec::preset("weak").gamma1 == 0.3);
  CHECK_THROWS_AS(ScenarioSpec::preset("medium"), ValidationError);
}

TEST_CASE("true_cate matches closed-form reference values") {
  const Eigen::Vector3d origin(0.0, 0.0, 0.0);
  CHECK(hte::true_cate(ScenarioSpec::no_hte(), origin) ==
        doctest::Approx(0.09582230891331761).epsilon(1e-14));
  CHECK(hte::true_cate(ScenarioSpec::weak_hte(), origin) ==
        doctest::Approx(-0.011354156447703379).epsilon(1e-14));
  CHECK(hte::true_cate(ScenarioSpec::strong_hte(), origin) ==
        doctest::Approx(-0.011354156447703379).epsilon(1e-14));
  CHECK(hte::true_cate(ScenarioSpec::strong_hte(),
                       Eigen::Vector3d(2.0, 0.0, 0.0)) ==
        doctest::Approx(0.28191720841268686).epsilon(1e-14));
  CHECK(hte::true_cate(ScenarioSpec::strong_hte(),
                       Eigen::Vector3d(1.0, -1.0, 1.0)) ==
        doctest::Approx(0.18753910278283248).epsilon(1e-14));
  CHECK(hte::true_cate(ScenarioSpec::no_hte(),
                       Eigen::Vector3d(1.5, 0.5, 1.0)) ==
        doctest::Approx(0.08849017142314941).epsilon(1e-14));
}

TEST_CASE("benefit labels use a strict margin comparison") {
  ScenarioSpec spec = ScenarioSpec::strong_hte();
  const Eigen::Vector3d x(2.0, 0.0, 0.0);
  const double tau = hte::true_cate(spec, x);
  spec.delta = tau;  // tau == delta exactly: not a benefiter
  CHECK(hte::benefit_label(spec, x) == 0);
  spec.delta = tau - 1e-12;
  CHECK(hte::benefit_label(spec, x) == 1);
  spec.delta = tau + 1e-12;
  CHECK(hte::benefit_label(spec, x) == 0);
}

TEST_CASE("generated trials have the requested shape and near-balanced arms") {
  ScenarioSpec spec = ScenarioSpec::weak_hte();
  spec.n = 2000;
  const auto [data, truth] = hte::generate_trial(spec, 31);
  CHECK(data.n() == 2000);
  CHECK(data.p() == 3);
  CHECK(data.covariate_names ==
        std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(data.covariate_kinds[0] == hte::ColumnKind::Continuous);
  CHECK(data.covariate_kinds[2] == hte::ColumnKind::Binary);
  REQUIRE(data.known_propensity.has_value());
  CHECK(*data.known_propensity == 0.5);
  // 1:1 randomization: the treated fraction stays within four binomial
  // standard errors of one half.
  const double frac = data.treatment.cast<double>().mean();
  CHECK(std::fabs(frac - 0.5) <= 4.0 * std::sqrt(0.25 / 2000.0));
  CHECK(truth.tau.size() == 2000);
  CHECK(truth.z.size() == 2000);
}

TEST_CASE("ground truth is consistent with the closed-form effect") {
  ScenarioSpec spec = ScenarioSpec::strong_hte();
  spec.n = 500;
  const auto [data, truth] = hte::generate_trial(spec, 77);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const Eigen::Vector3d x = data.covariates.row(i).transpose();
    CHECK(truth.tau[i] == hte::true_cate(spec, x));
    CHECK(truth.z[i] == (truth.tau[i] > spec.delta ? 1 : 0));
  }
}

TEST_CASE("trial generation is bit-identical for a fixed seed") {
  ScenarioSpec spec = ScenarioSpec::no_hte();
  spec.n = 300;
  const auto [d1, t1] = hte::generate_trial(spec, 12345);
  const auto [d2, t2] = hte::generate_trial(spec, 12345);
  const auto [d3, t3] = hte::generate_trial(spec, 12346);
  CHECK(d1.covariates == d2.covariates);
  CHECK(d1.treatment == d2.treatment);
  CHECK(d1.outcome == d2.outcome);
  CHECK(t1.tau == t2.tau);
  CHECK(d1.covariates != d3.covariates);
}

TEST_CASE("empirical arm contrast matches the oracle average effect") {
  // With n = 200000 the raw difference in event rates between arms should sit
  // within 0.01 of the Monte-Carlo average treatment effect.
  ScenarioSpec spec = ScenarioSpec::strong_hte();
  spec.n = 200000;
  const auto [data, truth] = hte::generate_trial(spec, 9);
  double sum1 = 0.0, sum0 = 0.0;
  long n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.treatment[i]) {
      sum1 += data.outcome[i];
      ++n1;
    } else {
      sum0 += data.outcome[i];
      ++n0;
    }
  }
  const double observed = sum1 / n1 - sum0 / n0;
  const double oracle = hte::monte_carlo_ate(spec, 400000, 17);
  CHECK(std::fabs(observed - oracle) < 0.01);
}

TEST_CASE("monte-carlo ATE reproduces the scenario-level references") {
  // 400k draws give a Monte-Carlo standard error well under 0.001 for each
  // scenario, so absolute windows of a few thousandths are conservative.
  CHECK(std::fabs(hte::monte_carlo_ate(ScenarioSpec::no_hte(), 400000, 5) -
                  0.089855) < 0.002);
  CHECK(std::fabs(hte::monte_carlo_ate(ScenarioSpec::weak_hte(), 400000, 5) -
                  (-0.002738)) < 0.002);
  CHECK(std::fabs(hte::monte_carlo_ate(ScenarioSpec::strong_hte(), 400000, 5) -
                  0.016841) < 0.002);
}

TEST_CASE("scenario validation rejects nonsense parameters") {
  ScenarioSpec spec = ScenarioSpec::no_hte();
  spec.n = 1;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = ScenarioSpec::no_hte();
  spec.delta = -0.1;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

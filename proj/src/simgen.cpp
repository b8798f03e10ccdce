#include "hte/simgen.hpp"

#include "hte/errors.hpp"
#include "hte/rng.hpp"
#include "hte/special.hpp"

namespace hte {

void ScenarioSpec::validate() const {
  if (n < 2) {
    throw ValidationError("scenario: n must be >= 2, got " + std::to_string(n));
  }
  if (!(delta >= 0.0)) {
    throw ValidationError("scenario: delta must be >= 0");
  }
}

ScenarioSpec ScenarioSpec::no_hte() {
  ScenarioSpec s;
  s.gamma0 = 0.4;
  s.gamma1 = 0.0;
  s.scenario_name = "NoHTE";
  return s;
}

ScenarioSpec ScenarioSpec::weak_hte() {
  ScenarioSpec s;
  s.gamma0 = -0.05;
  s.gamma1 = 0.3;
  s.scenario_name = "WeakHTE";
  return s;
}

ScenarioSpec ScenarioSpec::strong_hte() {
  ScenarioSpec s;
  s.gamma0 = -0.05;
  s.gamma1 = 1.0;
  s.scenario_name = "StrongHTE";
  return s;
}

ScenarioSpec ScenarioSpec::preset(const std::string& name) {
  if (name == "no") return no_hte();
  if (name == "weak") return weak_hte();
  if (name == "strong") return strong_hte();
  throw ValidationError("unknown scenario '" + name +
                        "'; expected no, weak, or strong");
}

namespace {

double eta0(const ScenarioSpec& spec, const Eigen::Vector3d& x) {
  return spec.beta0 + spec.beta.dot(x);
}

}  // namespace

double true_cate(const ScenarioSpec& spec, const Eigen::Vector3d& x) {
  const double base = eta0(spec, x);
  return sigmoid(base + spec.gamma0 + spec.gamma1 * x[0]) - sigmoid(base);
}

int benefit_label(const ScenarioSpec& spec, const Eigen::Vector3d& x) {
  return true_cate(spec, x) > spec.delta ? 1 : 0;
}

std::pair<TrialDataset, GroundTruth> generate_trial(const ScenarioSpec& spec,
                                                    std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);

  TrialDataset data;
  GroundTruth truth;
  const Eigen::Index n = spec.n;
  data.covariates.resize(n, 3);
  data.covariate_names = {"x1", "x2", "x3"};
  data.covariate_kinds = {ColumnKind::Continuous, ColumnKind::Continuous,
                          ColumnKind::Binary};
  data.treatment.resize(n);
  data.outcome.resize(n);
  data.known_propensity = 0.5;
  truth.tau.resize(n);
  truth.z.resize(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Vector3d x;
    x[0] = rng.normal();
    x[1] = rng.normal();
    x[2] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const int a = rng.bernoulli(0.5) ? 1 : 0;
    const double logit_p =
        eta0(spec, x) + a * (spec.gamma0 + spec.gamma1 * x[0]);
    const int y = rng.bernoulli(sigmoid(logit_p)) ? 1 : 0;

    data.covariates.row(i) = x.transpose();
    data.treatment[i] = a;
    data.outcome[i] = y;
    truth.tau[i] = true_cate(spec, x);
    truth.z[i] = truth.tau[i] > spec.delta ? 1 : 0;
  }
  data.validate();
  return {std::move(data), std::move(truth)};
}

double monte_carlo_ate(const ScenarioSpec& spec, long draws, std::uint64_t seed) {
  if (draws < 1) {
    throw ValidationError("monte_carlo_ate: draws must be >= 1");
  }
  Rng rng(seed);
  double sum = 0.0;
  for (long i = 0; i < draws; ++i) {
    Eigen::Vector3d x;
    x[0] = rng.normal();
    x[1] = rng.normal();
    x[2] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    sum += true_cate(spec, x);
  }
  return sum / static_cast<double>(draws);
}

}  // namespace hte

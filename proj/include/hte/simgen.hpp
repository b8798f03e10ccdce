#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>

#include "hte/dataset.hpp"

namespace hte {

// Data-generating process for the simulation study: a 1:1 randomized trial
// with binary outcome
//
//   logit P(Y=1 | A, X) = eta0(X) + A * (gamma0 + gamma1 * x1),
//   eta0(X) = beta0 + beta' X,    X = (x1, x2, x3),
//
// with x1, x2 standard normal and x3 Bernoulli(0.5).  gamma1 controls how
// strongly the treatment effect varies with x1.
struct ScenarioSpec {
  double beta0 = -0.6;
  Eigen::Vector3d beta{0.6, -0.2, 0.3};
  double gamma0 = 0.0;
  double gamma1 = 0.0;
  int n = 2000;
  double delta = 0.03;  // clinical margin defining a benefiter
  std::string scenario_name;

  void validate() const;

  // The three preset scenarios: constant effect, weak effect modification,
  // strong effect modification.
  static ScenarioSpec no_hte();
  static ScenarioSpec weak_hte();
  static ScenarioSpec strong_hte();
  // Accepts "no" | "weak" | "strong".
  static ScenarioSpec preset(const std::string& name);
};

// Per-subject oracle quantities kept alongside a generated trial.
struct GroundTruth {
  Eigen::VectorXd tau;  // true risk-difference CATE
  Eigen::VectorXi z;    // benefit label 1{tau > delta}
};

// True CATE on the risk-difference scale,
// sigma(eta0(x) + gamma0 + gamma1*x1) - sigma(eta0(x)).
double true_cate(const ScenarioSpec& spec, const Eigen::Vector3d& x);

// Latent benefit label 1{true_cate(spec, x) > spec.delta} (strict).
int benefit_label(const ScenarioSpec& spec, const Eigen::Vector3d& x);

// Draws one trial replicate; bit-identical for a fixed seed.
std::pair<TrialDataset, GroundTruth> generate_trial(const ScenarioSpec& spec,
                                                    std::uint64_t seed);

// Monte-Carlo integral of true_cate over the covariate law (the oracle ATE),
// used by tests to anchor uplift-curve magnitudes.
double monte_carlo_ate(const ScenarioSpec& spec, long draws, std::uint64_t seed);

}  // namespace hte

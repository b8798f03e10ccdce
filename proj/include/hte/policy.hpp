#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "hte/cate.hpp"
#include "hte/dataset.hpp"

namespace hte {

// Stage 2 evaluation: how good is a CATE score at ranking patients, and what
// does a thresholded treatment rule earn — all judged against cross-fitted
// doubly robust pseudo-outcomes, never against refit models.

// Cumulative uplift of score-ranked DR pseudo-outcomes.  Two conventions are
// kept side by side: u_normalized divides partial sums by the full sample
// size n; u_cumulative is the raw partial sum (n times larger).
struct UpliftCurve {
  Eigen::VectorXd q_grid;        // ascending fractions in (0, 1]
  Eigen::VectorXd u_normalized;  // U(q) = (1/n) sum of top-q pseudo-outcomes
  Eigen::VectorXd u_cumulative;  // n * U(q)
  double auqc_normalized = 0.0;  // trapezoid area, anchored at (0, 0)
  double auqc_cumulative = 0.0;
};

enum class AuqcConvention { Normalized, Cumulative };

// Subjects are ranked by score descending (ties by original index) and
// partial sums taken at q_grid = {j/grid_points}.
UpliftCurve uplift_curve(const Eigen::VectorXd& scores,
                         const PseudoOutcomes& pseudo, int grid_points);

double auqc(const UpliftCurve& curve, AuqcConvention convention);

// Cross-fitted DR value of an arbitrary 0/1 policy:
//   mean_i [ mu_{pi(i)}(X_i) + 1{A_i = pi(i)} (Y_i - mu_{A_i}(X_i)) / P(A = pi(i) | X_i) ].
double policy_value(const TrialDataset& data, const NuisanceEstimates& nuisance,
                    const Eigen::VectorXi& policy);

// Empirical score quantiles at levels j/(n_quantiles+1), deduplicated, with
// -inf (treat all) prepended and +inf (treat none) appended.
Eigen::VectorXd threshold_grid(const Eigen::VectorXd& scores, int n_quantiles);

// DR value of pi_t(x) = 1{score > t} along a threshold grid.
struct PolicyValueCurve {
  Eigen::VectorXd thresholds;  // first entry -inf, last entry +inf
  Eigen::VectorXd values;
  double t_star = 0.0;
  double v_star = 0.0;
  double value_gain = 0.0;  // v_star - max(treat-all, treat-none)
  Eigen::VectorXd se;       // per-threshold bootstrap SEs; empty when off
};

struct ThresholdChoice {
  double t_star = 0.0;
  double v_star = 0.0;
  double value_gain = 0.0;
};

// Argmax over the curve, ties resolved toward the larger threshold (treat
// fewer subjects).
ThresholdChoice select_threshold(const PolicyValueCurve& curve);

// Evaluates the whole curve and fills t_star/v_star/value_gain.
PolicyValueCurve evaluate_policy_curve(const TrialDataset& data,
                                       const NuisanceEstimates& nuisance,
                                       const Eigen::VectorXd& scores,
                                       const Eigen::VectorXd& thresholds);

// One-sided Wilson score upper bound for a binomial proportion.
double wilson_upper(long successes, long trials, double conf);

enum class NpStatus { Feasible, BestAttainable };

// Neyman-Pearson style screening of thresholds: among rules whose surrogate
// harm rate (treated subjects with pseudo-outcome <= delta) is confidently
// below alpha_harm, prefer the one capturing the most benefiters.  When no
// rule passes, report the least harmful rule with nontrivial capture as
// "best attainable".
struct NpFrontier {
  Eigen::VectorXd thresholds;
  Eigen::VectorXd harm_rate;    // NaN where nobody is treated
  Eigen::VectorXd harm_upper;   // one-sided Wilson bound on the harm rate
  Eigen::VectorXd benefit_capture;      // treated benefiters / all benefiters
  Eigen::VectorXd benefit_rate_treated; // treated benefiters / treated
  std::vector<int> feasible;    // harm_upper <= alpha_harm (0/1)
  double chosen_threshold = 0.0;
  int chosen_index = -1;
  NpStatus status = NpStatus::BestAttainable;
  double alpha_harm = 0.10;
  double delta = 0.0;
  double conf_level = 0.95;
  double capture_floor = 0.05;
};

NpFrontier np_frontier(const Eigen::VectorXd& scores,
                       const PseudoOutcomes& pseudo,
                       const Eigen::VectorXd& thresholds, double delta,
                       double alpha_harm, double conf,
                       double capture_floor = 0.05);

// Subject-level nonparametric bootstrap of an evaluation statistic (fitted
// models held fixed).  The statistic receives a resampled index multiset.
struct BootstrapResult {
  double se = 0.0;
  double lo = 0.0;  // 2.5% percentile
  double hi = 0.0;  // 97.5% percentile
};

BootstrapResult bootstrap_se(
    const std::function<double(const std::vector<Eigen::Index>&)>& statistic,
    Eigen::Index n, int B, std::uint64_t seed, int threads = 0);

}  // namespace hte

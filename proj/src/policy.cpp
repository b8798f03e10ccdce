#include "hte/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hte/errors.hpp"
#include "hte/parallel.hpp"
#include "hte/rng.hpp"
#include "hte/special.hpp"

namespace hte {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Subject order by score descending, original index breaking ties.
std::vector<Eigen::Index> rank_by_score(const Eigen::VectorXd& scores) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return scores[a] > scores[b];
  });
  return order;
}

}  // namespace

UpliftCurve uplift_curve(const Eigen::VectorXd& scores,
                         const PseudoOutcomes& pseudo, int grid_points) {
  const Eigen::Index n = scores.size();
  if (pseudo.values.size() != n) {
    throw ValidationError("uplift_curve: scores and pseudo-outcomes differ in length");
  }
  if (n == 0) throw ValidationError("uplift_curve: empty input");
  if (grid_points < 2) {
    throw ValidationError("uplift_curve: need at least 2 grid points");
  }

  const auto order = rank_by_score(scores);
  Eigen::VectorXd prefix(n + 1);
  prefix[0] = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + pseudo.values[order[static_cast<std::size_t>(i)]];
  }

  UpliftCurve curve;
  curve.q_grid.resize(grid_points);
  curve.u_normalized.resize(grid_points);
  curve.u_cumulative.resize(grid_points);
  for (int j = 1; j <= grid_points; ++j) {
    // floor(q*n) in exact integer arithmetic, q = j/grid_points.
    const Eigen::Index m =
        (static_cast<Eigen::Index>(j) * n) / static_cast<Eigen::Index>(grid_points);
    curve.q_grid[j - 1] = static_cast<double>(j) / grid_points;
    curve.u_cumulative[j - 1] = prefix[m];
    curve.u_normalized[j - 1] = prefix[m] / static_cast<double>(n);
  }

  // Trapezoid areas anchored at (0, 0): U(0) is an empty sum.
  double area_norm = 0.0, area_cum = 0.0;
  double q_prev = 0.0, un_prev = 0.0, uc_prev = 0.0;
  for (int j = 0; j < grid_points; ++j) {
    const double dq = curve.q_grid[j] - q_prev;
    area_norm += 0.5 * (curve.u_normalized[j] + un_prev) * dq;
    area_cum += 0.5 * (curve.u_cumulative[j] + uc_prev) * dq;
    q_prev = curve.q_grid[j];
    un_prev = curve.u_normalized[j];
    uc_prev = curve.u_cumulative[j];
  }
  curve.auqc_normalized = area_norm;
  curve.auqc_cumulative = area_cum;
  return curve;
}

double auqc(const UpliftCurve& curve, AuqcConvention convention) {
  return convention == AuqcConvention::Normalized ? curve.auqc_normalized
                                                  : curve.auqc_cumulative;
}

double policy_value(const TrialDataset& data, const NuisanceEstimates& nuisance,
                    const Eigen::VectorXi& policy) {
  if (policy.size() != data.n()) {
    throw ValidationError("policy_value: policy not aligned with the data");
  }
  if (nuisance.e_hat.size() != data.n() ||
      nuisance.mu0_hat.size() != data.n() ||
      nuisance.mu1_hat.size() != data.n()) {
    throw ValidationError("policy_value: nuisance vectors not aligned with the data");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const int pi = policy[i];
    if (pi != 0 && pi != 1) {
      throw ValidationError("policy_value: policy entries must be 0/1");
    }
    const double mu_pi = pi == 1 ? nuisance.mu1_hat[i] : nuisance.mu0_hat[i];
    double term = mu_pi;
    if (data.treatment[i] == pi) {
      const double mu_a = mu_pi;  // A_i == pi(i)
      const double prob = pi == 1 ? nuisance.e_hat[i] : 1.0 - nuisance.e_hat[i];
      term += (data.outcome[i] - mu_a) / prob;
    }
    sum += term;
  }
  return sum / static_cast<double>(data.n());
}

Eigen::VectorXd threshold_grid(const Eigen::VectorXd& scores, int n_quantiles) {
  if (n_quantiles < 1) {
    throw ValidationError("threshold_grid: n_quantiles must be >= 1");
  }
  if (scores.size() == 0) {
    throw ValidationError("threshold_grid: empty scores");
  }
  std::vector<double> values(scores.data(), scores.data() + scores.size());
  std::vector<double> grid;
  grid.push_back(-kInf);
  for (int j = 1; j <= n_quantiles; ++j) {
    const double q =
        quantile(values, static_cast<double>(j) / (n_quantiles + 1));
    if (q != grid.back()) grid.push_back(q);  // drop duplicates
  }
  grid.push_back(kInf);
  return Eigen::Map<Eigen::VectorXd>(grid.data(),
                                     static_cast<Eigen::Index>(grid.size()));
}

PolicyValueCurve evaluate_policy_curve(const TrialDataset& data,
                                       const NuisanceEstimates& nuisance,
                                       const Eigen::VectorXd& scores,
                                       const Eigen::VectorXd& thresholds) {
  if (scores.size() != data.n()) {
    throw ValidationError("evaluate_policy_curve: scores not aligned with the data");
  }
  if (thresholds.size() < 2 || thresholds[0] != -kInf ||
      thresholds[thresholds.size() - 1] != kInf) {
    throw ValidationError(
        "evaluate_policy_curve: thresholds must start at -inf (treat all) and "
        "end at +inf (treat none)");
  }
  for (Eigen::Index t = 1; t < thresholds.size(); ++t) {
    if (!(thresholds[t - 1] < thresholds[t])) {
      throw ValidationError("evaluate_policy_curve: thresholds must be strictly increasing");
    }
  }

  PolicyValueCurve curve;
  curve.thresholds = thresholds;
  curve.values.resize(thresholds.size());
  Eigen::VectorXi policy(data.n());
  for (Eigen::Index t = 0; t < thresholds.size(); ++t) {
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      policy[i] = scores[i] > thresholds[t] ? 1 : 0;
    }
    curve.values[t] = policy_value(data, nuisance, policy);
  }
  const ThresholdChoice choice = select_threshold(curve);
  curve.t_star = choice.t_star;
  curve.v_star = choice.v_star;
  curve.value_gain = choice.value_gain;
  return curve;
}

ThresholdChoice select_threshold(const PolicyValueCurve& curve) {
  const Eigen::Index m = curve.thresholds.size();
  if (m < 2) {
    throw ValidationError("select_threshold: need at least 2 thresholds");
  }
  Eigen::Index best = 0;
  for (Eigen::Index t = 1; t < m; ++t) {
    // >= sends exact ties to the larger threshold: treat fewer when equal.
    if (curve.values[t] >= curve.values[best]) best = t;
  }
  ThresholdChoice choice;
  choice.t_star = curve.thresholds[best];
  choice.v_star = curve.values[best];
  const double treat_all = curve.values[0];
  const double treat_none = curve.values[m - 1];
  choice.value_gain = choice.v_star - std::max(treat_all, treat_none);
  return choice;
}

double wilson_upper(long successes, long trials, double conf) {
  if (trials < 1) {
    throw ValidationError("wilson_upper: trials must be >= 1");
  }
  if (successes < 0 || successes > trials) {
    throw ValidationError("wilson_upper: successes must lie in [0, trials]");
  }
  if (!(conf > 0.0 && conf < 1.0)) {
    throw ValidationError("wilson_upper: conf must lie in (0, 1)");
  }
  // At p_hat = 1 the upper limit is exactly 1 (algebraically the numerator
  // and denominator coincide); the formula below only loses that to rounding.
  if (successes == trials) return 1.0;
  const double z = normal_quantile(conf);
  const double n = static_cast<double>(trials);
  const double p_hat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double center = p_hat + z2 / (2.0 * n);
  const double spread =
      z * std::sqrt(p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n));
  return std::min(1.0, (center + spread) / (1.0 + z2 / n));
}

NpFrontier np_frontier(const Eigen::VectorXd& scores,
                       const PseudoOutcomes& pseudo,
                       const Eigen::VectorXd& thresholds, double delta,
                       double alpha_harm, double conf, double capture_floor) {
  const Eigen::Index n = scores.size();
  if (pseudo.values.size() != n) {
    throw ValidationError("np_frontier: scores and pseudo-outcomes differ in length");
  }
  if (!(alpha_harm > 0.0 && alpha_harm < 1.0)) {
    throw ValidationError("np_frontier: alpha_harm must lie in (0, 1)");
  }
  if (!(capture_floor >= 0.0 && capture_floor <= 1.0)) {
    throw ValidationError("np_frontier: capture_floor must lie in [0, 1]");
  }

  long total_benefiters = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (pseudo.values[i] > delta) ++total_benefiters;
  }
  if (total_benefiters == 0) {
    throw ValidationError(
        "np_frontier: no subject has pseudo-outcome above delta; benefit "
        "capture is undefined");
  }

  NpFrontier frontier;
  frontier.thresholds = thresholds;
  frontier.alpha_harm = alpha_harm;
  frontier.delta = delta;
  frontier.conf_level = conf;
  frontier.capture_floor = capture_floor;
  const Eigen::Index m = thresholds.size();
  frontier.harm_rate.resize(m);
  frontier.harm_upper.resize(m);
  frontier.benefit_capture.resize(m);
  frontier.benefit_rate_treated.resize(m);
  frontier.feasible.assign(static_cast<std::size_t>(m), 0);

  for (Eigen::Index t = 0; t < m; ++t) {
    long treated = 0, harmed = 0, captured = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (scores[i] > thresholds[t]) {
        ++treated;
        if (pseudo.values[i] <= delta) ++harmed;
        else ++captured;
      }
    }
    frontier.benefit_capture[t] =
        static_cast<double>(captured) / static_cast<double>(total_benefiters);
    if (treated == 0) {
      // Treating nobody satisfies any harm bound vacuously; exclude it rather
      // than reporting harm 0.
      frontier.harm_rate[t] = kNaN;
      frontier.harm_upper[t] = kNaN;
      frontier.benefit_rate_treated[t] = kNaN;
      continue;
    }
    frontier.harm_rate[t] =
        static_cast<double>(harmed) / static_cast<double>(treated);
    frontier.harm_upper[t] = wilson_upper(harmed, treated, conf);
    frontier.benefit_rate_treated[t] =
        static_cast<double>(captured) / static_cast<double>(treated);
    frontier.feasible[static_cast<std::size_t>(t)] =
        frontier.harm_upper[t] <= alpha_harm ? 1 : 0;
  }

  // Feasible rules: maximize capture, ties toward the larger threshold.
  Eigen::Index best = -1;
  for (Eigen::Index t = 0; t < m; ++t) {
    if (!frontier.feasible[static_cast<std::size_t>(t)]) continue;
    if (best < 0 || frontier.benefit_capture[t] >= frontier.benefit_capture[best]) {
      best = t;
    }
  }
  if (best >= 0) {
    frontier.status = NpStatus::Feasible;
    frontier.chosen_index = static_cast<int>(best);
    frontier.chosen_threshold = thresholds[best];
    return frontier;
  }

  // Nothing passes: least harmful rule with nontrivial capture.
  for (Eigen::Index t = 0; t < m; ++t) {
    if (std::isnan(frontier.harm_rate[t])) continue;
    if (frontier.benefit_capture[t] < capture_floor) continue;
    if (best < 0 || frontier.harm_rate[t] <= frontier.harm_rate[best]) best = t;
  }
  if (best < 0) {
    // No threshold clears the capture floor; fall back to any treating rule.
    for (Eigen::Index t = 0; t < m; ++t) {
      if (std::isnan(frontier.harm_rate[t])) continue;
      if (best < 0 || frontier.harm_rate[t] <= frontier.harm_rate[best]) best = t;
    }
  }
  if (best < 0) {
    throw ValidationError("np_frontier: no threshold treats anyone");
  }
  frontier.status = NpStatus::BestAttainable;
  frontier.chosen_index = static_cast<int>(best);
  frontier.chosen_threshold = thresholds[best];
  return frontier;
}

BootstrapResult bootstrap_se(
    const std::function<double(const std::vector<Eigen::Index>&)>& statistic,
    Eigen::Index n, int B, std::uint64_t seed, int threads) {
  if (B < 100) {
    throw ValidationError("bootstrap_se: need B >= 100, got " + std::to_string(B));
  }
  if (n < 1) throw ValidationError("bootstrap_se: n must be >= 1");

  std::vector<double> stats(static_cast<std::size_t>(B));
  parallel_for(B, threads, [&](int b) {
    Rng rng(derive_seed(seed, {0xB005u, static_cast<std::uint64_t>(b)}));
    std::vector<Eigen::Index> sample(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      sample[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(
          rng.uniform_int(static_cast<std::uint64_t>(n)));
    }
    stats[static_cast<std::size_t>(b)] = statistic(sample);
  });

  double mean = 0.0;
  for (double s : stats) mean += s;
  mean /= static_cast<double>(B);
  double ss = 0.0;
  for (double s : stats) ss += (s - mean) * (s - mean);

  BootstrapResult result;
  result.se = std::sqrt(ss / static_cast<double>(B - 1));
  result.lo = quantile(stats, 0.025);
  result.hi = quantile(stats, 0.975);
  return result;
}

}  // namespace hte

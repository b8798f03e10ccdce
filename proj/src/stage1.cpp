#include "hte/stage1.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hte/errors.hpp"
#include "hte/parallel.hpp"
#include "hte/rng.hpp"
#include "hte/special.hpp"
#include "hte/table.hpp"

namespace hte {

namespace {

// Constant covariates carry no interaction information and silently break the
// full-rank requirement; name them instead of failing inside the solver.
void reject_degenerate_covariates(const TrialDataset& data) {
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    const double lo = data.covariates.col(j).minCoeff();
    const double hi = data.covariates.col(j).maxCoeff();
    if (lo == hi) {
      throw ValidationError("stage1: covariate '" + data.covariate_names[j] +
                            "' is constant (degenerate column)");
    }
  }
}

template <class Fn>
auto with_model_label(const std::string& label, Fn&& fn) {
  try {
    return fn();
  } catch (const NonConvergenceError& e) {
    throw NumericError(label + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(label + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(label + ": " + e.what());
  }
}

}  // namespace

Eigen::MatrixXd interaction_design(const TrialDataset& data,
                                   bool with_interactions,
                                   std::vector<std::string>* names) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const Eigen::Index d = with_interactions ? 2 + 2 * p : 2 + p;
  Eigen::MatrixXd design(n, d);
  design.col(0).setOnes();
  design.col(1) = data.treatment.cast<double>();
  design.middleCols(2, p) = data.covariates;
  if (with_interactions) {
    for (Eigen::Index j = 0; j < p; ++j) {
      design.col(2 + p + j) =
          design.col(1).cwiseProduct(data.covariates.col(j));
    }
  }
  if (names) {
    names->clear();
    names->push_back("(intercept)");
    names->push_back("a");
    for (const auto& cov : data.covariate_names) names->push_back(cov);
    if (with_interactions) {
      for (const auto& cov : data.covariate_names) names->push_back("a:" + cov);
    }
  }
  return design;
}

LrtResult lrt_omnibus(const TrialDataset& data) {
  LrtResult result;
  result.df = static_cast<int>(data.p());
  if (result.df == 0) {
    // Identical nested models: nothing to test.
    result.stat = 0.0;
    result.p = 1.0;
    return result;
  }
  reject_degenerate_covariates(data);

  const Eigen::VectorXd y = data.outcome.cast<double>();
  std::vector<std::string> reduced_names, full_names;
  const Eigen::MatrixXd reduced_design =
      interaction_design(data, false, &reduced_names);
  const Eigen::MatrixXd full_design =
      interaction_design(data, true, &full_names);

  const GlmFit reduced = with_model_label("omnibus LRT, reduced model", [&] {
    return fit_logistic(reduced_design, y, reduced_names);
  });
  const GlmFit full = with_model_label("omnibus LRT, full model", [&] {
    return fit_logistic(full_design, y, full_names);
  });

  double stat = 2.0 * (full.log_likelihood - reduced.log_likelihood);
  if (stat < -1e-6) {
    throw NumericError(
        "omnibus LRT: full-model likelihood fell below the reduced model "
        "(stat = " + std::to_string(stat) + "); fits are unreliable");
  }
  result.stat = std::max(stat, 0.0);
  result.p = chisq_sf(result.stat, result.df);
  return result;
}

std::vector<InteractionTest> wald_interactions(
    const TrialDataset& data, const std::vector<std::string>& prespecified) {
  if (prespecified.empty()) return {};
  reject_degenerate_covariates(data);
  for (const auto& name : prespecified) {
    if (data.covariate_index(name) < 0) {
      throw ValidationError("wald_interactions: unknown covariate '" + name +
                            "'");
    }
  }

  const Eigen::VectorXd y = data.outcome.cast<double>();
  std::vector<std::string> names;
  const Eigen::MatrixXd design = interaction_design(data, true, &names);
  const GlmFit fit = with_model_label("interaction model", [&] {
    return fit_logistic(design, y, names);
  });

  // Interaction coefficient block starts after intercept, A, and p main
  // effects.
  const Eigen::Index offset = 2 + data.p();
  std::vector<InteractionTest> tests;
  tests.reserve(prespecified.size());
  for (const auto& name : prespecified) {
    const Eigen::Index j = offset + data.covariate_index(name);
    InteractionTest t;
    t.name = name;
    t.estimate = fit.coefficients[j];
    const double var = fit.covariance(j, j);
    if (!(var > 0.0)) {
      throw NumericError("wald_interactions: nonpositive variance for 'a:" +
                         name + "'");
    }
    t.wald_z = t.estimate / std::sqrt(var);
    t.raw_p = 2.0 * normal_sf(std::fabs(t.wald_z));
    t.holm_p = 1.0;
    tests.push_back(std::move(t));
  }
  return tests;
}

namespace {

void check_p_values(const Eigen::VectorXd& raw, const char* who) {
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!(raw[i] >= 0.0 && raw[i] <= 1.0)) {
      throw ValidationError(std::string(who) +
                            ": p-values must lie in [0, 1]; entry " +
                            std::to_string(i) + " is " +
                            std::to_string(raw[i]));
    }
  }
}

std::vector<Eigen::Index> ascending_order(const Eigen::VectorXd& raw) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(raw.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return raw[a] < raw[b]; });
  return order;
}

}  // namespace

Eigen::VectorXd adjust_holm(const Eigen::VectorXd& raw) {
  check_p_values(raw, "adjust_holm");
  const Eigen::Index m = raw.size();
  Eigen::VectorXd adjusted(m);
  if (m == 0) return adjusted;
  const auto order = ascending_order(raw);
  double running_max = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double scaled = raw[order[i]] * static_cast<double>(m - i);
    running_max = std::max(running_max, scaled);
    adjusted[order[i]] = std::min(running_max, 1.0);
  }
  return adjusted;
}

Eigen::VectorXd adjust_bh(const Eigen::VectorXd& raw) {
  check_p_values(raw, "adjust_bh");
  const Eigen::Index m = raw.size();
  Eigen::VectorXd adjusted(m);
  if (m == 0) return adjusted;
  const auto order = ascending_order(raw);
  double running_min = 1.0;
  for (Eigen::Index i = m - 1; i >= 0; --i) {
    const double scaled =
        raw[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1);
    running_min = std::min(running_min, scaled);
    adjusted[order[i]] = std::min(running_min, 1.0);
  }
  return adjusted;
}

int stepp_default_window(Eigen::Index n) {
  return std::max<Eigen::Index>(50, n / 10);
}

namespace {

struct SortedSample {
  std::vector<Eigen::Index> order;  // subject rows, biomarker ascending
};

SortedSample sort_by_biomarker(const TrialDataset& data, Eigen::Index col) {
  SortedSample s;
  s.order.resize(static_cast<std::size_t>(data.n()));
  std::iota(s.order.begin(), s.order.end(), 0);
  std::stable_sort(s.order.begin(), s.order.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     return data.covariates(a, col) < data.covariates(b, col);
                   });
  return s;
}

// Risk difference within [start, start + size) of the sorted order under the
// given labels; nan when either arm is missing.
double window_risk_diff(const TrialDataset& data,
                        const std::vector<Eigen::Index>& order,
                        const Eigen::VectorXi& labels, int start, int size,
                        int* n_treated = nullptr, int* n_control = nullptr) {
  double sum1 = 0.0, sum0 = 0.0;
  int n1 = 0, n0 = 0;
  for (int k = start; k < start + size; ++k) {
    const Eigen::Index i = order[static_cast<std::size_t>(k)];
    if (labels[i] == 1) {
      sum1 += data.outcome[i];
      ++n1;
    } else {
      sum0 += data.outcome[i];
      ++n0;
    }
  }
  if (n_treated) *n_treated = n1;
  if (n_control) *n_control = n0;
  if (n1 == 0 || n0 == 0) return std::numeric_limits<double>::quiet_NaN();
  return sum1 / n1 - sum0 / n0;
}

}  // namespace

SteppCurve stepp_curve(const TrialDataset& data, const std::string& biomarker,
                       int window_size, int step) {
  const Eigen::Index col = data.covariate_index(biomarker);
  if (col < 0) {
    throw ValidationError("stepp: unknown biomarker '" + biomarker + "'");
  }
  if (data.covariate_kinds[col] != ColumnKind::Continuous) {
    throw ValidationError("stepp: biomarker '" + biomarker +
                          "' is not a continuous column");
  }
  if (window_size < 20) {
    throw ValidationError(
        "stepp: window_size must be >= 20 (narrower windows are too noisy), "
        "got " + std::to_string(window_size));
  }
  if (window_size > data.n()) {
    throw ValidationError("stepp: window_size exceeds the sample size");
  }
  if (step < 1) {
    throw ValidationError("stepp: step must be >= 1");
  }

  const auto sorted = sort_by_biomarker(data, col);
  const int n = static_cast<int>(data.n());

  SteppCurve curve;
  curve.biomarker = biomarker;
  curve.window_size = window_size;
  curve.step = step;

  std::vector<double> centers, diffs;
  for (int start = 0; start + window_size <= n; start += step) {
    int n1 = 0, n0 = 0;
    const double rd =
        window_risk_diff(data, sorted.order, data.treatment, start, window_size,
                         &n1, &n0);
    if (std::isnan(rd)) {
      ++curve.dropped_windows;
      continue;
    }
    // Median biomarker value over the (already sorted) window.
    const int mid = start + window_size / 2;
    double center;
    if (window_size % 2 == 1) {
      center = data.covariates(sorted.order[static_cast<std::size_t>(mid)], col);
    } else {
      center = 0.5 * (data.covariates(sorted.order[static_cast<std::size_t>(mid - 1)], col) +
                      data.covariates(sorted.order[static_cast<std::size_t>(mid)], col));
    }
    centers.push_back(center);
    diffs.push_back(rd);
    curve.counts.emplace_back(n1, n0);
    curve.window_starts.push_back(start);
  }

  curve.window_centers =
      Eigen::Map<Eigen::VectorXd>(centers.data(), static_cast<Eigen::Index>(centers.size()));
  curve.risk_diff =
      Eigen::Map<Eigen::VectorXd>(diffs.data(), static_cast<Eigen::Index>(diffs.size()));
  return curve;
}

void stepp_band(const TrialDataset& data, SteppCurve& curve, int n_perm,
                double level, std::uint64_t seed, int threads) {
  if (n_perm < 200) {
    throw ValidationError("stepp_band: need at least 200 permutations, got " +
                          std::to_string(n_perm));
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw ValidationError("stepp_band: level must lie in (0, 1)");
  }
  const Eigen::Index col = data.covariate_index(curve.biomarker);
  if (col < 0) {
    throw ValidationError("stepp_band: curve biomarker '" + curve.biomarker +
                          "' not found in the dataset");
  }
  const auto sorted = sort_by_biomarker(data, col);
  const int n_windows = static_cast<int>(curve.window_starts.size());

  // One row of window statistics per permutation, filled independently so
  // results do not depend on the thread count.
  Eigen::MatrixXd stats(n_perm, n_windows);
  parallel_for(n_perm, threads, [&](int r) {
    Rng rng(derive_seed(seed, {0x5745u, static_cast<std::uint64_t>(r)}));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(data.n()));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Eigen::VectorXi labels(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      labels[i] = data.treatment[perm[static_cast<std::size_t>(i)]];
    }
    for (int w = 0; w < n_windows; ++w) {
      stats(r, w) = window_risk_diff(data, sorted.order, labels,
                                     curve.window_starts[static_cast<std::size_t>(w)],
                                     curve.window_size);
    }
  });

  curve.band_low.resize(n_windows);
  curve.band_high.resize(n_windows);
  for (int w = 0; w < n_windows; ++w) {
    std::vector<double> column;
    column.reserve(static_cast<std::size_t>(n_perm));
    for (int r = 0; r < n_perm; ++r) {
      if (!std::isnan(stats(r, w))) column.push_back(stats(r, w));
    }
    if (column.empty()) {
      curve.band_low[w] = curve.band_high[w] =
          std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    curve.band_low[w] = quantile(column, level / 2.0);
    curve.band_high[w] = quantile(column, 1.0 - level / 2.0);
  }
}

std::pair<bool, std::vector<std::string>> gate_decision(
    const LrtResult& lrt, const std::vector<InteractionTest>& interactions,
    double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ValidationError("gate_decision: alpha must lie in (0, 1)");
  }
  std::vector<std::string> reasons;
  if (lrt.p < alpha) {
    reasons.push_back("omnibus LRT significant (p = " + format_g6(lrt.p) +
                      " < " + format_g6(alpha) + ")");
  }
  for (const auto& t : interactions) {
    if (t.holm_p < alpha) {
      reasons.push_back("prespecified interaction a:" + t.name +
                        " significant after Holm adjustment (p = " +
                        format_g6(t.holm_p) + " < " + format_g6(alpha) + ")");
    }
  }
  return {!reasons.empty(), std::move(reasons)};
}

Stage1Report run_stage1(const TrialDataset& data,
                        const std::vector<std::string>& prespecified,
                        double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ValidationError("stage1: alpha must lie in (0, 1)");
  }
  Stage1Report report;
  report.alpha = alpha;
  report.lrt = lrt_omnibus(data);
  report.interactions = wald_interactions(data, prespecified);
  if (!report.interactions.empty()) {
    Eigen::VectorXd raw(static_cast<Eigen::Index>(report.interactions.size()));
    for (std::size_t i = 0; i < report.interactions.size(); ++i) {
      raw[static_cast<Eigen::Index>(i)] = report.interactions[i].raw_p;
    }
    const Eigen::VectorXd holm = adjust_holm(raw);
    for (std::size_t i = 0; i < report.interactions.size(); ++i) {
      report.interactions[i].holm_p = holm[static_cast<Eigen::Index>(i)];
    }
  }
  auto [proceed, reasons] = gate_decision(report.lrt, report.interactions, alpha);
  report.proceed = proceed;
  report.reasons = std::move(reasons);
  return report;
}

}  // namespace hte

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hte/dataset.hpp"
#include "hte/glm.hpp"

namespace hte {

// Stage 1: population-level heterogeneity inference on a logistic interaction
// model  logit P(Y=1|A,X) = b0 + bA·A + Σ bj·Xj + Σ cj·(A·Xj).

struct LrtResult {
  double stat = 0.0;
  int df = 0;
  double p = 1.0;
};

struct InteractionTest {
  std::string name;  // covariate whose A-by-X term is tested
  double estimate = 0.0;
  double wald_z = 0.0;
  double raw_p = 1.0;
  double holm_p = 1.0;
};

struct Stage1Report {
  LrtResult lrt;
  std::vector<InteractionTest> interactions;
  double alpha = 0.05;
  bool proceed = false;
  std::vector<std::string> reasons;  // which gate criteria fired; empty iff stop
};

// Treatment-effect pattern plot over overlapping windows of one continuous
// biomarker: per window, the difference in outcome rates between arms.
struct SteppCurve {
  std::string biomarker;
  int window_size = 0;
  int step = 0;
  Eigen::VectorXd window_centers;  // median biomarker value per window
  Eigen::VectorXd risk_diff;       // mean(Y|A=1) - mean(Y|A=0) per window
  std::vector<std::pair<int, int>> counts;  // (n_treated, n_control)
  Eigen::VectorXd band_low;   // permutation band; empty until stepp_band runs
  Eigen::VectorXd band_high;
  int dropped_windows = 0;  // windows discarded for lacking an arm

  // Start offset of each retained window in biomarker-sorted order; kept so
  // the permutation band recomputes the identical window structure.
  std::vector<int> window_starts;
};

// Design matrix for the interaction model: columns are the intercept, A, all
// covariates, and (when with_interactions) all A-by-covariate products.
// Column names land in *names when given.
Eigen::MatrixXd interaction_design(const TrialDataset& data,
                                   bool with_interactions,
                                   std::vector<std::string>* names = nullptr);

// Omnibus likelihood-ratio test of all interaction terms at once:
// reduced = intercept + A + main effects, full = reduced + all A-by-X terms.
LrtResult lrt_omnibus(const TrialDataset& data);

// Wald z-tests for the named A-by-covariate terms, all read off one jointly
// fitted full interaction model (no per-term refits).  holm_p is left at 1;
// callers adjust across the prespecified family.
std::vector<InteractionTest> wald_interactions(
    const TrialDataset& data, const std::vector<std::string>& prespecified);

// Holm step-down adjustment (family-wise error control).
Eigen::VectorXd adjust_holm(const Eigen::VectorXd& raw);

// Benjamini-Hochberg step-up adjustment (false-discovery control).
Eigen::VectorXd adjust_bh(const Eigen::VectorXd& raw);

// Default STEPP window: max(50, n/10); step defaults to half the window.
int stepp_default_window(Eigen::Index n);

// Sliding-window risk differences over the biomarker-sorted sample.
// window_size must be >= 20 (narrower windows are too noisy to plot) and the
// biomarker must be a continuous column.
SteppCurve stepp_curve(const TrialDataset& data, const std::string& biomarker,
                       int window_size, int step);

// Pointwise permutation band: treatment labels are permuted n_perm times
// (n_perm >= 200), the curve recomputed, and the (level/2, 1-level/2)
// quantiles stored into curve.band_low/high.  Deterministic given seed.
void stepp_band(const TrialDataset& data, SteppCurve& curve, int n_perm,
                double level, std::uint64_t seed, int threads = 0);

// Gate rule: proceed iff the omnibus LRT p-value or any Holm-adjusted
// prespecified interaction p-value falls below alpha.
std::pair<bool, std::vector<std::string>> gate_decision(
    const LrtResult& lrt, const std::vector<InteractionTest>& interactions,
    double alpha);

// LRT + Wald/Holm + gate in one call.
Stage1Report run_stage1(const TrialDataset& data,
                        const std::vector<std::string>& prespecified,
                        double alpha);

}  // namespace hte

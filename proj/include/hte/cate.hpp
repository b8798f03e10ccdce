#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hte/dataset.hpp"
#include "hte/forest.hpp"

namespace hte {

// Stage 2 estimation: everything attributed to a subject comes from models
// trained on the other folds (cross-fitting), sharing one FoldAssignment.

struct ForestSpec {
  int n_trees = 500;
  int min_leaf_per_arm = 5;
  int mtry = 0;  // 0 = ceil(sqrt(number of features))
  double subsample_fraction = 0.5;
  double honesty_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

// Cross-fitted propensities and conditional outcome means.
struct NuisanceEstimates {
  Eigen::VectorXd e_hat;    // P(A=1|X), clipped into [clip, 1-clip]
  Eigen::VectorXd mu0_hat;  // E[Y|A=0,X], in [0,1]
  Eigen::VectorXd mu1_hat;  // E[Y|A=1,X], in [0,1]
  FoldAssignment folds;
  double clip = 0.01;
  bool positivity_warning = false;  // propensity estimates hit the clip bounds
};

enum class PseudoFlavor { DR, IPW };

// Per-subject effect surrogates whose mean estimates the ATE.
struct PseudoOutcomes {
  Eigen::VectorXd values;
  PseudoFlavor flavor = PseudoFlavor::DR;
};

enum class LearnerKind { CausalForest, S, T, X };

std::string learner_name(LearnerKind kind);
LearnerKind learner_from_name(const std::string& name);

// A fitted CATE learner with out-of-fold scores tau_hat^(-k)(X_i).
struct CateModel {
  LearnerKind kind = LearnerKind::CausalForest;
  ForestSpec spec;
  Eigen::VectorXd oof_scores;  // risk-difference scale, entries in [-1, 1]
  // Component forests per fold (index fold-1).  Layout by kind:
  //   CausalForest: {causal forest}
  //   S:            {joint (X, A) regression}
  //   T:            {mu0, mu1}
  //   X:            {mu0, mu1, g0, g1}
  std::vector<std::vector<HonestForest>> fold_components;
};

enum class PropensityMode { Randomized, Modeled };

// Cross-fitted propensity scores.
//   randomized: the treated fraction of the training folds (constant within
//               each held-out fold) — the design-based choice for RCTs;
//   modeled:    out-of-fold logistic regression on the covariates, with
//               coefficients capped rather than erroring under separation.
// Outputs are clipped into [clip, 1-clip]; *positivity_warning is set when
// any estimate hits the bounds.
Eigen::VectorXd fit_propensity(const TrialDataset& data,
                               const FoldAssignment& folds, PropensityMode mode,
                               double clip = 0.01,
                               bool* positivity_warning = nullptr);

// Cross-fitted outcome means: per fold and arm, an honest regression forest
// on the training folds' subjects of that arm, predicted on the held-out
// fold.  Returns (mu0_hat, mu1_hat).
std::pair<Eigen::VectorXd, Eigen::VectorXd> fit_outcomes(
    const TrialDataset& data, const FoldAssignment& folds,
    const ForestSpec& spec, int threads = 0);

// fit_propensity + fit_outcomes bundled into a NuisanceEstimates.
NuisanceEstimates fit_nuisances(const TrialDataset& data,
                                const FoldAssignment& folds,
                                const ForestSpec& spec, PropensityMode mode,
                                double clip = 0.01, int threads = 0);

// Doubly robust (AIPW) pseudo-outcome:
//   mu1 - mu0 + A (Y - mu1) / e - (1-A) (Y - mu0) / (1-e).
PseudoOutcomes pseudo_dr(const TrialDataset& data,
                         const NuisanceEstimates& nuisance);

// Inverse-propensity pseudo-outcome:  A Y / e - (1-A) Y / (1-e).
PseudoOutcomes pseudo_ipw(const TrialDataset& data,
                          const NuisanceEstimates& nuisance);

// Honest causal forest, cross-fitted by fold: trees maximize the spread of
// within-child treatment-control contrasts and leaves re-estimate contrasts
// on held-out estimation halves.
CateModel fit_causal_forest(const TrialDataset& data,
                            const FoldAssignment& folds, const ForestSpec& spec,
                            int threads = 0);

// Meta-learners over honest regression forests (kind in {S, T, X}):
//   S: one forest on features (X, A); score = prediction(A=1) - prediction(A=0).
//   T: per-arm outcome forests; score = mu1(X) - mu0(X).
//   X: per-arm imputed effects D1 = Y - mu0(X) on treated and
//      D0 = mu1(X) - Y on controls, regressed to g1, g0 and blended as
//      e(X) g0(X) + (1 - e(X)) g1(X) with e from `nuisance`.
// All components are refit per fold on training folds only.
CateModel fit_meta_learner(const TrialDataset& data,
                           const FoldAssignment& folds, LearnerKind kind,
                           const ForestSpec& spec,
                           const NuisanceEstimates& nuisance, int threads = 0);

// Dispatch on kind (causal forest or meta-learner).
CateModel fit_cate(const TrialDataset& data, const FoldAssignment& folds,
                   LearnerKind kind, const ForestSpec& spec,
                   const NuisanceEstimates& nuisance, int threads = 0);

}  // namespace hte

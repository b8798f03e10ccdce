#include "hte/cate.hpp"

#include <algorithm>
#include <cmath>

#include "hte/errors.hpp"
#include "hte/glm.hpp"
#include "hte/rng.hpp"
#include "hte/special.hpp"

namespace hte {

namespace {

// Seed-path tags keeping every forest's random stream distinct.
constexpr std::uint64_t kOutcomeStream = 0x4d55;     // outcome models
constexpr std::uint64_t kCausalStream = 0x4346;      // causal forest
constexpr std::uint64_t kJointStream = 0x534c;       // S-learner joint fit
constexpr std::uint64_t kEffectStream = 0x5847;      // X-learner effect fits

void check_folds(const TrialDataset& data, const FoldAssignment& folds,
                 const char* who) {
  if (folds.k < 2) {
    throw ValidationError(std::string(who) + ": fold assignment has k < 2");
  }
  if (folds.fold_id.size() != data.n()) {
    throw ValidationError(std::string(who) +
                          ": fold assignment length does not match the data");
  }
  for (Eigen::Index i = 0; i < folds.fold_id.size(); ++i) {
    if (folds.fold_id[i] < 1 || folds.fold_id[i] > folds.k) {
      throw ValidationError(std::string(who) + ": fold id " +
                            std::to_string(folds.fold_id[i]) +
                            " outside {1.." + std::to_string(folds.k) + "}");
    }
  }
}

std::vector<int> rows_where(const FoldAssignment& folds, int fold,
                            bool in_fold) {
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < folds.fold_id.size(); ++i) {
    if ((folds.fold_id[i] == fold) == in_fold) {
      rows.push_back(static_cast<int>(i));
    }
  }
  return rows;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X,
                            const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = X.row(rows[r]);
  }
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out[static_cast<Eigen::Index>(r)] = v[rows[r]];
  }
  return out;
}

Eigen::VectorXi gather(const Eigen::VectorXi& v, const std::vector<int>& rows) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out[static_cast<Eigen::Index>(r)] = v[rows[r]];
  }
  return out;
}

ForestParams regression_params(const ForestSpec& spec, std::uint64_t seed,
                               int threads) {
  ForestParams params;
  params.objective = SplitObjective::Mean;
  params.n_trees = spec.n_trees;
  params.min_leaf = spec.min_leaf_per_arm;
  params.mtry = spec.mtry;
  params.subsample_fraction = spec.subsample_fraction;
  params.honesty_fraction = spec.honesty_fraction;
  params.seed = seed;
  params.threads = threads;
  return params;
}

}  // namespace

void ForestSpec::validate() const {
  if (n_trees < 1) throw ValidationError("forest spec: n_trees must be >= 1");
  if (min_leaf_per_arm < 1) {
    throw ValidationError("forest spec: min_leaf_per_arm must be >= 1");
  }
  if (mtry < 0) throw ValidationError("forest spec: mtry must be >= 0");
  if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0)) {
    throw ValidationError("forest spec: subsample_fraction must lie in (0, 1]");
  }
  if (!(honesty_fraction > 0.0 && honesty_fraction <= 1.0)) {
    throw ValidationError("forest spec: honesty_fraction must lie in (0, 1]");
  }
}

std::string learner_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::CausalForest: return "causal_forest";
    case LearnerKind::S: return "s";
    case LearnerKind::T: return "t";
    case LearnerKind::X: return "x";
  }
  return "?";
}

LearnerKind learner_from_name(const std::string& name) {
  if (name == "causal_forest" || name == "cf") return LearnerKind::CausalForest;
  if (name == "s") return LearnerKind::S;
  if (name == "t") return LearnerKind::T;
  if (name == "x") return LearnerKind::X;
  throw ValidationError("unknown learner '" + name +
                        "'; expected causal_forest, s, t, or x");
}

Eigen::VectorXd fit_propensity(const TrialDataset& data,
                               const FoldAssignment& folds, PropensityMode mode,
                               double clip, bool* positivity_warning) {
  check_folds(data, folds, "fit_propensity");
  if (!(clip > 0.0 && clip < 0.5)) {
    throw ValidationError("fit_propensity: clip must lie in (0, 0.5)");
  }
  counters::note_stage2_model_fit();

  Eigen::VectorXd e_hat(data.n());
  bool warned = false;

  for (int fold = 1; fold <= folds.k; ++fold) {
    const auto train = rows_where(folds, fold, false);
    const auto held = rows_where(folds, fold, true);
    long treated = 0;
    for (int row : train) treated += data.treatment[row];
    if (treated == 0 || treated == static_cast<long>(train.size())) {
      throw ValidationError(
          "fit_propensity: training folds for fold " + std::to_string(fold) +
          " contain a single arm (positivity violated)");
    }

    if (mode == PropensityMode::Randomized) {
      const double frac =
          static_cast<double>(treated) / static_cast<double>(train.size());
      const double clipped = std::clamp(frac, clip, 1.0 - clip);
      if (clipped != frac) warned = true;
      for (int row : held) e_hat[row] = clipped;
    } else {
      Eigen::MatrixXd design(static_cast<Eigen::Index>(train.size()),
                             data.p() + 1);
      design.col(0).setOnes();
      design.rightCols(data.p()) = gather_rows(data.covariates, train);
      Eigen::VectorXd a_train(static_cast<Eigen::Index>(train.size()));
      for (std::size_t r = 0; r < train.size(); ++r) {
        a_train[static_cast<Eigen::Index>(r)] = data.treatment[train[r]];
      }
      LogisticOptions options;
      options.clamp_at_separation = true;  // saturate, don't abort
      std::vector<std::string> names = {"(intercept)"};
      names.insert(names.end(), data.covariate_names.begin(),
                   data.covariate_names.end());
      const GlmFit fit = fit_logistic(design, a_train, names, options);
      if (fit.clamped) warned = true;

      Eigen::MatrixXd held_design(static_cast<Eigen::Index>(held.size()),
                                  data.p() + 1);
      held_design.col(0).setOnes();
      held_design.rightCols(data.p()) = gather_rows(data.covariates, held);
      const Eigen::VectorXd pred = fit.predict(held_design);
      for (std::size_t r = 0; r < held.size(); ++r) {
        const double raw = pred[static_cast<Eigen::Index>(r)];
        const double clipped = std::clamp(raw, clip, 1.0 - clip);
        if (clipped != raw) warned = true;
        e_hat[held[r]] = clipped;
      }
    }
  }
  if (positivity_warning) *positivity_warning = warned;
  return e_hat;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> fit_outcomes(
    const TrialDataset& data, const FoldAssignment& folds,
    const ForestSpec& spec, int threads) {
  check_folds(data, folds, "fit_outcomes");
  spec.validate();
  counters::note_stage2_model_fit();

  const Eigen::VectorXd y = data.outcome.cast<double>();
  Eigen::VectorXd mu0(data.n()), mu1(data.n());

  for (int fold = 1; fold <= folds.k; ++fold) {
    const auto held = rows_where(folds, fold, true);
    const Eigen::MatrixXd held_X = gather_rows(data.covariates, held);
    for (int arm = 0; arm < 2; ++arm) {
      std::vector<int> train;
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (folds.fold_id[i] != fold && data.treatment[i] == arm) {
          train.push_back(static_cast<int>(i));
        }
      }
      if (train.empty()) {
        throw ValidationError(
            "fit_outcomes: no subjects with A=" + std::to_string(arm) +
            " outside fold " + std::to_string(fold) + " (positivity violated)");
      }
      const HonestForest forest = HonestForest::fit(
          gather_rows(data.covariates, train), gather(y, train),
          Eigen::VectorXi(),
          regression_params(spec,
                            derive_seed(spec.seed,
                                        {kOutcomeStream,
                                         static_cast<std::uint64_t>(fold),
                                         static_cast<std::uint64_t>(arm)}),
                            threads));
      const Eigen::VectorXd pred = forest.predict(held_X);
      for (std::size_t r = 0; r < held.size(); ++r) {
        (arm == 0 ? mu0 : mu1)[held[r]] = pred[static_cast<Eigen::Index>(r)];
      }
    }
  }
  return {std::move(mu0), std::move(mu1)};
}

NuisanceEstimates fit_nuisances(const TrialDataset& data,
                                const FoldAssignment& folds,
                                const ForestSpec& spec, PropensityMode mode,
                                double clip, int threads) {
  NuisanceEstimates nuisance;
  nuisance.folds = folds;
  nuisance.clip = clip;
  nuisance.e_hat =
      fit_propensity(data, folds, mode, clip, &nuisance.positivity_warning);
  std::tie(nuisance.mu0_hat, nuisance.mu1_hat) =
      fit_outcomes(data, folds, spec, threads);
  return nuisance;
}

namespace {

void check_nuisance(const TrialDataset& data, const NuisanceEstimates& nuisance,
                    const char* who) {
  if (nuisance.e_hat.size() != data.n() ||
      nuisance.mu0_hat.size() != data.n() ||
      nuisance.mu1_hat.size() != data.n()) {
    throw ValidationError(std::string(who) +
                          ": nuisance vectors not aligned with the data");
  }
}

}  // namespace

PseudoOutcomes pseudo_dr(const TrialDataset& data,
                         const NuisanceEstimates& nuisance) {
  check_nuisance(data, nuisance, "pseudo_dr");
  PseudoOutcomes pseudo;
  pseudo.flavor = PseudoFlavor::DR;
  pseudo.values.resize(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double e = nuisance.e_hat[i];
    const double mu0 = nuisance.mu0_hat[i];
    const double mu1 = nuisance.mu1_hat[i];
    const double y = data.outcome[i];
    const double correction = data.treatment[i] == 1
                                  ? (y - mu1) / e
                                  : -(y - mu0) / (1.0 - e);
    pseudo.values[i] = mu1 - mu0 + correction;
  }
  return pseudo;
}

PseudoOutcomes pseudo_ipw(const TrialDataset& data,
                          const NuisanceEstimates& nuisance) {
  check_nuisance(data, nuisance, "pseudo_ipw");
  PseudoOutcomes pseudo;
  pseudo.flavor = PseudoFlavor::IPW;
  pseudo.values.resize(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double e = nuisance.e_hat[i];
    const double y = data.outcome[i];
    pseudo.values[i] =
        data.treatment[i] == 1 ? y / e : -y / (1.0 - e);
  }
  return pseudo;
}

CateModel fit_causal_forest(const TrialDataset& data,
                            const FoldAssignment& folds, const ForestSpec& spec,
                            int threads) {
  check_folds(data, folds, "fit_causal_forest");
  spec.validate();
  counters::note_stage2_model_fit();

  const Eigen::VectorXd y = data.outcome.cast<double>();
  CateModel model;
  model.kind = LearnerKind::CausalForest;
  model.spec = spec;
  model.oof_scores.resize(data.n());
  model.fold_components.resize(static_cast<std::size_t>(folds.k));

  for (int fold = 1; fold <= folds.k; ++fold) {
    const auto train = rows_where(folds, fold, false);
    const auto held = rows_where(folds, fold, true);

    ForestParams params;
    params.objective = SplitObjective::TreatmentContrast;
    params.n_trees = spec.n_trees;
    params.min_leaf = spec.min_leaf_per_arm;
    params.mtry = spec.mtry;
    params.subsample_fraction = spec.subsample_fraction;
    params.honesty_fraction = spec.honesty_fraction;
    params.seed = derive_seed(
        spec.seed, {kCausalStream, static_cast<std::uint64_t>(fold)});
    params.threads = threads;

    HonestForest forest =
        HonestForest::fit(gather_rows(data.covariates, train),
                          gather(y, train), gather(data.treatment, train),
                          params);
    const Eigen::VectorXd pred =
        forest.predict(gather_rows(data.covariates, held));
    for (std::size_t r = 0; r < held.size(); ++r) {
      model.oof_scores[held[r]] = pred[static_cast<Eigen::Index>(r)];
    }
    model.fold_components[static_cast<std::size_t>(fold - 1)].push_back(
        std::move(forest));
  }
  return model;
}

namespace {

// Gather training rows outside `fold`, optionally restricted to one arm.
std::vector<int> training_rows(const TrialDataset& data,
                               const FoldAssignment& folds, int fold, int arm) {
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (folds.fold_id[i] == fold) continue;
    if (arm >= 0 && data.treatment[i] != arm) continue;
    rows.push_back(static_cast<int>(i));
  }
  return rows;
}

}  // namespace

CateModel fit_meta_learner(const TrialDataset& data,
                           const FoldAssignment& folds, LearnerKind kind,
                           const ForestSpec& spec,
                           const NuisanceEstimates& nuisance, int threads) {
  if (kind != LearnerKind::S && kind != LearnerKind::T &&
      kind != LearnerKind::X) {
    throw ValidationError(
        "fit_meta_learner: kind must be S, T, or X (causal forests have their "
        "own fitter)");
  }
  check_folds(data, folds, "fit_meta_learner");
  spec.validate();
  if (kind == LearnerKind::X) check_nuisance(data, nuisance, "fit_meta_learner");
  counters::note_stage2_model_fit();

  const Eigen::VectorXd y = data.outcome.cast<double>();
  CateModel model;
  model.kind = kind;
  model.spec = spec;
  model.oof_scores.resize(data.n());
  model.fold_components.resize(static_cast<std::size_t>(folds.k));

  for (int fold = 1; fold <= folds.k; ++fold) {
    auto& components = model.fold_components[static_cast<std::size_t>(fold - 1)];
    // At most four forests per fold (X-learner); reserving keeps the
    // mu_forest pointers below valid across push_backs.
    components.reserve(4);
    const auto held = rows_where(folds, fold, true);
    const Eigen::MatrixXd held_X = gather_rows(data.covariates, held);

    if (kind == LearnerKind::S) {
      const auto train = training_rows(data, folds, fold, -1);
      Eigen::MatrixXd joint(static_cast<Eigen::Index>(train.size()),
                            data.p() + 1);
      joint.leftCols(data.p()) = gather_rows(data.covariates, train);
      for (std::size_t r = 0; r < train.size(); ++r) {
        joint(static_cast<Eigen::Index>(r), data.p()) =
            data.treatment[train[r]];
      }
      components.push_back(HonestForest::fit(
          joint, gather(y, train), Eigen::VectorXi(),
          regression_params(spec,
                            derive_seed(spec.seed,
                                        {kJointStream,
                                         static_cast<std::uint64_t>(fold)}),
                            threads)));
      Eigen::MatrixXd probe(held_X.rows(), data.p() + 1);
      probe.leftCols(data.p()) = held_X;
      probe.col(data.p()).setOnes();
      const Eigen::VectorXd treated_pred = components[0].predict(probe);
      probe.col(data.p()).setZero();
      const Eigen::VectorXd control_pred = components[0].predict(probe);
      for (std::size_t r = 0; r < held.size(); ++r) {
        model.oof_scores[held[r]] =
            treated_pred[static_cast<Eigen::Index>(r)] -
            control_pred[static_cast<Eigen::Index>(r)];
      }
      continue;
    }

    // T and X both start from per-arm outcome forests on the training folds.
    std::vector<int> train_arm[2];
    HonestForest* mu_forest[2] = {nullptr, nullptr};
    for (int arm = 0; arm < 2; ++arm) {
      train_arm[arm] = training_rows(data, folds, fold, arm);
      if (train_arm[arm].empty()) {
        throw ValidationError(
            "fit_meta_learner: no subjects with A=" + std::to_string(arm) +
            " outside fold " + std::to_string(fold) + " (positivity violated)");
      }
      components.push_back(HonestForest::fit(
          gather_rows(data.covariates, train_arm[arm]),
          gather(y, train_arm[arm]), Eigen::VectorXi(),
          regression_params(spec,
                            derive_seed(spec.seed,
                                        {kOutcomeStream,
                                         static_cast<std::uint64_t>(fold),
                                         static_cast<std::uint64_t>(arm)}),
                            threads)));
      mu_forest[arm] = &components.back();
    }

    if (kind == LearnerKind::T) {
      const Eigen::VectorXd mu1 = mu_forest[1]->predict(held_X);
      const Eigen::VectorXd mu0 = mu_forest[0]->predict(held_X);
      for (std::size_t r = 0; r < held.size(); ++r) {
        model.oof_scores[held[r]] = mu1[static_cast<Eigen::Index>(r)] -
                                    mu0[static_cast<Eigen::Index>(r)];
      }
      continue;
    }

    // X-learner: imputed per-arm effects regressed on covariates.
    //   treated:  D1 = Y - mu0(X)  ->  g1
    //   controls: D0 = mu1(X) - Y  ->  g0
    const Eigen::MatrixXd X1 = gather_rows(data.covariates, train_arm[1]);
    const Eigen::MatrixXd X0 = gather_rows(data.covariates, train_arm[0]);
    Eigen::VectorXd d1 = gather(y, train_arm[1]) - mu_forest[0]->predict(X1);
    Eigen::VectorXd d0 = mu_forest[1]->predict(X0) - gather(y, train_arm[0]);

    components.push_back(HonestForest::fit(
        X0, d0, Eigen::VectorXi(),
        regression_params(spec,
                          derive_seed(spec.seed,
                                      {kEffectStream,
                                       static_cast<std::uint64_t>(fold), 0u}),
                          threads)));
    HonestForest& g0 = components.back();
    components.push_back(HonestForest::fit(
        X1, d1, Eigen::VectorXi(),
        regression_params(spec,
                          derive_seed(spec.seed,
                                      {kEffectStream,
                                       static_cast<std::uint64_t>(fold), 1u}),
                          threads)));
    HonestForest& g1 = components.back();

    const Eigen::VectorXd g0_pred = g0.predict(held_X);
    const Eigen::VectorXd g1_pred = g1.predict(held_X);
    for (std::size_t r = 0; r < held.size(); ++r) {
      const double w = nuisance.e_hat[held[r]];
      model.oof_scores[held[r]] = w * g0_pred[static_cast<Eigen::Index>(r)] +
                                  (1.0 - w) * g1_pred[static_cast<Eigen::Index>(r)];
    }
  }
  return model;
}

CateModel fit_cate(const TrialDataset& data, const FoldAssignment& folds,
                   LearnerKind kind, const ForestSpec& spec,
                   const NuisanceEstimates& nuisance, int threads) {
  if (kind == LearnerKind::CausalForest) {
    return fit_causal_forest(data, folds, spec, threads);
  }
  return fit_meta_learner(data, folds, kind, spec, nuisance, threads);
}

}  // namespace hte

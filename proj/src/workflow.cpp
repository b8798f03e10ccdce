#include "hte/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hte/errors.hpp"
#include "hte/parallel.hpp"
#include "hte/rng.hpp"
#include "hte/table.hpp"

namespace hte {

namespace {

// Seed-path tags for the independent random streams a workflow consumes.
constexpr std::uint64_t kFoldStream = 0xF01D;
constexpr std::uint64_t kNuisanceStream = 0x4E55;
constexpr std::uint64_t kLearnerStream = 0xCA7E;
constexpr std::uint64_t kSteppStream = 0x57E9;
constexpr std::uint64_t kBootstrapStream = 0xB057;
constexpr std::uint64_t kGenerateStream = 0xDA7A;
constexpr std::uint64_t kReplicateStream = 0x5EED;

std::string yes_no(bool b) { return b ? "yes" : "no"; }

}  // namespace

void WorkflowConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ValidationError("config: alpha must lie in (0, 1)");
  }
  if (!(alpha_harm > 0.0 && alpha_harm < 1.0)) {
    throw ValidationError("config: alpha_harm must lie in (0, 1)");
  }
  if (!(wilson_conf > 0.0 && wilson_conf < 1.0)) {
    throw ValidationError("config: wilson_conf must lie in (0, 1)");
  }
  if (!(delta >= 0.0)) throw ValidationError("config: delta must be >= 0");
  if (k_folds < 2) throw ValidationError("config: K must be >= 2");
  if (n_quantiles < 1) throw ValidationError("config: n_quantiles must be >= 1");
  if (uplift_grid < 2) throw ValidationError("config: uplift_grid must be >= 2");
  if (bootstrap_B != 0 && bootstrap_B < 100) {
    throw ValidationError("config: bootstrap_B must be 0 (off) or >= 100");
  }
  if (!(capture_floor >= 0.0 && capture_floor <= 1.0)) {
    throw ValidationError("config: capture_floor must lie in [0, 1]");
  }
  if (!(clip > 0.0 && clip < 0.5)) {
    throw ValidationError("config: clip must lie in (0, 0.5)");
  }
  forest.validate();
  if (!stepp.biomarker.empty()) {
    if (!(stepp.level > 0.0 && stepp.level < 1.0)) {
      throw ValidationError("config: stepp.level must lie in (0, 1)");
    }
  }
}

WorkflowReport run_workflow(const TrialDataset& data,
                            const WorkflowConfig& config) {
  WorkflowReport report = run_stage1_workflow(data, config);
  if (!report.proceed) return report;
  report.stage2 = run_stage2(data, config, &report.narrative);
  return report;
}

WorkflowReport run_stage1_workflow(const TrialDataset& data,
                                   const WorkflowConfig& config) {
  config.validate();
  data.validate();

  WorkflowReport report;

  // ---- Stage 1: population-level heterogeneity inference ----
  report.stage1 =
      run_stage1(data, config.prespecified_interactions, config.alpha);
  report.proceed = report.stage1.proceed;

  report.narrative.push_back(
      "Stage 1: omnibus interaction LRT stat = " +
      format_g6(report.stage1.lrt.stat) + ", df = " +
      std::to_string(report.stage1.lrt.df) + ", p = " +
      format_g6(report.stage1.lrt.p) + ".");
  if (report.stage1.interactions.empty()) {
    report.narrative.push_back(
        "Stage 1: no prespecified interactions were tested.");
  } else {
    std::string line = "Stage 1: Wald tests (Holm-adjusted) for prespecified "
                       "interactions:";
    for (const auto& t : report.stage1.interactions) {
      line += " a:" + t.name + " p = " + format_g6(t.holm_p) + ";";
    }
    line.back() = '.';
    report.narrative.push_back(line);
  }
  report.narrative.push_back(
      "Gate criteria evaluated: omnibus heterogeneity (i) and prespecified "
      "interactions (iii); subgroup-existence testing (ii) not evaluated.");

  if (!config.stepp.biomarker.empty()) {
    const int window = config.stepp.window_size > 0
                           ? config.stepp.window_size
                           : stepp_default_window(data.n());
    const int step =
        config.stepp.step > 0 ? config.stepp.step : std::max(1, window / 2);
    SteppCurve curve = stepp_curve(data, config.stepp.biomarker, window, step);
    stepp_band(data, curve, config.stepp.permutations, config.stepp.level,
               derive_seed(config.master_seed, {kSteppStream}), config.threads);
    report.narrative.push_back(
        "STEPP over '" + config.stepp.biomarker + "': " +
        std::to_string(curve.window_centers.size()) + " windows of size " +
        std::to_string(window) + " (step " + std::to_string(step) + "), " +
        std::to_string(config.stepp.permutations) +
        "-permutation pointwise band at level " + format_g6(config.stepp.level) +
        " (exploratory; does not enter the gate).");
    report.stepp = std::move(curve);
  }

  if (!report.proceed) {
    report.narrative.push_back(
        "Gate: stop. No population-level heterogeneity evidence at alpha = " +
        format_g6(config.alpha) + "; Stage 2 was not run.");
    return report;
  }
  std::string gate_line = "Gate: proceed to Stage 2 —";
  for (const auto& reason : report.stage1.reasons) gate_line += " " + reason + ";";
  gate_line.back() = '.';
  report.narrative.push_back(gate_line);
  return report;
}

Stage2Results run_stage2(const TrialDataset& data, const WorkflowConfig& config,
                         std::vector<std::string>* narrative) {
  config.validate();
  data.validate();
  std::vector<std::string> scratch;
  std::vector<std::string>& lines = narrative ? *narrative : scratch;

  // One fold partition shared by every fit and evaluation.
  Stage2Results stage2;
  stage2.learner = config.learner;
  stage2.folds = make_folds(data, config.k_folds,
                            derive_seed(config.master_seed, {kFoldStream}));

  ForestSpec nuisance_spec = config.forest;
  nuisance_spec.seed = derive_seed(config.master_seed, {kNuisanceStream});
  stage2.nuisance =
      fit_nuisances(data, stage2.folds, nuisance_spec, config.propensity,
                    config.clip, config.threads);
  lines.push_back(
      "Stage 2: cross-fitted nuisances over K = " +
      std::to_string(config.k_folds) + " treatment-stratified folds; " +
      (config.propensity == PropensityMode::Randomized
           ? std::string("design-based propensity (training-fold treated fraction)")
           : std::string("modeled propensity (out-of-fold logistic regression)")) +
      ", clipped to [" + format_g6(config.clip) + ", " +
      format_g6(1.0 - config.clip) + "]; positivity warning: " +
      yes_no(stage2.nuisance.positivity_warning) + ".");

  ForestSpec learner_spec = config.forest;
  learner_spec.seed = derive_seed(config.master_seed, {kLearnerStream});
  CateModel model = fit_cate(data, stage2.folds, config.learner, learner_spec,
                             stage2.nuisance, config.threads);
  stage2.oof_scores = model.oof_scores;
  lines.push_back(
      "Stage 2: learner '" + learner_name(config.learner) + "' (" +
      std::to_string(config.forest.n_trees) +
      " honest trees per fit) produced out-of-fold CATE scores.");

  const PseudoOutcomes pseudo = pseudo_dr(data, stage2.nuisance);
  stage2.uplift = uplift_curve(stage2.oof_scores, pseudo, config.uplift_grid);
  lines.push_back(
      "Stage 2: uplift of score-ranked DR pseudo-outcomes — AUQC = " +
      format_g6(stage2.uplift.auqc_normalized) + " (normalized), " +
      format_g6(stage2.uplift.auqc_cumulative) + " (cumulative).");

  const Eigen::VectorXd grid =
      threshold_grid(stage2.oof_scores, config.n_quantiles);
  stage2.value =
      evaluate_policy_curve(data, stage2.nuisance, stage2.oof_scores, grid);

  if (config.bootstrap_B > 0) {
    // Evaluation-stage bootstrap: per-subject value contributions are fixed;
    // only the subject set is resampled.
    stage2.value.se.resize(grid.size());
    for (Eigen::Index t = 0; t < grid.size(); ++t) {
      Eigen::VectorXd contrib(data.n());
      for (Eigen::Index i = 0; i < data.n(); ++i) {
        const int pi = stage2.oof_scores[i] > grid[t] ? 1 : 0;
        const double mu_pi =
            pi == 1 ? stage2.nuisance.mu1_hat[i] : stage2.nuisance.mu0_hat[i];
        double term = mu_pi;
        if (data.treatment[i] == pi) {
          const double prob = pi == 1 ? stage2.nuisance.e_hat[i]
                                      : 1.0 - stage2.nuisance.e_hat[i];
          term += (data.outcome[i] - mu_pi) / prob;
        }
        contrib[i] = term;
      }
      const auto stat = [&](const std::vector<Eigen::Index>& sample) {
        double sum = 0.0;
        for (const Eigen::Index i : sample) sum += contrib[i];
        return sum / static_cast<double>(sample.size());
      };
      stage2.value.se[t] =
          bootstrap_se(stat, data.n(), config.bootstrap_B,
                       derive_seed(config.master_seed,
                                   {kBootstrapStream,
                                    static_cast<std::uint64_t>(t)}),
                       config.threads)
              .se;
    }
  }

  const double treat_all = stage2.value.values[0];
  const double treat_none = stage2.value.values[stage2.value.values.size() - 1];
  lines.push_back(
      "Stage 2: DR policy value over " + std::to_string(grid.size()) +
      " thresholds — treat-all = " + format_g6(treat_all) + ", treat-none = " +
      format_g6(treat_none) + "; best threshold t* = " +
      format_g6(stage2.value.t_star) + " with value " +
      format_g6(stage2.value.v_star) + " and gain = " +
      format_g6(stage2.value.value_gain) + ".");

  stage2.np = np_frontier(stage2.oof_scores, pseudo, grid, config.delta,
                          config.alpha_harm, config.wilson_conf,
                          config.capture_floor);
  const int c = stage2.np.chosen_index;
  lines.push_back(
      "Stage 2: NP harm screen (margin delta = " + format_g6(config.delta) +
      ", tolerance = " + format_g6(config.alpha_harm) + ", Wilson one-sided " +
      format_g6(config.wilson_conf) + ") — " +
      (stage2.np.status == NpStatus::Feasible
           ? "feasible threshold found: "
           : "no threshold meets the harm bound; best attainable: ") +
      format_g6(stage2.np.chosen_threshold) + " (harm = " +
      format_g6(stage2.np.harm_rate[c]) + ", upper = " +
      format_g6(stage2.np.harm_upper[c]) + ", capture = " +
      format_g6(stage2.np.benefit_capture[c]) + ").");

  return stage2;
}

std::uint64_t replicate_data_seed(std::uint64_t master_seed, int scenario_index,
                                  int replicate) {
  return derive_seed(master_seed,
                     {kGenerateStream, static_cast<std::uint64_t>(scenario_index),
                      static_cast<std::uint64_t>(replicate)});
}

StudySummary replicate_study(const std::vector<ScenarioSpec>& scenarios,
                             int reps, const WorkflowConfig& config) {
  if (reps < 1) throw ValidationError("replicate_study: reps must be >= 1");
  if (scenarios.empty()) {
    throw ValidationError("replicate_study: no scenarios given");
  }
  config.validate();

  StudySummary summary;
  summary.replicates = reps;
  summary.master_seed = config.master_seed;

  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const ScenarioSpec& scenario = scenarios[s];
    scenario.validate();

    struct RepOutcome {
      bool failed = false;
      bool proceeded = false;
      double auqc_cum = 0.0;
      double auqc_norm = 0.0;
      double value_gain = 0.0;
      bool np_infeasible = false;
    };
    std::vector<RepOutcome> outcomes(static_cast<std::size_t>(reps));

    // Replicates own the outer parallelism; everything inside runs
    // single-threaded so results cannot depend on the thread count.
    parallel_for(reps, config.threads, [&](int r) {
      RepOutcome& out = outcomes[static_cast<std::size_t>(r)];
      try {
        const auto [data, truth] = generate_trial(
            scenario, replicate_data_seed(config.master_seed,
                                          static_cast<int>(s), r));
        WorkflowConfig replicate_config = config;
        replicate_config.threads = 1;
        replicate_config.delta = scenario.delta;
        replicate_config.master_seed =
            derive_seed(config.master_seed,
                        {kReplicateStream, static_cast<std::uint64_t>(s),
                         static_cast<std::uint64_t>(r)});
        // The simulation tests every covariate's interaction unless the
        // config prespecifies its own list.
        if (replicate_config.prespecified_interactions.empty()) {
          replicate_config.prespecified_interactions = data.covariate_names;
        }
        const WorkflowReport report = run_workflow(data, replicate_config);
        out.proceeded = report.proceed;
        if (report.stage2) {
          out.auqc_cum = report.stage2->uplift.auqc_cumulative;
          out.auqc_norm = report.stage2->uplift.auqc_normalized;
          out.value_gain = report.stage2->value.value_gain;
          out.np_infeasible =
              report.stage2->np.status == NpStatus::BestAttainable;
        }
      } catch (const Error&) {
        out.failed = true;
      }
    });

    ScenarioSummary sc;
    sc.scenario = scenario.scenario_name.empty()
                      ? "scenario_" + std::to_string(s)
                      : scenario.scenario_name;
    sc.replicates = reps;
    double cum = 0.0, norm = 0.0, gain = 0.0;
    int infeasible = 0;
    for (const auto& out : outcomes) {
      if (out.failed) {
        ++sc.failures;
        continue;
      }
      if (out.proceeded) {
        ++sc.proceeded;
        cum += out.auqc_cum;
        norm += out.auqc_norm;
        gain += out.value_gain;
        if (out.np_infeasible) ++infeasible;
      }
    }
    const int completed = reps - sc.failures;
    sc.proceed_rate =
        completed > 0 ? static_cast<double>(sc.proceeded) / completed : 0.0;
    if (sc.proceeded > 0) {
      sc.mean_auqc_cumulative = cum / sc.proceeded;
      sc.mean_auqc_normalized = norm / sc.proceeded;
      sc.mean_value_gain = gain / sc.proceeded;
      sc.np_infeasible_rate = static_cast<double>(infeasible) / sc.proceeded;
    } else {
      sc.mean_auqc_cumulative = std::numeric_limits<double>::quiet_NaN();
      sc.mean_auqc_normalized = std::numeric_limits<double>::quiet_NaN();
      sc.mean_value_gain = std::numeric_limits<double>::quiet_NaN();
      sc.np_infeasible_rate = std::numeric_limits<double>::quiet_NaN();
    }
    if (completed > 0) {
      // Stopped replicates deploy no individualized rule: they contribute
      // zero to the unconditional averages.
      sc.uncond_mean_auqc_cumulative = cum / completed;
      sc.uncond_mean_auqc_normalized = norm / completed;
      sc.uncond_mean_value_gain = gain / completed;
    }
    summary.scenarios.push_back(std::move(sc));
  }
  return summary;
}

WorkflowReport run_actg175(const std::string& path, WorkflowConfig config,
                           const std::vector<std::string>& covariates) {
  const NumericTable raw = read_csv(path);
  const TrialDataset data = preprocess_actg175(
      raw, covariates.empty() ? actg175_default_covariates() : covariates);

  config.delta = 0.0;  // margin 0: any estimated benefit counts
  config.prespecified_interactions = {"karnof", "cd40"};
  if (config.stepp.biomarker.empty()) config.stepp.biomarker = "cd40";

  WorkflowReport report = run_workflow(data, config);
  report.narrative.insert(
      report.narrative.begin(),
      {"ACTG 175 preprocessing: dropped the didanosine-monotherapy arm; A = 0 "
       "for AZT monotherapy, A = 1 for either combination arm; N = " +
           std::to_string(data.n()) + ", p = " + std::to_string(data.p()) + ".",
       "Outcome rule: Y = 1 unless an event occurred by day 672 (96 weeks); "
       "subjects censored event-free before day 672 are retained with Y = 1 "
       "(assumption — no further exclusions are applied)."});
  return report;
}

}  // namespace hte

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hte/cate.hpp"
#include "hte/dataset.hpp"
#include "hte/policy.hpp"
#include "hte/simgen.hpp"
#include "hte/stage1.hpp"

namespace hte {

// Optional treatment-effect pattern plot computed alongside Stage 1.
struct SteppConfig {
  std::string biomarker;  // empty disables STEPP
  int window_size = 0;    // 0 = max(50, n/10)
  int step = 0;           // 0 = half the window
  int permutations = 200;
  double level = 0.05;
};

// Every tunable of the two-stage analysis in one place.
struct WorkflowConfig {
  double alpha = 0.05;      // Stage-1 gate level
  double delta = 0.03;      // clinical margin (0.03 simulation, 0 for ACTG)
  double alpha_harm = 0.10; // NP harm tolerance
  int k_folds = 5;
  LearnerKind learner = LearnerKind::CausalForest;
  ForestSpec forest;
  int n_quantiles = 19;  // interior threshold-grid size
  std::vector<std::string> prespecified_interactions;
  int bootstrap_B = 0;  // 0 = no bootstrap SEs on the value curve
  std::uint64_t master_seed = 1;
  double capture_floor = 0.05;  // minimum capture for a best-attainable pick
  double wilson_conf = 0.95;
  PropensityMode propensity = PropensityMode::Randomized;
  double clip = 0.01;
  SteppConfig stepp;
  int uplift_grid = 100;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

// Everything Stage 2 produced, sharing one fold assignment.
struct Stage2Results {
  FoldAssignment folds;
  NuisanceEstimates nuisance;
  LearnerKind learner = LearnerKind::CausalForest;
  Eigen::VectorXd oof_scores;
  UpliftCurve uplift;
  PolicyValueCurve value;
  NpFrontier np;
};

struct WorkflowReport {
  Stage1Report stage1;
  std::optional<SteppCurve> stepp;
  bool proceed = false;
  std::optional<Stage2Results> stage2;  // present iff proceed
  // Ordered decision records: what was tested, at what level, what was chosen
  // and why.
  std::vector<std::string> narrative;
};

// Stage 1 -> gate -> (conditionally) Stage 2 on a single dataset.  Stage 2
// builds one fold assignment, fits nuisances and the configured learner, and
// evaluates uplift, the DR value curve, and the NP frontier against DR
// pseudo-outcomes.  Nothing in Stage 2 runs when the gate stops.
WorkflowReport run_workflow(const TrialDataset& data,
                            const WorkflowConfig& config);

// Stage 1 with narrative, the optional STEPP curve, and the gate decision —
// stage2 always absent.  run_workflow runs this first and appends Stage 2
// when the gate passes; the stage1 command returns it as-is.
WorkflowReport run_stage1_workflow(const TrialDataset& data,
                                   const WorkflowConfig& config);

// The estimation stage alone, gate ignored: one fold assignment, nuisances,
// the configured learner, uplift, value curve (with optional bootstrap SEs),
// and the NP frontier.  run_workflow calls this after the gate passes; the
// stage2 command calls it directly.  Narrative lines are appended to
// *narrative when non-null.
Stage2Results run_stage2(const TrialDataset& data, const WorkflowConfig& config,
                         std::vector<std::string>* narrative = nullptr);

// Per-scenario aggregate over replicates.  The headline Stage-2 means
// condition on gate passage (Stage 2 only runs in replicates that proceed);
// the uncond_* columns average over all replicates with stopped replicates
// contributing zero.
struct ScenarioSummary {
  std::string scenario;
  int replicates = 0;
  int proceeded = 0;
  int failures = 0;
  double proceed_rate = 0.0;
  double mean_auqc_cumulative = 0.0;
  double mean_auqc_normalized = 0.0;
  double mean_value_gain = 0.0;
  double uncond_mean_auqc_cumulative = 0.0;
  double uncond_mean_auqc_normalized = 0.0;
  double uncond_mean_value_gain = 0.0;
  double np_infeasible_rate = 0.0;  // among proceeded replicates
};

struct StudySummary {
  std::vector<ScenarioSummary> scenarios;
  int replicates = 0;
  std::uint64_t master_seed = 0;
};

// Generates `reps` trials per scenario (seeds derived from the master seed,
// scenario index, and replicate index), runs the full workflow on each, and
// aggregates.  Replicates run in parallel with identical results for any
// thread count; per-replicate errors are counted, not fatal.
StudySummary replicate_study(const std::vector<ScenarioSpec>& scenarios,
                             int reps, const WorkflowConfig& config);

// Seed replicate_study uses to draw replicate r of scenario s; exposed so
// `simulate` emits exactly the trials `study` consumes.
std::uint64_t replicate_data_seed(std::uint64_t master_seed, int scenario_index,
                                  int replicate);

// Loads the raw ACTG 175 table, preprocesses it, and runs the workflow with
// the trial's settings: margin delta = 0, prespecified interactions Karnofsky
// and baseline CD4, and STEPP over baseline CD4.  An empty covariates list
// selects the default sixteen baseline covariates.
WorkflowReport run_actg175(const std::string& path, WorkflowConfig config,
                           const std::vector<std::string>& covariates = {});

// Writes summary.json plus the delimited curve files (uplift.csv, value.csv,
// np.csv, stepp.csv) into out_dir; returns the paths written.  Curve files
// appear only when the corresponding analysis ran.  Output bytes are
// deterministic: fixed field order, six significant digits.
std::vector<std::string> emit_report(const WorkflowReport& report,
                                     const std::string& out_dir);

// Writes study.json and study.csv (one row per scenario).
std::vector<std::string> emit_report(const StudySummary& summary,
                                     const std::string& out_dir);

// Applies a JSON config file on top of `config` (file settings win over
// whatever is already set).  Recognized keys mirror WorkflowConfig, plus
// "schema" {covariates, treatment, outcome} and "actg_covariates" which are
// written to *schema / *actg_covariates when non-null.
void apply_config_file(const std::string& path, WorkflowConfig& config,
                       ColumnSchema* schema = nullptr,
                       std::vector<std::string>* actg_covariates = nullptr);

}  // namespace hte

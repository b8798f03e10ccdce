// Command line front end for the two-stage subgroup / treatment-policy
// workflow.  Subcommands: simulate, stage1, stage2, run, study, actg175.
// Settings resolve as defaults < flags < config file; exit codes are
// 0 success, 2 validation error, 3 numeric failure, 4 I/O.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hte/dataset.hpp"
#include "hte/errors.hpp"
#include "hte/simgen.hpp"
#include "hte/table.hpp"
#include "hte/workflow.hpp"

namespace {

// Scenario order shared with `study`, so `simulate --scenario X --seed S`
// reproduces the trials of study replicate (X, r) bit for bit.
const std::vector<std::string> kScenarios = {"no", "weak", "strong"};

int scenario_index(const std::string& name) {
  for (std::size_t i = 0; i < kScenarios.size(); ++i) {
    if (kScenarios[i] == name) return static_cast<int>(i);
  }
  throw hte::ValidationError("unknown scenario '" + name +
                             "' (expected no | weak | strong)");
}

// Flags shared by every subcommand that runs (part of) the analysis.
struct AnalysisFlags {
  std::string learner;
  std::string propensity;
  std::string config_path;
};

void add_analysis_flags(CLI::App* cmd, hte::WorkflowConfig& config,
                        AnalysisFlags& extra) {
  cmd->add_option("--alpha", config.alpha, "Stage-1 gate level");
  cmd->add_option("--delta", config.delta,
                  "clinical margin defining a benefiter");
  cmd->add_option("--alpha-harm", config.alpha_harm,
                  "harm tolerance for the NP screen");
  cmd->add_option("-k,--k", config.k_folds, "number of cross-fitting folds");
  cmd->add_option("--learner", extra.learner,
                  "CATE learner: causal_forest | s | t | x");
  cmd->add_option("--trees", config.forest.n_trees, "trees per forest fit");
  cmd->add_option("--min-leaf", config.forest.min_leaf_per_arm,
                  "minimum estimation-leaf size per arm");
  cmd->add_option("--mtry", config.forest.mtry,
                  "features tried per split (0 = ceil(sqrt(p)))");
  cmd->add_option("--subsample", config.forest.subsample_fraction,
                  "per-tree subsample fraction");
  cmd->add_option("--honesty", config.forest.honesty_fraction,
                  "fraction of the subsample used to grow the tree");
  cmd->add_option("--n-quantiles", config.n_quantiles,
                  "interior threshold-grid size");
  cmd->add_option("--uplift-grid", config.uplift_grid,
                  "uplift curve grid points");
  cmd->add_option("--interactions", config.prespecified_interactions,
                  "prespecified interaction covariates")
      ->delimiter(',');
  cmd->add_option("--bootstrap", config.bootstrap_B,
                  "bootstrap replicates for value-curve SEs (0 = off)");
  cmd->add_option("--seed", config.master_seed, "master seed");
  cmd->add_option("--capture-floor", config.capture_floor,
                  "minimum benefit capture for a best-attainable pick");
  cmd->add_option("--wilson-conf", config.wilson_conf,
                  "one-sided Wilson confidence level");
  cmd->add_option("--propensity", extra.propensity,
                  "propensity mode: randomized | modeled");
  cmd->add_option("--clip", config.clip, "propensity clipping bound");
  cmd->add_option("--stepp-biomarker", config.stepp.biomarker,
                  "continuous covariate for STEPP (empty = off)");
  cmd->add_option("--stepp-window", config.stepp.window_size,
                  "STEPP window size (0 = max(50, n/10))");
  cmd->add_option("--stepp-step", config.stepp.step,
                  "STEPP window step (0 = half the window)");
  cmd->add_option("--stepp-perms", config.stepp.permutations,
                  "permutations for the STEPP band");
  cmd->add_option("--stepp-level", config.stepp.level, "STEPP band level");
  cmd->add_option("--threads", config.threads,
                  "worker threads (0 = hardware concurrency)");
  cmd->add_option("--config", extra.config_path,
                  "JSON config file; its settings override flags");
}

void add_schema_flags(CLI::App* cmd, hte::ColumnSchema& schema,
                      std::string& schema_path) {
  cmd->add_option("--covariates", schema.covariate_names,
                  "covariate columns (default: all but treatment/outcome)")
      ->delimiter(',');
  cmd->add_option("--treatment", schema.treatment_column, "treatment column");
  cmd->add_option("--outcome", schema.outcome_column, "outcome column");
  cmd->add_option("--schema", schema_path,
                  "JSON schema file {covariates, treatment, outcome}");
}

void read_schema_file(const std::string& path, hte::ColumnSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw hte::IoError("cannot open schema file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw hte::ValidationError("schema file '" + path + "': " + e.what());
  }
  const nlohmann::json& s = j.contains("schema") ? j.at("schema") : j;
  try {
    if (s.contains("covariates")) {
      schema.covariate_names =
          s.at("covariates").get<std::vector<std::string>>();
    }
    if (s.contains("treatment")) {
      schema.treatment_column = s.at("treatment").get<std::string>();
    }
    if (s.contains("outcome")) {
      schema.outcome_column = s.at("outcome").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw hte::ValidationError("schema file '" + path + "': " + e.what());
  }
}

// Resolves the string-valued flags and lets the config file override
// everything, honoring: defaults < flags < config file.
void finalize_config(const AnalysisFlags& extra, hte::WorkflowConfig& config,
                     hte::ColumnSchema* schema = nullptr,
                     std::vector<std::string>* actg_covariates = nullptr) {
  if (!extra.learner.empty()) {
    config.learner = hte::learner_from_name(extra.learner);
  }
  if (!extra.propensity.empty()) {
    if (extra.propensity == "randomized") {
      config.propensity = hte::PropensityMode::Randomized;
    } else if (extra.propensity == "modeled") {
      config.propensity = hte::PropensityMode::Modeled;
    } else {
      throw hte::ValidationError(
          "--propensity must be 'randomized' or 'modeled'");
    }
  }
  if (!extra.config_path.empty()) {
    hte::apply_config_file(extra.config_path, config, schema, actg_covariates);
  }
}

hte::TrialDataset load_input(const std::string& input,
                             hte::ColumnSchema schema) {
  const hte::NumericTable table = hte::read_csv(input);
  if (schema.covariate_names.empty()) {
    for (const auto& name : table.columns) {
      if (name != schema.treatment_column && name != schema.outcome_column) {
        schema.covariate_names.push_back(name);
      }
    }
  }
  return hte::dataset_from_table(table, schema);
}

void ensure_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw hte::IoError("cannot create output directory '" + out_dir +
                       "': " + ec.message());
  }
}

void print_report(const hte::WorkflowReport& report,
                  const std::vector<std::string>& written) {
  for (const auto& line : report.narrative) std::cout << line << '\n';
  for (const auto& path : written) std::cout << "wrote " << path << '\n';
}

int run_simulate(const std::string& scenario, int n, int reps,
                 std::uint64_t seed, double delta, bool delta_set,
                 const std::string& out) {
  hte::ScenarioSpec spec = hte::ScenarioSpec::preset(scenario);
  const int s = scenario_index(scenario);
  if (n > 0) spec.n = n;
  if (delta_set) spec.delta = delta;
  if (reps < 1) throw hte::ValidationError("simulate: --reps must be >= 1");
  ensure_dir(out);

  const std::filesystem::path dir(out);
  for (int r = 0; r < reps; ++r) {
    const auto [data, truth] =
        hte::generate_trial(spec, hte::replicate_data_seed(seed, s, r));
    hte::write_csv(hte::dataset_to_table(data),
                   (dir / ("trial_" + std::to_string(r) + ".csv")).string());

    hte::NumericTable truth_table;
    truth_table.columns = {"tau", "z"};
    truth_table.values.resize(data.n(), 2);
    truth_table.values.col(0) = truth.tau;
    truth_table.values.col(1) = truth.z.cast<double>();
    hte::write_csv(truth_table,
                   (dir / ("truth_" + std::to_string(r) + ".csv")).string());
  }
  std::cout << "simulate: scenario '" << spec.scenario_name << "', n = "
            << spec.n << ", delta = " << hte::format_g6(spec.delta) << ": wrote "
            << reps << " replicate(s) (trial_<r>.csv, truth_<r>.csv) to " << out
            << '\n';
  return 0;
}

int main_checked(int argc, char** argv) {
  CLI::App app{
      "hte — two-stage workflow for subgroup identification and "
      "individualized treatment policies in randomized trials"};
  app.require_subcommand(1);

  // ---- simulate ----
  auto* sim = app.add_subcommand(
      "simulate", "Generate synthetic trial replicates with ground truth");
  std::string sim_scenario;
  int sim_n = 0;
  int sim_reps = 1;
  std::uint64_t sim_seed = 1;
  double sim_delta = 0.03;
  std::string sim_out = "sim_out";
  sim->add_option("--scenario", sim_scenario, "no | weak | strong")->required();
  sim->add_option("--n", sim_n, "subjects per replicate (0 = scenario default)");
  sim->add_option("--reps", sim_reps, "number of replicates");
  sim->add_option("--seed", sim_seed, "master seed");
  auto* sim_delta_opt =
      sim->add_option("--delta", sim_delta, "benefit margin for the z labels");
  sim->add_option("--out", sim_out, "output directory");

  // ---- stage1 ----
  auto* s1 = app.add_subcommand(
      "stage1", "Population-level heterogeneity tests, gate, optional STEPP");
  std::string s1_input, s1_out = "stage1_out", s1_schema_path;
  hte::WorkflowConfig s1_config;
  hte::ColumnSchema s1_schema;
  AnalysisFlags s1_extra;
  s1->add_option("--input", s1_input, "trial CSV")->required();
  s1->add_option("--out", s1_out, "output directory");
  add_schema_flags(s1, s1_schema, s1_schema_path);
  add_analysis_flags(s1, s1_config, s1_extra);

  // ---- stage2 ----
  auto* s2 = app.add_subcommand(
      "stage2", "Estimation stage alone (CATE, uplift, policy value, harm "
                "screen), gate bypassed");
  std::string s2_input, s2_out = "stage2_out", s2_schema_path;
  hte::WorkflowConfig s2_config;
  hte::ColumnSchema s2_schema;
  AnalysisFlags s2_extra;
  s2->add_option("--input", s2_input, "trial CSV")->required();
  s2->add_option("--out", s2_out, "output directory");
  add_schema_flags(s2, s2_schema, s2_schema_path);
  add_analysis_flags(s2, s2_config, s2_extra);

  // ---- run ----
  auto* run = app.add_subcommand(
      "run", "Full two-stage workflow on a file or a generated scenario");
  std::string run_input, run_scenario, run_out = "run_out", run_schema_path;
  int run_n = 0;
  hte::WorkflowConfig run_config;
  hte::ColumnSchema run_schema;
  AnalysisFlags run_extra;
  auto* run_input_opt = run->add_option("--input", run_input, "trial CSV");
  auto* run_scenario_opt =
      run->add_option("--scenario", run_scenario,
                      "generate one replicate: no | weak | strong");
  run_input_opt->excludes(run_scenario_opt);
  run->add_option("--n", run_n, "subjects when generating (0 = default)");
  run->add_option("--out", run_out, "output directory");
  add_schema_flags(run, run_schema, run_schema_path);
  add_analysis_flags(run, run_config, run_extra);

  // ---- study ----
  auto* study = app.add_subcommand(
      "study", "Replicate the three-scenario simulation study");
  int study_reps = 200;
  int study_n = 0;
  std::string study_out = "study_out";
  hte::WorkflowConfig study_config;
  AnalysisFlags study_extra;
  study->add_option("--reps", study_reps, "replicates per scenario");
  study->add_option("--n", study_n, "subjects per replicate (0 = default)");
  study->add_option("--out", study_out, "output directory");
  add_analysis_flags(study, study_config, study_extra);

  // ---- actg175 ----
  auto* actg = app.add_subcommand(
      "actg175", "Run the workflow on the raw ACTG 175 table");
  std::string actg_input, actg_out = "actg175_out";
  hte::WorkflowConfig actg_config;
  AnalysisFlags actg_extra;
  actg->add_option("--input", actg_input, "raw ACTG 175 CSV")->required();
  actg->add_option("--out", actg_out, "output directory");
  add_analysis_flags(actg, actg_config, actg_extra);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 2;
  }

  if (sim->parsed()) {
    return run_simulate(sim_scenario, sim_n, sim_reps, sim_seed, sim_delta,
                        sim_delta_opt->count() > 0, sim_out);
  }

  if (s1->parsed()) {
    if (!s1_schema_path.empty()) read_schema_file(s1_schema_path, s1_schema);
    finalize_config(s1_extra, s1_config, &s1_schema);
    const hte::TrialDataset data = load_input(s1_input, s1_schema);
    const hte::WorkflowReport report = hte::run_stage1_workflow(data, s1_config);
    print_report(report, hte::emit_report(report, s1_out));
    return 0;
  }

  if (s2->parsed()) {
    if (!s2_schema_path.empty()) read_schema_file(s2_schema_path, s2_schema);
    finalize_config(s2_extra, s2_config, &s2_schema);
    const hte::TrialDataset data = load_input(s2_input, s2_schema);
    hte::WorkflowReport report;
    report.stage1.alpha = s2_config.alpha;
    report.stage1.lrt = {std::numeric_limits<double>::quiet_NaN(), 0,
                         std::numeric_limits<double>::quiet_NaN()};
    report.stage1.proceed = true;
    report.stage1.reasons = {
        "gate bypassed: estimation stage invoked directly"};
    report.proceed = true;
    report.narrative.push_back(
        "Stage 1 skipped: the estimation stage was invoked directly (no gate "
        "was evaluated).");
    report.stage2 = hte::run_stage2(data, s2_config, &report.narrative);
    print_report(report, hte::emit_report(report, s2_out));
    return 0;
  }

  if (run->parsed()) {
    if (!run_schema_path.empty()) read_schema_file(run_schema_path, run_schema);
    finalize_config(run_extra, run_config, &run_schema);
    hte::TrialDataset data;
    if (run_scenario_opt->count() > 0) {
      hte::ScenarioSpec spec = hte::ScenarioSpec::preset(run_scenario);
      if (run_n > 0) spec.n = run_n;
      spec.delta = run_config.delta;
      data = hte::generate_trial(
                 spec, hte::replicate_data_seed(run_config.master_seed,
                                                scenario_index(run_scenario), 0))
                 .first;
    } else if (run_input_opt->count() > 0) {
      data = load_input(run_input, run_schema);
    } else {
      throw hte::ValidationError("run: give either --input or --scenario");
    }
    const hte::WorkflowReport report = hte::run_workflow(data, run_config);
    print_report(report, hte::emit_report(report, run_out));
    return 0;
  }

  if (study->parsed()) {
    finalize_config(study_extra, study_config);
    std::vector<hte::ScenarioSpec> scenarios = {hte::ScenarioSpec::no_hte(),
                                                hte::ScenarioSpec::weak_hte(),
                                                hte::ScenarioSpec::strong_hte()};
    if (study_n > 0) {
      for (auto& spec : scenarios) spec.n = study_n;
    }
    // replicate_study takes the benefit margin from each scenario.
    for (auto& spec : scenarios) spec.delta = study_config.delta;
    const hte::StudySummary summary =
        hte::replicate_study(scenarios, study_reps, study_config);
    for (const auto& sc : summary.scenarios) {
      std::cout << sc.scenario << ": proceed rate " << hte::format_g6(sc.proceed_rate)
                << " (" << sc.proceeded << "/" << sc.replicates << ", "
                << sc.failures << " failed); over proceeding replicates: AUQC "
                << hte::format_g6(sc.mean_auqc_cumulative) << " (cumulative) / "
                << hte::format_g6(sc.mean_auqc_normalized)
                << " (normalized), value gain "
                << hte::format_g6(sc.mean_value_gain) << ", NP infeasible rate "
                << hte::format_g6(sc.np_infeasible_rate) << '\n';
    }
    for (const auto& path : hte::emit_report(summary, study_out)) {
      std::cout << "wrote " << path << '\n';
    }
    return 0;
  }

  if (actg->parsed()) {
    std::vector<std::string> covariates;
    finalize_config(actg_extra, actg_config, nullptr, &covariates);
    const hte::WorkflowReport report =
        hte::run_actg175(actg_input, actg_config, covariates);
    print_report(report, hte::emit_report(report, actg_out));
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return main_checked(argc, argv);
  } catch (const hte::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "hte/errors.hpp"
#include "hte/rng.hpp"
#include "hte/workflow.hpp"
#include "helpers.hpp"

using hte::ScenarioSpec;
using hte::TrialDataset;
using hte::ValidationError;
using hte::WorkflowConfig;
using hte::WorkflowReport;

namespace {

std::string temp_dir() {
  char tmpl[] = "/tmp/hte_workflow_XXXXXX";
  return mkdtemp(tmpl);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

bool contains_line_with(const std::vector<std::string>& lines,
                        const std::string& needle) {
  for (const auto& line : lines) {
    if (line.find(needle) != std::string::npos) return true;
  }
  return false;
}

WorkflowConfig small_config() {
  WorkflowConfig config;
  config.k_folds = 3;
  config.forest.n_trees = 40;
  config.master_seed = 7;
  config.prespecified_interactions = {"x1", "x2", "x3"};
  config.threads = 1;
  return config;
}

}  // namespace

TEST_CASE("workflow configuration is validated") {
  WorkflowConfig config;
  config.alpha = 0.0;
  CHECK_THROWS_AS(config.validate(), ValidationError);
  config = WorkflowConfig{};
  config.delta = -0.2;
  CHECK_THROWS_AS(config.validate(), ValidationError);
  config = WorkflowConfig{};
  config.k_folds = 1;
  CHECK_THROWS_AS(config.validate(), ValidationError);
  config = WorkflowConfig{};
  config.n_quantiles = 0;
  CHECK_THROWS_AS(config.validate(), ValidationError);
  config = WorkflowConfig{};
  config.bootstrap_B = 50;  // below the bootstrap minimum but nonzero
  CHECK_THROWS_AS(config.validate(), ValidationError);
  config = WorkflowConfig{};
  config.uplift_grid = 1;
  CHECK_THROWS_AS(config.validate(), ValidationError);
}

TEST_CASE("a stopped gate means no stage-2 work at all") {
  // Outcomes carry no treatment interaction, so the gate should stop at a
  // strict alpha; the counters prove no fold map or model fit happened.
  ScenarioSpec null_spec = ScenarioSpec::no_hte();
  null_spec.gamma0 = 0.0;
  null_spec.gamma1 = 0.0;
  null_spec.n = 600;
  WorkflowConfig config = small_config();
  config.alpha = 1e-6;  // essentially impossible under the null

  const auto [data, truth] = hte::generate_trial(null_spec, 2);
  const long folds_before = hte::counters::make_folds_calls();
  const long fits_before = hte::counters::stage2_model_fits();
  const WorkflowReport report = hte::run_workflow(data, config);

  CHECK_FALSE(report.proceed);
  CHECK_FALSE(report.stage2.has_value());
  CHECK(report.stage1.reasons.empty());
  CHECK(hte::counters::make_folds_calls() == folds_before);
  CHECK(hte::counters::stage2_model_fits() == fits_before);
  CHECK(contains_line_with(report.narrative, "Gate: stop"));
  CHECK(contains_line_with(report.narrative, "Stage 2 was not run"));
}

TEST_CASE("a proceeding workflow builds exactly one fold assignment") {
  ScenarioSpec strong = ScenarioSpec::strong_hte();
  strong.n = 900;
  const auto [data, truth] = hte::generate_trial(strong, 5);
  WorkflowConfig config = small_config();

  const long folds_before = hte::counters::make_folds_calls();
  const WorkflowReport report = hte::run_workflow(data, config);
  REQUIRE(report.proceed);
  REQUIRE(report.stage2.has_value());
  CHECK(hte::counters::make_folds_calls() == folds_before + 1);

  const auto& stage2 = *report.stage2;
  // Everything downstream shares the one fold map.
  CHECK(stage2.folds.fold_id == stage2.nuisance.folds.fold_id);
  CHECK(stage2.oof_scores.size() == data.n());
  CHECK(stage2.value.thresholds.size() >= 2);
  CHECK(stage2.np.chosen_index >= 0);
  CHECK(contains_line_with(report.narrative, "Gate: proceed"));
  CHECK(contains_line_with(report.narrative, "honest trees"));
  // Chosen policy threshold comes from the evaluated grid.
  bool found = false;
  for (Eigen::Index t = 0; t < stage2.value.thresholds.size(); ++t) {
    if (stage2.value.thresholds[t] == stage2.value.t_star) found = true;
  }
  CHECK(found);
}

TEST_CASE("stepp is computed when a biomarker is configured") {
  ScenarioSpec strong = ScenarioSpec::strong_hte();
  strong.n = 700;
  const auto [data, truth] = hte::generate_trial(strong, 12);
  WorkflowConfig config = small_config();
  config.stepp.biomarker = "x1";
  config.stepp.permutations = 200;

  const WorkflowReport report = hte::run_stage1_workflow(data, config);
  REQUIRE(report.stepp.has_value());
  CHECK(report.stepp->biomarker == "x1");
  CHECK(report.stepp->window_size == hte::stepp_default_window(data.n()));
  CHECK(report.stepp->step == report.stepp->window_size / 2);
  CHECK(report.stepp->band_low.size() == report.stepp->risk_diff.size());
  CHECK_FALSE(report.stage2.has_value());  // stage-1 entry point never fits
}

TEST_CASE("the stage-2 entry point runs without a gate") {
  ScenarioSpec weak = ScenarioSpec::weak_hte();
  weak.n = 600;
  const auto [data, truth] = hte::generate_trial(weak, 3);
  WorkflowConfig config = small_config();
  std::vector<std::string> narrative;
  const auto stage2 = hte::run_stage2(data, config, &narrative);
  CHECK(stage2.oof_scores.size() == data.n());
  CHECK(contains_line_with(narrative, "Stage 2"));
  CHECK(std::isfinite(stage2.uplift.auqc_normalized));
}

TEST_CASE("reports are byte-identical across repeated runs and thread counts") {
  ScenarioSpec strong = ScenarioSpec::strong_hte();
  strong.n = 700;
  const auto [data, truth] = hte::generate_trial(strong, 8);
  WorkflowConfig config = small_config();
  config.stepp.biomarker = "x1";

  WorkflowConfig threaded = config;
  threaded.threads = 3;

  const std::string dir_a = temp_dir();
  const std::string dir_b = temp_dir();
  const std::string dir_c = temp_dir();
  const auto paths_a = hte::emit_report(hte::run_workflow(data, config), dir_a);
  const auto paths_b = hte::emit_report(hte::run_workflow(data, config), dir_b);
  const auto paths_c =
      hte::emit_report(hte::run_workflow(data, threaded), dir_c);
  REQUIRE(paths_a.size() == paths_b.size());
  REQUIRE(paths_a.size() == paths_c.size());
  for (std::size_t i = 0; i < paths_a.size(); ++i) {
    CHECK(read_file(paths_a[i]) == read_file(paths_b[i]));
    CHECK(read_file(paths_a[i]) == read_file(paths_c[i]));
  }
}

TEST_CASE("a stopped report writes no stage-2 curve files") {
  ScenarioSpec null_spec = ScenarioSpec::no_hte();
  null_spec.gamma0 = 0.0;
  null_spec.gamma1 = 0.0;
  null_spec.n = 500;
  WorkflowConfig config = small_config();
  config.alpha = 1e-6;
  const auto [data, truth] = hte::generate_trial(null_spec, 2);
  const WorkflowReport report = hte::run_workflow(data, config);
  REQUIRE_FALSE(report.proceed);

  const std::string dir = temp_dir();
  const auto paths = hte::emit_report(report, dir);
  std::set<std::string> names;
  for (const auto& p : paths) {
    names.insert(std::filesystem::path(p).filename().string());
  }
  CHECK(names.count("summary.json") == 1);
  CHECK(names.count("uplift.csv") == 0);
  CHECK(names.count("value.csv") == 0);
  CHECK(names.count("np.csv") == 0);
  CHECK_FALSE(std::filesystem::exists(dir + "/uplift.csv"));

  const std::string summary = read_file(dir + "/summary.json");
  CHECK(summary.find("\"proceed\": false") != std::string::npos);
  CHECK(summary.find("stage2") == std::string::npos);
}

TEST_CASE("a proceeding report writes the full file set") {
  ScenarioSpec strong = ScenarioSpec::strong_hte();
  strong.n = 700;
  const auto [data, truth] = hte::generate_trial(strong, 8);
  WorkflowConfig config = small_config();
  config.stepp.biomarker = "x1";
  const WorkflowReport report = hte::run_workflow(data, config);
  REQUIRE(report.proceed);

  const std::string dir = temp_dir();
  const auto paths = hte::emit_report(report, dir);
  std::set<std::string> names;
  for (const auto& p : paths) {
    names.insert(std::filesystem::path(p).filename().string());
  }
  CHECK(names ==
        std::set<std::string>{"summary.json", "stepp.csv", "uplift.csv",
                              "value.csv", "np.csv"});
  const std::string uplift = read_file(dir + "/uplift.csv");
  CHECK(uplift.rfind("q,u_normalized,u_cumulative\n", 0) == 0);
  const std::string value = read_file(dir + "/value.csv");
  CHECK(value.rfind("threshold,value,se\n", 0) == 0);
  const std::string np = read_file(dir + "/np.csv");
  CHECK(np.rfind(
            "threshold,harm_rate,harm_upper,benefit_capture,"
            "benefit_rate_treated,feasible\n",
            0) == 0);
  const std::string stepp = read_file(dir + "/stepp.csv");
  CHECK(stepp.rfind("center,risk_diff,band_low,band_high,n_treated,n_control\n",
                    0) == 0);
  const std::string summary = read_file(dir + "/summary.json");
  CHECK(summary.find("\"proceed\": true") != std::string::npos);
  CHECK(summary.find("\"stage2\"") != std::string::npos);
  CHECK(summary.find("\"criterion_ii\"") != std::string::npos);
}

TEST_CASE("bootstrap switches on per-threshold standard errors") {
  ScenarioSpec strong = ScenarioSpec::strong_hte();
  strong.n = 500;
  const auto [data, truth] = hte::generate_trial(strong, 44);
  WorkflowConfig config = small_config();
  config.forest.n_trees = 25;
  config.bootstrap_B = 120;
  const auto stage2 = hte::run_stage2(data, config);
  REQUIRE(stage2.value.se.size() == stage2.value.thresholds.size());
  for (Eigen::Index t = 0; t < stage2.value.se.size(); ++t) {
    CHECK(stage2.value.se[t] >= 0.0);
    CHECK(std::isfinite(stage2.value.se[t]));
  }
}

TEST_CASE("replicate seeds are derived from master, scenario and index") {
  CHECK(hte::replicate_data_seed(7, 2, 3) ==
        hte::derive_seed(7, {0xDA7Au, 2u, 3u}));
  CHECK(hte::replicate_data_seed(7, 2, 3) != hte::replicate_data_seed(7, 2, 4));
  CHECK(hte::replicate_data_seed(7, 2, 3) != hte::replicate_data_seed(7, 1, 3));
  CHECK(hte::replicate_data_seed(7, 2, 3) != hte::replicate_data_seed(8, 2, 3));
}

TEST_CASE("a one-replicate study reports a degenerate proceed rate") {
  ScenarioSpec strong = ScenarioSpec::strong_hte();
  strong.n = 400;
  WorkflowConfig config = small_config();
  config.forest.n_trees = 25;
  const auto summary = hte::replicate_study({strong}, 1, config);
  REQUIRE(summary.scenarios.size() == 1);
  const auto& s = summary.scenarios[0];
  CHECK(s.replicates == 1);
  CHECK((s.proceed_rate == 0.0 || s.proceed_rate == 1.0));
  CHECK(s.failures == 0);
  CHECK(summary.replicates == 1);
}

TEST_CASE("study aggregation is independent of the thread count") {
  ScenarioSpec strong = ScenarioSpec::strong_hte();
  strong.n = 400;
  ScenarioSpec weak = ScenarioSpec::weak_hte();
  weak.n = 400;
  WorkflowConfig config = small_config();
  config.forest.n_trees = 25;
  config.threads = 1;
  WorkflowConfig threaded = config;
  threaded.threads = 3;

  const auto a = hte::replicate_study({strong, weak}, 4, config);
  const auto b = hte::replicate_study({strong, weak}, 4, threaded);
  REQUIRE(a.scenarios.size() == b.scenarios.size());
  for (std::size_t s = 0; s < a.scenarios.size(); ++s) {
    CHECK(a.scenarios[s].proceeded == b.scenarios[s].proceeded);
    CHECK(a.scenarios[s].proceed_rate == b.scenarios[s].proceed_rate);
    CHECK(a.scenarios[s].mean_auqc_cumulative ==
          b.scenarios[s].mean_auqc_cumulative);
    CHECK(a.scenarios[s].mean_value_gain == b.scenarios[s].mean_value_gain);
    CHECK(a.scenarios[s].uncond_mean_value_gain ==
          b.scenarios[s].uncond_mean_value_gain);
    CHECK(a.scenarios[s].np_infeasible_rate ==
          b.scenarios[s].np_infeasible_rate);
  }
}

TEST_CASE("study reports round-trip to study.json and study.csv") {
  ScenarioSpec strong = ScenarioSpec::strong_hte();
  strong.n = 400;
  WorkflowConfig config = small_config();
  config.forest.n_trees = 25;
  const auto summary = hte::replicate_study({strong}, 2, config);
  const std::string dir = temp_dir();
  const auto paths = hte::emit_report(summary, dir);
  REQUIRE(paths.size() == 2);
  const std::string json_text = read_file(dir + "/study.json");
  CHECK(json_text.find("\"scenarios\"") != std::string::npos);
  CHECK(json_text.find("StrongHTE") != std::string::npos);
  const std::string csv_text = read_file(dir + "/study.csv");
  CHECK(csv_text.rfind("scenario,replicates,proceeded,failures,proceed_rate,",
                       0) == 0);
  // Writing the same summary again produces identical bytes.
  const std::string dir2 = temp_dir();
  hte::emit_report(summary, dir2);
  CHECK(read_file(dir2 + "/study.json") == json_text);
  CHECK(read_file(dir2 + "/study.csv") == csv_text);
}

TEST_CASE("config files override in-memory settings") {
  const std::string dir = temp_dir();
  const std::string path = dir + "/config.json";
  {
    std::ofstream out(path);
    out << R"({
      "alpha": 0.01,
      "delta": 0.05,
      "K": 4,
      "learner": "t",
      "n_quantiles": 9,
      "prespecified_interactions": ["x1"],
      "bootstrap_B": 150,
      "master_seed": 99,
      "propensity": "modeled",
      "clip": 0.02,
      "uplift_grid": 60,
      "threads": 2,
      "forest": {"n_trees": 77, "min_leaf_per_arm": 9},
      "stepp": {"biomarker": "x2", "window_size": 40, "step": 8},
      "schema": {"covariates": ["c1", "c2"], "treatment": "arm", "outcome": "resp"},
      "actg_covariates": ["age", "karnof"]
    })";
  }
  WorkflowConfig config;
  hte::ColumnSchema schema;
  std::vector<std::string> actg;
  hte::apply_config_file(path, config, &schema, &actg);
  CHECK(config.alpha == 0.01);
  CHECK(config.delta == 0.05);
  CHECK(config.k_folds == 4);
  CHECK(config.learner == hte::LearnerKind::T);
  CHECK(config.n_quantiles == 9);
  CHECK(config.prespecified_interactions == std::vector<std::string>{"x1"});
  CHECK(config.bootstrap_B == 150);
  CHECK(config.master_seed == 99);
  CHECK(config.propensity == hte::PropensityMode::Modeled);
  CHECK(config.clip == 0.02);
  CHECK(config.uplift_grid == 60);
  CHECK(config.threads == 2);
  CHECK(config.forest.n_trees == 77);
  CHECK(config.forest.min_leaf_per_arm == 9);
  CHECK(config.stepp.biomarker == "x2");
  CHECK(config.stepp.window_size == 40);
  CHECK(config.stepp.step == 8);
  CHECK(schema.covariate_names == std::vector<std::string>{"c1", "c2"});
  CHECK(schema.treatment_column == "arm");
  CHECK(schema.outcome_column == "resp");
  CHECK(actg == std::vector<std::string>{"age", "karnof"});
}

TEST_CASE("config file errors carry the file name and fail fast") {
  WorkflowConfig config;
  CHECK_THROWS_AS(
      hte::apply_config_file("/tmp/definitely_missing_config.json", config),
      hte::IoError);

  const std::string dir = temp_dir();
  const std::string bad = dir + "/bad.json";
  {
    std::ofstream out(bad);
    out << "{ not json ";
  }
  try {
    hte::apply_config_file(bad, config);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("bad.json") != std::string::npos);
  }

  const std::string wrong_type = dir + "/wrong.json";
  {
    std::ofstream out(wrong_type);
    out << R"({"alpha": "high"})";
  }
  CHECK_THROWS_AS(hte::apply_config_file(wrong_type, config), ValidationError);

  const std::string bad_learner = dir + "/learner.json";
  {
    std::ofstream out(bad_learner);
    out << R"({"learner": "boost"})";
  }
  CHECK_THROWS_AS(hte::apply_config_file(bad_learner, config), ValidationError);
}

TEST_CASE("the actg pipeline preprocesses, forces delta zero and prespecifies") {
  // Synthetic raw table shaped like the trial export: enough subjects for a
  // quick run, with karnof and cd40 among the covariates.
  const int n = 120;
  hte::Rng rng(2025);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < n; ++i) {
    const double age = 20 + 40 * rng.uniform();
    const double karnof = 70 + 10 * std::floor(rng.uniform() * 4);
    const double cd40 = 200 + 300 * rng.uniform();
    const double arm = std::floor(rng.uniform() * 4);  // 0..3, arm 3 dropped
    const double cens = rng.bernoulli(0.4) ? 1 : 0;
    const double days = 100 + 900 * rng.uniform();
    rows.push_back({age, karnof, cd40, arm, cens, days});
  }
  const auto raw =
      test_helpers::actg_raw({"age", "karnof", "cd40"}, rows);
  const std::string dir = temp_dir();
  const std::string path = dir + "/actg_raw.csv";
  hte::write_csv(raw, path);

  WorkflowConfig config = small_config();
  config.stepp.permutations = 200;
  const WorkflowReport report =
      hte::run_actg175(path, config, {"age", "karnof", "cd40"});
  REQUIRE(report.stage1.interactions.size() == 2);
  CHECK(report.stage1.interactions[0].name == "karnof");
  CHECK(report.stage1.interactions[1].name == "cd40");
  CHECK(contains_line_with(report.narrative, "ACTG 175"));
  CHECK(contains_line_with(report.narrative, "96 weeks"));
  // Outcomes carry no real signal here, so either gate decision is fine; the
  // wiring we assert is the preprocessing narrative and forced settings.
}

TEST_CASE("the actg pipeline surfaces preprocessing failures") {
  WorkflowConfig config = small_config();
  CHECK_THROWS_AS(hte::run_actg175("/tmp/not_a_real_actg_file.csv", config),
                  hte::IoError);
}

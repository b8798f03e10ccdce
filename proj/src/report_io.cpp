#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hte/errors.hpp"
#include "hte/table.hpp"
#include "hte/workflow.hpp"

// Report serialization: summary.json plus delimited curve files.  Field order
// is fixed (ordered_json) and every floating value is rounded to six
// significant digits, so identical analyses emit identical bytes.

namespace hte {

namespace {

using json = nlohmann::ordered_json;

json num(double x) {
  if (std::isnan(x)) return nullptr;  // JSON has no NaN; null is explicit
  return round_g6(x);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("error while writing '" + path + "'");
}

void ensure_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + out_dir +
                  "': " + ec.message());
  }
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

json stage1_json(const Stage1Report& stage1) {
  json j;
  j["lrt"] = {{"stat", num(stage1.lrt.stat)},
              {"df", stage1.lrt.df},
              {"p", num(stage1.lrt.p)}};
  j["interactions"] = json::array();
  for (const auto& t : stage1.interactions) {
    j["interactions"].push_back({{"name", t.name},
                                 {"estimate", num(t.estimate)},
                                 {"wald_z", num(t.wald_z)},
                                 {"raw_p", num(t.raw_p)},
                                 {"holm_p", num(t.holm_p)}});
  }
  j["alpha"] = num(stage1.alpha);
  j["proceed"] = stage1.proceed;
  j["reasons"] = stage1.reasons;
  j["criterion_ii"] = "not evaluated";
  return j;
}

std::string curve_csv(const SteppCurve& curve) {
  std::string text = "center,risk_diff,band_low,band_high,n_treated,n_control\n";
  const bool banded = curve.band_low.size() == curve.window_centers.size();
  for (Eigen::Index w = 0; w < curve.window_centers.size(); ++w) {
    text += format_g6(curve.window_centers[w]) + ',' +
            format_g6(curve.risk_diff[w]) + ',' +
            (banded ? format_g6(curve.band_low[w]) : "nan") + ',' +
            (banded ? format_g6(curve.band_high[w]) : "nan") + ',' +
            std::to_string(curve.counts[static_cast<std::size_t>(w)].first) +
            ',' +
            std::to_string(curve.counts[static_cast<std::size_t>(w)].second) +
            '\n';
  }
  return text;
}

}  // namespace

std::vector<std::string> emit_report(const WorkflowReport& report,
                                     const std::string& out_dir) {
  ensure_dir(out_dir);
  std::vector<std::string> written;

  json j;
  j["stage1"] = stage1_json(report.stage1);
  j["proceed"] = report.proceed;

  if (report.stepp) {
    const SteppCurve& curve = *report.stepp;
    j["stepp"] = {{"biomarker", curve.biomarker},
                  {"window_size", curve.window_size},
                  {"step", curve.step},
                  {"windows", static_cast<int>(curve.window_centers.size())},
                  {"dropped_windows", curve.dropped_windows}};
  }

  if (report.stage2) {
    const Stage2Results& s2 = *report.stage2;
    json stage2;
    stage2["folds"] = {{"k", s2.folds.k},
                       {"seed", s2.folds.seed}};
    stage2["learner"] = learner_name(s2.learner);
    stage2["positivity_warning"] = s2.nuisance.positivity_warning;
    stage2["auqc"] = {{"normalized", num(s2.uplift.auqc_normalized)},
                      {"cumulative", num(s2.uplift.auqc_cumulative)}};
    stage2["policy"] = {{"t_star", num(s2.value.t_star)},
                        {"v_star", num(s2.value.v_star)},
                        {"value_gain", num(s2.value.value_gain)},
                        {"treat_all", num(s2.value.values[0])},
                        {"treat_none",
                         num(s2.value.values[s2.value.values.size() - 1])}};
    const int c = s2.np.chosen_index;
    stage2["np"] = {
        {"status",
         s2.np.status == NpStatus::Feasible ? "feasible" : "best_attainable"},
        {"chosen_threshold", num(s2.np.chosen_threshold)},
        {"harm_rate", num(s2.np.harm_rate[c])},
        {"harm_upper", num(s2.np.harm_upper[c])},
        {"benefit_capture", num(s2.np.benefit_capture[c])},
        {"alpha_harm", num(s2.np.alpha_harm)},
        {"delta", num(s2.np.delta)},
        {"conf_level", num(s2.np.conf_level)},
        {"capture_floor", num(s2.np.capture_floor)}};
    j["stage2"] = std::move(stage2);
  }
  j["narrative"] = report.narrative;

  const std::string summary_path = join_path(out_dir, "summary.json");
  write_text(summary_path, j.dump(2) + "\n");
  written.push_back(summary_path);

  if (report.stepp) {
    const std::string stepp_path = join_path(out_dir, "stepp.csv");
    write_text(stepp_path, curve_csv(*report.stepp));
    written.push_back(stepp_path);
  }

  if (report.stage2) {
    const Stage2Results& s2 = *report.stage2;

    std::string uplift = "q,u_normalized,u_cumulative\n";
    for (Eigen::Index i = 0; i < s2.uplift.q_grid.size(); ++i) {
      uplift += format_g6(s2.uplift.q_grid[i]) + ',' +
                format_g6(s2.uplift.u_normalized[i]) + ',' +
                format_g6(s2.uplift.u_cumulative[i]) + '\n';
    }
    const std::string uplift_path = join_path(out_dir, "uplift.csv");
    write_text(uplift_path, uplift);
    written.push_back(uplift_path);

    const bool has_se = s2.value.se.size() == s2.value.thresholds.size();
    std::string value = "threshold,value,se\n";
    for (Eigen::Index t = 0; t < s2.value.thresholds.size(); ++t) {
      value += format_g6(s2.value.thresholds[t]) + ',' +
               format_g6(s2.value.values[t]) + ',' +
               (has_se ? format_g6(s2.value.se[t]) : "nan") + '\n';
    }
    const std::string value_path = join_path(out_dir, "value.csv");
    write_text(value_path, value);
    written.push_back(value_path);

    std::string np =
        "threshold,harm_rate,harm_upper,benefit_capture,benefit_rate_treated,"
        "feasible\n";
    for (Eigen::Index t = 0; t < s2.np.thresholds.size(); ++t) {
      np += format_g6(s2.np.thresholds[t]) + ',' +
            format_g6(s2.np.harm_rate[t]) + ',' +
            format_g6(s2.np.harm_upper[t]) + ',' +
            format_g6(s2.np.benefit_capture[t]) + ',' +
            format_g6(s2.np.benefit_rate_treated[t]) + ',' +
            std::to_string(s2.np.feasible[static_cast<std::size_t>(t)]) + '\n';
    }
    const std::string np_path = join_path(out_dir, "np.csv");
    write_text(np_path, np);
    written.push_back(np_path);
  }
  return written;
}

std::vector<std::string> emit_report(const StudySummary& summary,
                                     const std::string& out_dir) {
  ensure_dir(out_dir);
  std::vector<std::string> written;

  json j;
  j["master_seed"] = summary.master_seed;
  j["replicates"] = summary.replicates;
  j["scenarios"] = json::array();
  for (const auto& sc : summary.scenarios) {
    j["scenarios"].push_back(
        {{"scenario", sc.scenario},
         {"replicates", sc.replicates},
         {"proceeded", sc.proceeded},
         {"failures", sc.failures},
         {"proceed_rate", num(sc.proceed_rate)},
         {"mean_auqc_cumulative", num(sc.mean_auqc_cumulative)},
         {"mean_auqc_normalized", num(sc.mean_auqc_normalized)},
         {"mean_value_gain", num(sc.mean_value_gain)},
         {"np_infeasible_rate", num(sc.np_infeasible_rate)},
         {"uncond_mean_auqc_cumulative", num(sc.uncond_mean_auqc_cumulative)},
         {"uncond_mean_auqc_normalized", num(sc.uncond_mean_auqc_normalized)},
         {"uncond_mean_value_gain", num(sc.uncond_mean_value_gain)}});
  }
  const std::string json_path = join_path(out_dir, "study.json");
  write_text(json_path, j.dump(2) + "\n");
  written.push_back(json_path);

  std::string csv =
      "scenario,replicates,proceeded,failures,proceed_rate,"
      "mean_auqc_cumulative,mean_auqc_normalized,mean_value_gain,"
      "np_infeasible_rate,uncond_mean_auqc_cumulative,"
      "uncond_mean_auqc_normalized,uncond_mean_value_gain\n";
  for (const auto& sc : summary.scenarios) {
    csv += sc.scenario + ',' + std::to_string(sc.replicates) + ',' +
           std::to_string(sc.proceeded) + ',' + std::to_string(sc.failures) +
           ',' + format_g6(sc.proceed_rate) + ',' +
           format_g6(sc.mean_auqc_cumulative) + ',' +
           format_g6(sc.mean_auqc_normalized) + ',' +
           format_g6(sc.mean_value_gain) + ',' +
           format_g6(sc.np_infeasible_rate) + ',' +
           format_g6(sc.uncond_mean_auqc_cumulative) + ',' +
           format_g6(sc.uncond_mean_auqc_normalized) + ',' +
           format_g6(sc.uncond_mean_value_gain) + '\n';
  }
  const std::string csv_path = join_path(out_dir, "study.csv");
  write_text(csv_path, csv);
  written.push_back(csv_path);
  return written;
}

namespace {

void read_forest(const json& j, ForestSpec& forest) {
  if (j.contains("n_trees")) forest.n_trees = j.at("n_trees").get<int>();
  if (j.contains("min_leaf_per_arm")) {
    forest.min_leaf_per_arm = j.at("min_leaf_per_arm").get<int>();
  }
  if (j.contains("mtry")) forest.mtry = j.at("mtry").get<int>();
  if (j.contains("subsample_fraction")) {
    forest.subsample_fraction = j.at("subsample_fraction").get<double>();
  }
  if (j.contains("honesty_fraction")) {
    forest.honesty_fraction = j.at("honesty_fraction").get<double>();
  }
}

void read_stepp(const json& j, SteppConfig& stepp) {
  if (j.contains("biomarker")) stepp.biomarker = j.at("biomarker").get<std::string>();
  if (j.contains("window_size")) stepp.window_size = j.at("window_size").get<int>();
  if (j.contains("step")) stepp.step = j.at("step").get<int>();
  if (j.contains("permutations")) stepp.permutations = j.at("permutations").get<int>();
  if (j.contains("level")) stepp.level = j.at("level").get<double>();
}

}  // namespace

void apply_config_file(const std::string& path, WorkflowConfig& config,
                       ColumnSchema* schema,
                       std::vector<std::string>* actg_covariates) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("config file '" + path + "': " + e.what());
  }
  try {
    if (j.contains("alpha")) config.alpha = j.at("alpha").get<double>();
    if (j.contains("delta")) config.delta = j.at("delta").get<double>();
    if (j.contains("alpha_harm")) config.alpha_harm = j.at("alpha_harm").get<double>();
    if (j.contains("k_folds")) config.k_folds = j.at("k_folds").get<int>();
    if (j.contains("K")) config.k_folds = j.at("K").get<int>();
    if (j.contains("learner")) {
      config.learner = learner_from_name(j.at("learner").get<std::string>());
    }
    if (j.contains("n_quantiles")) config.n_quantiles = j.at("n_quantiles").get<int>();
    if (j.contains("prespecified_interactions")) {
      config.prespecified_interactions =
          j.at("prespecified_interactions").get<std::vector<std::string>>();
    }
    if (j.contains("bootstrap_B")) config.bootstrap_B = j.at("bootstrap_B").get<int>();
    if (j.contains("master_seed")) {
      config.master_seed = j.at("master_seed").get<std::uint64_t>();
    }
    if (j.contains("capture_floor")) {
      config.capture_floor = j.at("capture_floor").get<double>();
    }
    if (j.contains("wilson_conf")) config.wilson_conf = j.at("wilson_conf").get<double>();
    if (j.contains("propensity")) {
      const std::string mode = j.at("propensity").get<std::string>();
      if (mode == "randomized") config.propensity = PropensityMode::Randomized;
      else if (mode == "modeled") config.propensity = PropensityMode::Modeled;
      else throw ValidationError("config: propensity must be 'randomized' or 'modeled'");
    }
    if (j.contains("clip")) config.clip = j.at("clip").get<double>();
    if (j.contains("uplift_grid")) config.uplift_grid = j.at("uplift_grid").get<int>();
    if (j.contains("threads")) config.threads = j.at("threads").get<int>();
    if (j.contains("forest")) read_forest(j.at("forest"), config.forest);
    if (j.contains("stepp")) read_stepp(j.at("stepp"), config.stepp);

    if (schema && j.contains("schema")) {
      const json& s = j.at("schema");
      if (s.contains("covariates")) {
        schema->covariate_names = s.at("covariates").get<std::vector<std::string>>();
      }
      if (s.contains("treatment")) {
        schema->treatment_column = s.at("treatment").get<std::string>();
      }
      if (s.contains("outcome")) {
        schema->outcome_column = s.at("outcome").get<std::string>();
      }
    }
    if (actg_covariates && j.contains("actg_covariates")) {
      *actg_covariates = j.at("actg_covariates").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw ValidationError("config file '" + path + "': " + e.what());
  }
}

}  // namespace hte

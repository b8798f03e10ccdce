#include "hte/dataset.hpp"

#include <atomic>
#include <cmath>
#include <set>

#include "hte/errors.hpp"
#include "hte/rng.hpp"

namespace hte {

namespace counters {
namespace {
std::atomic<long> g_make_folds{0};
std::atomic<long> g_stage2_fits{0};
}  // namespace
long make_folds_calls() { return g_make_folds.load(); }
long stage2_model_fits() { return g_stage2_fits.load(); }
void note_stage2_model_fit() { g_stage2_fits.fetch_add(1); }
}  // namespace counters

void ColumnSchema::validate() const {
  if (covariate_names.empty()) {
    throw ValidationError("schema: covariate list is empty");
  }
  std::set<std::string> seen;
  for (const auto& name : covariate_names) {
    if (!seen.insert(name).second) {
      throw ValidationError("schema: duplicate covariate name '" + name + "'");
    }
    if (name == treatment_column || name == outcome_column) {
      throw ValidationError("schema: '" + name +
                            "' cannot be both a covariate and the treatment or "
                            "outcome column");
    }
  }
  if (treatment_column.empty() || outcome_column.empty()) {
    throw ValidationError("schema: treatment and outcome columns must be named");
  }
  if (treatment_column == outcome_column) {
    throw ValidationError("schema: treatment and outcome columns coincide ('" +
                          treatment_column + "')");
  }
}

Eigen::Index TrialDataset::covariate_index(const std::string& name) const {
  for (std::size_t j = 0; j < covariate_names.size(); ++j) {
    if (covariate_names[j] == name) return static_cast<Eigen::Index>(j);
  }
  return -1;
}

namespace {

bool is_zero_one(double v) { return v == 0.0 || v == 1.0; }

Eigen::VectorXi to_binary_vector(const NumericTable& table, Eigen::Index col,
                                 const std::string& role) {
  Eigen::VectorXi out(table.n_rows());
  for (Eigen::Index i = 0; i < table.n_rows(); ++i) {
    const double v = table.values(i, col);
    if (!is_zero_one(v)) {
      throw ValidationError(role + " column '" + table.columns[col] +
                            "': value " + format_double(v) + " at data row " +
                            std::to_string(i + 1) + " is not 0 or 1");
    }
    out[i] = static_cast<int>(v);
  }
  return out;
}

}  // namespace

void TrialDataset::validate() const {
  const Eigen::Index n_rows = n();
  if (n_rows < 2) {
    throw ValidationError("dataset: needs at least 2 subjects, got " +
                          std::to_string(n_rows));
  }
  if (covariates.rows() != n_rows || outcome.size() != n_rows) {
    throw ValidationError("dataset: covariates, treatment and outcome lengths disagree");
  }
  if (static_cast<Eigen::Index>(covariate_names.size()) != p() ||
      static_cast<Eigen::Index>(covariate_kinds.size()) != p()) {
    throw ValidationError("dataset: covariate names/kinds do not match the matrix width");
  }
  int treated = 0;
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    if (treatment[i] != 0 && treatment[i] != 1) {
      throw ValidationError("dataset: treatment value outside {0,1} at row " +
                            std::to_string(i + 1));
    }
    if (outcome[i] != 0 && outcome[i] != 1) {
      throw ValidationError("dataset: outcome value outside {0,1} at row " +
                            std::to_string(i + 1));
    }
    treated += treatment[i];
  }
  if (treated == 0 || treated == n_rows) {
    throw ValidationError(
        "dataset: both arms must be present (sample-level positivity); "
        "treated count = " + std::to_string(treated) + " of " +
        std::to_string(n_rows));
  }
  for (Eigen::Index j = 0; j < p(); ++j) {
    for (Eigen::Index i = 0; i < n_rows; ++i) {
      const double v = covariates(i, j);
      if (!std::isfinite(v)) {
        throw ValidationError("dataset: non-finite value in covariate '" +
                              covariate_names[j] + "' at row " +
                              std::to_string(i + 1));
      }
      if (covariate_kinds[j] == ColumnKind::Binary && !is_zero_one(v)) {
        throw ValidationError("dataset: binary covariate '" +
                              covariate_names[j] + "' has value " +
                              format_double(v) + " at row " +
                              std::to_string(i + 1));
      }
    }
  }
  if (known_propensity &&
      !(*known_propensity > 0.0 && *known_propensity < 1.0)) {
    throw ValidationError("dataset: known propensity must lie in (0,1)");
  }
}

TrialDataset dataset_from_table(const NumericTable& table,
                                const ColumnSchema& schema) {
  schema.validate();
  std::vector<Eigen::Index> cov_cols;
  cov_cols.reserve(schema.covariate_names.size());
  for (const auto& name : schema.covariate_names) {
    const Eigen::Index j = table.column_index(name);
    if (j < 0) {
      throw ValidationError("schema: covariate column '" + name +
                            "' not found in the table");
    }
    cov_cols.push_back(j);
  }
  const Eigen::Index a_col = table.column_index(schema.treatment_column);
  if (a_col < 0) {
    throw ValidationError("schema: treatment column '" +
                          schema.treatment_column + "' not found in the table");
  }
  const Eigen::Index y_col = table.column_index(schema.outcome_column);
  if (y_col < 0) {
    throw ValidationError("schema: outcome column '" + schema.outcome_column +
                          "' not found in the table");
  }

  TrialDataset data;
  const Eigen::Index n = table.n_rows();
  const Eigen::Index p = static_cast<Eigen::Index>(cov_cols.size());
  data.covariates.resize(n, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    data.covariates.col(j) = table.values.col(cov_cols[j]);
  }
  data.covariate_names = schema.covariate_names;
  data.covariate_kinds.resize(schema.covariate_names.size());
  for (Eigen::Index j = 0; j < p; ++j) {
    bool binary = n > 0;
    for (Eigen::Index i = 0; i < n && binary; ++i) {
      binary = is_zero_one(data.covariates(i, j));
    }
    data.covariate_kinds[j] = binary ? ColumnKind::Binary : ColumnKind::Continuous;
  }
  data.treatment = to_binary_vector(table, a_col, "treatment");
  data.outcome = to_binary_vector(table, y_col, "outcome");
  data.validate();
  return data;
}

TrialDataset load_table(const std::string& path, const ColumnSchema& schema) {
  return dataset_from_table(read_csv(path), schema);
}

NumericTable dataset_to_table(const TrialDataset& data,
                              const std::string& treatment_column,
                              const std::string& outcome_column) {
  NumericTable table;
  table.columns = data.covariate_names;
  table.columns.push_back(treatment_column);
  table.columns.push_back(outcome_column);
  table.values.resize(data.n(), data.p() + 2);
  table.values.leftCols(data.p()) = data.covariates;
  table.values.col(data.p()) = data.treatment.cast<double>();
  table.values.col(data.p() + 1) = data.outcome.cast<double>();
  return table;
}

const std::vector<std::string>& actg175_default_covariates() {
  static const std::vector<std::string> names = {
      "age",    "wtkg",   "hemo", "homo",   "drugs",   "karnof",
      "oprior", "z30",    "zprior", "preanti", "race",  "gender",
      "str2",   "symptom", "cd40", "cd80"};
  return names;
}

TrialDataset preprocess_actg175(const NumericTable& raw,
                                const std::vector<std::string>& covariate_list) {
  // Columns measured after randomization (on-study labs, adherence, or the
  // arm/outcome encodings themselves) must never enter the covariate set.
  static const std::set<std::string> post_randomization = {
      "cd420", "cd496", "cd820", "r",    "offtrt",
      "treat", "cens",  "days",  "arms"};

  for (const char* required : {"arms", "cens", "days"}) {
    if (!raw.has_column(required)) {
      throw ValidationError(std::string("actg175: required column '") +
                            required + "' missing from the raw table");
    }
  }
  if (covariate_list.empty()) {
    throw ValidationError("actg175: covariate list is empty");
  }
  std::vector<Eigen::Index> cov_cols;
  for (const auto& name : covariate_list) {
    if (post_randomization.count(name)) {
      throw ValidationError("actg175: covariate '" + name +
                            "' is post-randomization (leakage); baseline "
                            "columns only");
    }
    const Eigen::Index j = raw.column_index(name);
    if (j < 0) {
      throw ValidationError("actg175: unknown covariate column '" + name + "'");
    }
    cov_cols.push_back(j);
  }

  const Eigen::Index arms_col = raw.column_index("arms");
  const Eigen::Index cens_col = raw.column_index("cens");
  const Eigen::Index days_col = raw.column_index("days");

  // Pass 1: keep everything except the didanosine-monotherapy arm (arms == 3).
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(raw.n_rows()));
  for (Eigen::Index i = 0; i < raw.n_rows(); ++i) {
    const double arm = raw.values(i, arms_col);
    if (arm == 0.0 || arm == 1.0 || arm == 2.0) {
      keep.push_back(i);
    } else if (arm != 3.0) {
      throw ValidationError("actg175: unexpected arm code " +
                            format_double(arm) + " at data row " +
                            std::to_string(i + 1));
    }
  }

  TrialDataset data;
  const Eigen::Index n = static_cast<Eigen::Index>(keep.size());
  const Eigen::Index p = static_cast<Eigen::Index>(cov_cols.size());
  data.covariates.resize(n, p);
  data.treatment.resize(n);
  data.outcome.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index i = keep[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < p; ++j) {
      data.covariates(r, j) = raw.values(i, cov_cols[j]);
    }
    data.treatment[r] = raw.values(i, arms_col) == 0.0 ? 0 : 1;
    // Event by 96 weeks (672 days) means an unfavorable outcome.
    const bool event_by_96w =
        raw.values(i, cens_col) == 1.0 && raw.values(i, days_col) <= 672.0;
    data.outcome[r] = event_by_96w ? 0 : 1;
  }
  data.covariate_names = covariate_list;
  data.covariate_kinds.resize(covariate_list.size());
  for (Eigen::Index j = 0; j < p; ++j) {
    bool binary = true;
    for (Eigen::Index i = 0; i < n && binary; ++i) {
      binary = is_zero_one(data.covariates(i, j));
    }
    data.covariate_kinds[j] = binary ? ColumnKind::Binary : ColumnKind::Continuous;
  }
  data.validate();
  return data;
}

FoldAssignment make_folds(const TrialDataset& data, int k, std::uint64_t seed) {
  counters::g_make_folds.fetch_add(1);
  if (k < 2) {
    throw ValidationError("make_folds: need k >= 2, got " + std::to_string(k));
  }
  std::vector<Eigen::Index> arm_rows[2];
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    arm_rows[data.treatment[i]].push_back(i);
  }
  for (int a = 0; a < 2; ++a) {
    if (static_cast<int>(arm_rows[a].size()) < k) {
      throw ValidationError(
          "make_folds: arm A=" + std::to_string(a) + " has only " +
          std::to_string(arm_rows[a].size()) + " subjects, fewer than k = " +
          std::to_string(k) + "; every fold must contain both arms");
    }
  }

  FoldAssignment folds;
  folds.fold_id.resize(data.n());
  folds.k = k;
  folds.seed = seed;
  for (int a = 0; a < 2; ++a) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(a)}));
    rng.shuffle(arm_rows[a]);
    for (std::size_t pos = 0; pos < arm_rows[a].size(); ++pos) {
      folds.fold_id[arm_rows[a][pos]] = 1 + static_cast<int>(pos % static_cast<std::size_t>(k));
    }
  }
  return folds;
}

}  // namespace hte

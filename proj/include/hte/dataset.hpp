#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hte/table.hpp"

namespace hte {

enum class ColumnKind { Continuous, Binary };

// Maps table columns onto the roles a trial dataset needs.
struct ColumnSchema {
  std::vector<std::string> covariate_names;
  std::string treatment_column = "a";
  std::string outcome_column = "y";

  // Names must be unique and the treatment/outcome columns must not double as
  // covariates.
  void validate() const;
};

// A completed randomized (or assumed-unconfounded) trial: covariate matrix X,
// binary treatment A, binary outcome Y.  Immutable after construction.
struct TrialDataset {
  Eigen::MatrixXd covariates;  // n x p
  std::vector<std::string> covariate_names;
  std::vector<ColumnKind> covariate_kinds;
  Eigen::VectorXi treatment;  // entries in {0,1}
  Eigen::VectorXi outcome;    // entries in {0,1}
  // Constant randomization probability, when known by design (e.g. 0.5 for a
  // 1:1 trial).  Informational; cross-fitted propensities are still estimated.
  std::optional<double> known_propensity;

  Eigen::Index n() const { return treatment.size(); }
  Eigen::Index p() const { return covariates.cols(); }
  Eigen::Index covariate_index(const std::string& name) const;

  // Enforces: n >= 2, both arms present, A/Y in {0,1}, finite covariates,
  // binary-kind columns containing only {0,1}.
  void validate() const;
};

// Cross-fitting fold map k(i).  One assignment is built per analysis and
// shared by every downstream fit and evaluation.
struct FoldAssignment {
  Eigen::VectorXi fold_id;  // entries in {1..k}
  int k = 0;
  std::uint64_t seed = 0;
};

// Builds a TrialDataset from an in-memory table (column order per schema).
TrialDataset dataset_from_table(const NumericTable& table,
                                const ColumnSchema& schema);

// Reads a delimited file and applies the schema.
TrialDataset load_table(const std::string& path, const ColumnSchema& schema);

// Inverse of dataset_from_table: covariates, then treatment, then outcome.
NumericTable dataset_to_table(const TrialDataset& data,
                              const std::string& treatment_column = "a",
                              const std::string& outcome_column = "y");

// ACTG 175 preprocessing (the speff2trial column layout):
//   - drop the didanosine-monotherapy arm (arms == 3);
//   - A = 0 for AZT monotherapy (arms == 0), A = 1 for either combination arm;
//   - Y = 1 unless an event occurred by day 672 (96 weeks): Y = 0 iff
//     cens == 1 and days <= 672.  Subjects censored event-free before day 672
//     keep Y = 1; reports flag this assumption.
// covariate_list must name baseline columns only; post-randomization columns
// are rejected as leakage.
TrialDataset preprocess_actg175(const NumericTable& raw,
                                const std::vector<std::string>& covariate_list);

// The 16 baseline covariates used by default for ACTG 175: age, weight,
// hemophilia, homosexual activity, IV drug use, Karnofsky score, prior
// non-ZDV therapy, ZDV in the last 30 days, prior ZDV, months of prior
// antiretroviral therapy, race, gender, antiretroviral history strata,
// symptomatic status, baseline CD4, baseline CD8.
const std::vector<std::string>& actg175_default_covariates();

// Stratified fold construction: within each arm, shuffle indices with a
// seeded generator and deal round-robin.  Requires each arm to have at least
// k subjects so every fold holds both arms.
FoldAssignment make_folds(const TrialDataset& data, int k, std::uint64_t seed);

// Lightweight instrumentation used to assert workflow structure in tests
// (fold maps built exactly once per analysis; no Stage-2 model fits when the
// gate stops the workflow).
namespace counters {
long make_folds_calls();
long stage2_model_fits();
void note_stage2_model_fit();
}  // namespace counters

}  // namespace hte

#pragma once

// Shared builders for the unit tests: small deterministic datasets and
// tables assembled by hand so expectations can be computed on paper.

#include <Eigen/Core>
#include <string>
#include <vector>

#include "hte/dataset.hpp"
#include "hte/rng.hpp"
#include "hte/simgen.hpp"
#include "hte/table.hpp"

namespace test_helpers {

inline hte::NumericTable make_table(std::vector<std::string> columns,
                                    const std::vector<std::vector<double>>& rows) {
  hte::NumericTable table;
  table.columns = std::move(columns);
  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
    }
  }
  return table;
}

// A hand-rolled trial whose outcome depends on x1 and (optionally) on the
// treatment-by-x1 interaction; cheaper than the full generator when tests
// only need shape and determinism.
inline hte::TrialDataset toy_trial(int n, std::uint64_t seed,
                                   double interaction = 0.0) {
  hte::Rng rng(seed);
  hte::TrialDataset data;
  data.covariates.resize(n, 2);
  data.covariate_names = {"x1", "x2"};
  data.covariate_kinds = {hte::ColumnKind::Continuous,
                          hte::ColumnKind::Continuous};
  data.treatment.resize(n);
  data.outcome.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x1 = rng.normal();
    const double x2 = rng.normal();
    const int a = rng.bernoulli(0.5) ? 1 : 0;
    const double logit = -0.2 + 0.5 * x1 + a * interaction * x1;
    const int y = rng.bernoulli(1.0 / (1.0 + std::exp(-logit))) ? 1 : 0;
    data.covariates(i, 0) = x1;
    data.covariates(i, 1) = x2;
    data.treatment[i] = a;
    data.outcome[i] = y;
  }
  return data;
}

// Raw ACTG-shaped table: the three bookkeeping columns plus whatever
// covariates the caller wants, with values supplied row by row as
// {covariates..., arms, cens, days}.
inline hte::NumericTable actg_raw(const std::vector<std::string>& covariates,
                                  const std::vector<std::vector<double>>& rows) {
  std::vector<std::string> columns = covariates;
  columns.insert(columns.end(), {"arms", "cens", "days"});
  return make_table(columns, rows);
}

}  // namespace test_helpers

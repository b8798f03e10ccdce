#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "hte/dataset.hpp"
#include "hte/errors.hpp"
#include "helpers.hpp"

using hte::ColumnKind;
using hte::ColumnSchema;
using hte::TrialDataset;
using hte::ValidationError;
using test_helpers::actg_raw;
using test_helpers::make_table;

TEST_CASE("a three-row table with one covariate loads as n=3, p=1") {
  const auto table = make_table({"x1", "a", "y"},
                                {{0.5, 1, 1}, {-0.2, 0, 0}, {1.3, 1, 0}});
  ColumnSchema schema;
  schema.covariate_names = {"x1"};
  const TrialDataset data = hte::dataset_from_table(table, schema);
  CHECK(data.n() == 3);
  CHECK(data.p() == 1);
  CHECK(data.treatment[0] == 1);
  CHECK(data.outcome[2] == 0);
  CHECK(data.covariates(1, 0) == -0.2);
}

TEST_CASE("column kinds are inferred from the observed values") {
  const auto table = make_table(
      {"bin", "count", "a", "y"},
      {{0, 0, 1, 1}, {1, 1, 0, 0}, {0, 2, 1, 0}, {1, 1, 0, 1}});
  ColumnSchema schema;
  schema.covariate_names = {"bin", "count"};
  const TrialDataset data = hte::dataset_from_table(table, schema);
  CHECK(data.covariate_kinds[0] == ColumnKind::Binary);
  CHECK(data.covariate_kinds[1] == ColumnKind::Continuous);
}

TEST_CASE("non-binary treatment or outcome entries are rejected with the row") {
  const auto table =
      make_table({"x", "a", "y"}, {{0.1, 1, 1}, {0.2, 2, 0}, {0.3, 0, 1}});
  ColumnSchema schema;
  schema.covariate_names = {"x"};
  try {
    hte::dataset_from_table(table, schema);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("treatment") != std::string::npos);
    CHECK(what.find("row 2") != std::string::npos);
  }
}

TEST_CASE("single-arm datasets violate sample-level positivity") {
  const auto table = make_table({"x", "a", "y"}, {{0.1, 1, 1}, {0.2, 1, 0}});
  ColumnSchema schema;
  schema.covariate_names = {"x"};
  try {
    hte::dataset_from_table(table, schema);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("positivity") != std::string::npos);
  }
}

TEST_CASE("dataset validation catches hand-assembled inconsistencies") {
  TrialDataset data = test_helpers::toy_trial(20, 7);
  SUBCASE("valid to begin with") { data.validate(); }
  SUBCASE("non-finite covariate") {
    data.covariates(3, 1) = std::nan("");
    CHECK_THROWS_AS(data.validate(), ValidationError);
  }
  SUBCASE("binary kind with a non-binary value") {
    data.covariate_kinds[0] = ColumnKind::Binary;
    CHECK_THROWS_AS(data.validate(), ValidationError);
  }
  SUBCASE("fewer than two subjects") {
    data.covariates.conservativeResize(1, Eigen::NoChange);
    data.treatment.conservativeResize(1);
    data.outcome.conservativeResize(1);
    CHECK_THROWS_AS(data.validate(), ValidationError);
  }
  SUBCASE("known propensity outside (0,1)") {
    data.known_propensity = 1.0;
    CHECK_THROWS_AS(data.validate(), ValidationError);
  }
}

TEST_CASE("schema validation rejects overlaps and duplicates") {
  ColumnSchema schema;
  schema.covariate_names = {"x1", "x2"};
  schema.validate();

  SUBCASE("duplicate covariate") {
    schema.covariate_names = {"x1", "x1"};
    CHECK_THROWS_AS(schema.validate(), ValidationError);
  }
  SUBCASE("covariate equal to treatment column") {
    schema.covariate_names = {"a", "x2"};
    CHECK_THROWS_AS(schema.validate(), ValidationError);
  }
  SUBCASE("treatment equal to outcome") {
    schema.treatment_column = "y";
    CHECK_THROWS_AS(schema.validate(), ValidationError);
  }
  SUBCASE("empty covariate list") {
    schema.covariate_names = {};
    CHECK_THROWS_AS(schema.validate(), ValidationError);
  }
  SUBCASE("missing covariate column in the table") {
    const auto table = make_table({"x1", "a", "y"}, {{0, 1, 1}, {1, 0, 0}});
    schema.covariate_names = {"x1", "x9"};
    CHECK_THROWS_AS(hte::dataset_from_table(table, schema), ValidationError);
  }
}

TEST_CASE("dataset_to_table then dataset_from_table is the identity") {
  const TrialDataset data = test_helpers::toy_trial(40, 11);
  const auto table = hte::dataset_to_table(data);
  REQUIRE(table.columns == std::vector<std::string>{"x1", "x2", "a", "y"});
  ColumnSchema schema;
  schema.covariate_names = data.covariate_names;
  const TrialDataset back = hte::dataset_from_table(table, schema);
  CHECK(back.covariates == data.covariates);
  CHECK(back.treatment == data.treatment);
  CHECK(back.outcome == data.outcome);
}

TEST_CASE("load_table reads a csv file through the schema") {
  char tmpl[] = "/tmp/hte_dataset_XXXXXX";
  const std::string dir = mkdtemp(tmpl);
  const std::string path = dir + "/trial.csv";
  {
    std::ofstream out(path);
    out << "x1,a,y\n0.5,1,1\n-0.25,0,0\n1.5,1,0\n";
  }
  ColumnSchema schema;
  schema.covariate_names = {"x1"};
  const TrialDataset data = hte::load_table(path, schema);
  CHECK(data.n() == 3);
  CHECK(data.covariates(1, 0) == -0.25);
}

TEST_CASE("stratified folds deal one treated and one control per fold") {
  // n = 10, 5 treated, k = 5: round-robin within each arm leaves exactly one
  // subject of each arm in every fold.
  const auto table = make_table({"x", "a", "y"},
                                {{0.1, 1, 1},
                                 {0.2, 0, 0},
                                 {0.3, 1, 0},
                                 {0.4, 0, 1},
                                 {0.5, 1, 1},
                                 {0.6, 0, 0},
                                 {0.7, 1, 0},
                                 {0.8, 0, 1},
                                 {0.9, 1, 1},
                                 {1.0, 0, 0}});
  ColumnSchema schema;
  schema.covariate_names = {"x"};
  const TrialDataset data = hte::dataset_from_table(table, schema);
  const auto folds = hte::make_folds(data, 5, 42);
  REQUIRE(folds.k == 5);
  for (int f = 1; f <= 5; ++f) {
    int treated = 0;
    int control = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (folds.fold_id[i] != f) continue;
      (data.treatment[i] ? treated : control) += 1;
    }
    CHECK(treated == 1);
    CHECK(control == 1);
  }
}

TEST_CASE("folds are infeasible when an arm has fewer than k subjects") {
  // 2 treated among 7 cannot fill 5 folds with both arms (controls suffice).
  const auto table = make_table({"x", "a", "y"},
                                {{0.1, 1, 1},
                                 {0.2, 1, 0},
                                 {0.3, 0, 0},
                                 {0.4, 0, 1},
                                 {0.5, 0, 1},
                                 {0.55, 0, 1},
                                 {0.6, 0, 0}});
  ColumnSchema schema;
  schema.covariate_names = {"x"};
  const TrialDataset data = hte::dataset_from_table(table, schema);
  try {
    hte::make_folds(data, 5, 1);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("A=1") != std::string::npos);
    CHECK(what.find("both arms") != std::string::npos);
  }
  CHECK_THROWS_AS(hte::make_folds(data, 1, 1), ValidationError);
}

TEST_CASE("fold assignment is a seeded deterministic function") {
  const TrialDataset data = test_helpers::toy_trial(60, 5);
  const auto f1 = hte::make_folds(data, 4, 99);
  const auto f2 = hte::make_folds(data, 4, 99);
  const auto f3 = hte::make_folds(data, 4, 100);
  CHECK(f1.fold_id == f2.fold_id);
  CHECK(f1.fold_id != f3.fold_id);
  // Balanced within each arm: fold sizes differ by at most one.
  for (int a = 0; a < 2; ++a) {
    std::vector<int> counts(f1.k + 1, 0);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      if (data.treatment[i] == a) counts[f1.fold_id[i]] += 1;
    }
    const auto [lo, hi] = std::minmax_element(counts.begin() + 1, counts.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("every make_folds call is counted") {
  const TrialDataset data = test_helpers::toy_trial(30, 3);
  const long before = hte::counters::make_folds_calls();
  hte::make_folds(data, 3, 8);
  CHECK(hte::counters::make_folds_calls() == before + 1);
}

TEST_CASE("actg preprocessing maps arms, censoring and the 96-week outcome") {
  const auto raw = actg_raw({"age", "karnof"},
                            {{30, 90, 0, 1, 300},    // event by 96w -> Y=0
                             {40, 100, 1, 0, 400},   // censored early -> Y=1
                             {50, 80, 2, 1, 700},    // event after 96w -> Y=1
                             {60, 70, 3, 1, 100},    // ddI arm -> dropped
                             {35, 95, 0, 0, 800},    // completed -> Y=1
                             {45, 100, 1, 1, 672}}); // event on day 672 -> Y=0
  const TrialDataset data = hte::preprocess_actg175(raw, {"age", "karnof"});
  REQUIRE(data.n() == 5);
  REQUIRE(data.p() == 2);
  CHECK(data.treatment[0] == 0);
  CHECK(data.treatment[1] == 1);
  CHECK(data.treatment[2] == 1);
  CHECK(data.treatment[3] == 0);
  CHECK(data.treatment[4] == 1);
  CHECK(data.outcome[0] == 0);
  CHECK(data.outcome[1] == 1);
  CHECK(data.outcome[2] == 1);
  CHECK(data.outcome[3] == 1);
  CHECK(data.outcome[4] == 0);
  CHECK(data.covariates(2, 0) == 50);
}

TEST_CASE("actg preprocessing rejects post-randomization covariates") {
  const auto raw = actg_raw({"age", "cd420"},
                            {{30, 350, 0, 1, 300}, {40, 400, 1, 0, 400}});
  try {
    hte::preprocess_actg175(raw, {"age", "cd420"});
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("cd420") != std::string::npos);
    CHECK(what.find("leakage") != std::string::npos);
  }
}

TEST_CASE("actg preprocessing rejects unknown columns and bad arm codes") {
  const auto raw = actg_raw({"age"}, {{30, 0, 1, 300}, {40, 1, 0, 400}});
  CHECK_THROWS_AS(hte::preprocess_actg175(raw, {"age", "nope"}),
                  ValidationError);
  CHECK_THROWS_AS(hte::preprocess_actg175(raw, {}), ValidationError);

  const auto bad_arm = actg_raw({"age"}, {{30, 5, 1, 300}, {40, 1, 0, 400}});
  CHECK_THROWS_AS(hte::preprocess_actg175(bad_arm, {"age"}), ValidationError);

  const auto no_arms = make_table({"age", "cens", "days"},
                                  {{30, 1, 300}, {40, 0, 400}});
  CHECK_THROWS_AS(hte::preprocess_actg175(no_arms, {"age"}), ValidationError);
}

TEST_CASE("the default actg covariate list has the sixteen baseline columns") {
  const auto& names = hte::actg175_default_covariates();
  CHECK(names.size() == 16);
  const std::set<std::string> unique(names.begin(), names.end());
  CHECK(unique.size() == 16);
  CHECK(unique.count("karnof") == 1);
  CHECK(unique.count("cd40") == 1);
  CHECK(unique.count("cd420") == 0);
}

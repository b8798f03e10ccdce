#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "hte/errors.hpp"

namespace hte {

struct LogisticOptions {
  int max_iterations = 100;
  // Converged when max |coefficient step| <= coef_tolerance or
  // max |score entry| <= score_tolerance, whichever happens first.
  double coef_tolerance = 1e-8;
  double score_tolerance = 1e-6;
  // |coefficient| beyond this on the logit scale signals separation:
  // sigmoid(30) is 1 to machine precision.
  double separation_bound = 30.0;
  // Propensity fitting wants saturated predictions rather than an exception
  // when a covariate perfectly predicts treatment; set this to cap
  // coefficients at the bound and return a flagged fit instead of throwing.
  bool clamp_at_separation = false;
};

struct GlmFit {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;  // inverse observed Fisher information
  double log_likelihood = 0.0;
  bool converged = false;
  int iterations = 0;
  bool ridged = false;   // XtWX needed a diagonal ridge at some iteration
  bool clamped = false;  // coefficients were capped at the separation bound
  std::vector<std::string> column_names;

  // Fitted probabilities sigmoid(design * coefficients).
  Eigen::VectorXd predict(const Eigen::MatrixXd& design) const;
};

// Thrown at the iteration cap; carries the (non-converged) fit so callers can
// inspect how far the optimizer got.
class NonConvergenceError : public NumericError {
public:
  NonConvergenceError(const std::string& what, GlmFit partial)
      : NumericError(what), fit(std::move(partial)) {}
  GlmFit fit;
};

// Maximum-likelihood logistic regression by iteratively reweighted least
// squares (Newton steps on the Bernoulli log-likelihood).
//
// Requires d <= n and a numerically full-rank design (else a singular-design
// error naming the offending column).  Divergence past the separation bound
// raises a separation error unless options.clamp_at_separation is set.
GlmFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                    std::vector<std::string> column_names = {},
                    const LogisticOptions& options = {});

}  // namespace hte

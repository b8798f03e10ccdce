#include "hte/glm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <limits>

#include "hte/special.hpp"

namespace hte {

Eigen::VectorXd GlmFit::predict(const Eigen::MatrixXd& design) const {
  Eigen::VectorXd eta = design * coefficients;
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = sigmoid(eta[i]);
  return eta;
}

namespace {

std::string column_label(const std::vector<std::string>& names, Eigen::Index j) {
  if (j >= 0 && j < static_cast<Eigen::Index>(names.size())) return names[j];
  return "column " + std::to_string(j);
}

double bernoulli_log_likelihood(const Eigen::VectorXd& eta,
                                const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += y[i] * eta[i] - log1pexp(eta[i]);
  }
  return ll;
}

}  // namespace

GlmFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                    std::vector<std::string> column_names,
                    const LogisticOptions& options) {
  const Eigen::Index n = design.rows();
  const Eigen::Index d = design.cols();
  if (y.size() != n) {
    throw ValidationError("fit_logistic: design has " + std::to_string(n) +
                          " rows but y has " + std::to_string(y.size()));
  }
  if (d == 0 || n == 0) {
    throw ValidationError("fit_logistic: empty design");
  }
  if (d > n) {
    throw NumericError("fit_logistic: more columns (" + std::to_string(d) +
                       ") than rows (" + std::to_string(n) + ")");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw ValidationError("fit_logistic: response must be 0/1; found " +
                            std::to_string(y[i]) + " at row " +
                            std::to_string(i + 1));
    }
  }

  // Numerical rank check up front; the QR's column permutation points at a
  // dependent column when the design is deficient.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < d) {
    const Eigen::Index bad = qr.colsPermutation().indices()[qr.rank()];
    throw NumericError("fit_logistic: singular design; '" +
                       column_label(column_names, bad) +
                       "' is linearly dependent on earlier columns");
  }

  GlmFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(d);
  fit.column_names = std::move(column_names);

  Eigen::VectorXd eta(n), prob(n), weight(n), score(d), step(d);
  Eigen::MatrixXd info(d, d);
  Eigen::VectorXd prev_capped =
      Eigen::VectorXd::Constant(d, std::numeric_limits<double>::infinity());

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    eta.noalias() = design * fit.coefficients;
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = sigmoid(eta[i]);
      weight[i] = prob[i] * (1.0 - prob[i]);
    }
    score.noalias() = design.transpose() * (y - prob);
    info.noalias() = design.transpose() * weight.asDiagonal() * design;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      // Near-collinear weighted design; a tiny ridge keeps replicate studies
      // alive without visibly moving the optimum.
      fit.ridged = true;
      info.diagonal().array() += 1e-8;
      ldlt.compute(info);
      if (ldlt.info() != Eigen::Success) {
        throw NumericError(
            "fit_logistic: weighted information matrix is singular even after "
            "ridging");
      }
    }
    step = ldlt.solve(score);
    fit.coefficients += step;

    bool hit_bound = false;
    Eigen::Index worst = 0;
    const double max_abs = fit.coefficients.cwiseAbs().maxCoeff(&worst);
    if (max_abs > options.separation_bound) {
      if (!options.clamp_at_separation) {
        throw NumericError(
            "fit_logistic: separation detected; coefficient for '" +
            column_label(fit.column_names, worst) + "' passed |" +
            std::to_string(options.separation_bound) +
            "| on the logit scale");
      }
      // Scale the whole vector back to the bound.  Truncating coordinates
      // one by one would bend the fitted direction and can leave interior
      // (non-saturated) predictions, defeating the point of clamp mode.
      fit.coefficients *= options.separation_bound / max_abs;
      fit.clamped = true;
      hit_bound = true;
    }

    if (hit_bound) {
      // Stop once the capped iterate stops moving; the walk is stuck on the
      // bound and further Newton steps only push along the same ray.
      if ((fit.coefficients - prev_capped).cwiseAbs().maxCoeff() <=
          options.coef_tolerance) {
        break;
      }
      prev_capped = fit.coefficients;
      continue;
    }

    const double max_step = step.cwiseAbs().maxCoeff();
    const double max_score = score.cwiseAbs().maxCoeff();
    if (max_step <= options.coef_tolerance ||
        max_score <= options.score_tolerance) {
      fit.converged = true;
      break;
    }
  }

  // Final state: likelihood and covariance at the last coefficients.
  eta.noalias() = design * fit.coefficients;
  for (Eigen::Index i = 0; i < n; ++i) {
    prob[i] = sigmoid(eta[i]);
    weight[i] = prob[i] * (1.0 - prob[i]);
  }
  fit.log_likelihood = bernoulli_log_likelihood(eta, y);
  info.noalias() = design.transpose() * weight.asDiagonal() * design;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    fit.ridged = true;
    info.diagonal().array() += 1e-8;
    ldlt.compute(info);
  }
  fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(d, d));
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();

  if (!fit.converged && !options.clamp_at_separation) {
    throw NonConvergenceError(
        "fit_logistic: no convergence within " +
            std::to_string(options.max_iterations) + " iterations",
        fit);
  }
  return fit;
}

}  // namespace hte

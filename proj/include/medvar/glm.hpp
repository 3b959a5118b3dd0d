#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "medvar/design.hpp"
#include "medvar/errors.hpp"

namespace medvar {

inline double expit(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct GlmOptions {
  int max_iterations = 100;
  double deviance_tol = 1e-8;  // relative change of the objective
  double score_tol = 1e-6;     // max-norm of the score at the solution
  double ridge = 0.0;          // fixed L2 penalty on the coefficients
  // On separation or a singular weighted system, retry once with this
  // penalty instead of failing.
  bool auto_ridge = true;
  double auto_ridge_value = 1e-6;
};

struct IrlsFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;  // inverse observed information at the solution
  double deviance = 0.0;
  double loglik = 0.0;
  double sigma2 = 0.0;  // gaussian only: ML residual variance
  int iterations = 0;
  bool converged = false;
  bool ridged = false;
  // Objective per accepted iterate: deviance, plus the ridge penalty when one
  // is active. Non-increasing by construction (step-halving).
  std::vector<double> objective_trace;
  std::vector<std::string> warnings;
};

namespace detail {

// Names the design columns that QR pivoting marks as linearly dependent.
inline void check_full_rank(const Eigen::MatrixXd& X,
                            const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  const Eigen::Index rank = qr.rank();
  if (rank >= X.cols()) return;
  const auto& perm = qr.colsPermutation().indices();
  std::ostringstream msg;
  msg << "singular design: collinear column(s)";
  for (Eigen::Index j = rank; j < X.cols(); ++j) {
    const Eigen::Index col = perm(j);
    msg << ' '
        << (static_cast<std::size_t>(col) < names.size()
                ? names[static_cast<std::size_t>(col)]
                : "#" + std::to_string(col));
  }
  throw NumericError(msg.str());
}

inline double binomial_loglik(const Eigen::VectorXd& eta,
                              const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // -log(p) and -log(1-p) written to stay finite in both tails.
    const double e = eta(i);
    const double neg_log_p =
        e >= 0 ? std::log1p(std::exp(-e)) : -e + std::log1p(std::exp(e));
    const double neg_log_1mp =
        e >= 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll -= y(i) * neg_log_p + (1.0 - y(i)) * neg_log_1mp;
  }
  return ll;
}

inline IrlsFit fit_gaussian_ls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const std::vector<std::string>& names,
                               double ridge) {
  IrlsFit fit;
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  if (ridge == 0.0) {
    check_full_rank(X, names);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    fit.beta = qr.solve(y);
  } else {
    Eigen::MatrixXd gram = X.transpose() * X;
    gram.diagonal().array() += ridge;
    fit.beta = gram.ldlt().solve(X.transpose() * y);
  }
  const Eigen::VectorXd resid = y - X * fit.beta;
  const double rss = resid.squaredNorm();
  fit.sigma2 = rss / static_cast<double>(n);
  fit.deviance = rss;
  fit.loglik = -0.5 * static_cast<double>(n) *
               (std::log(2.0 * M_PI * fit.sigma2) + 1.0);
  Eigen::MatrixXd gram = X.transpose() * X;
  gram.diagonal().array() += ridge;
  fit.covariance = fit.sigma2 * gram.ldlt().solve(
                                    Eigen::MatrixXd::Identity(k, k));
  fit.iterations = 1;
  fit.converged = true;
  fit.ridged = ridge != 0.0;
  fit.objective_trace.push_back(rss + ridge * fit.beta.squaredNorm());
  return fit;
}

inline IrlsFit fit_binomial_irls(const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y,
                                 const std::vector<std::string>& names,
                                 const GlmOptions& options, double ridge) {
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  if (ridge == 0.0) check_full_rank(X, names);

  IrlsFit fit;
  fit.ridged = ridge != 0.0;
  fit.beta = Eigen::VectorXd::Zero(k);

  auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    return -2.0 * binomial_loglik(eta, y) + ridge * beta.squaredNorm();
  };

  double obj = objective(fit.beta);
  fit.objective_trace.push_back(obj);
  bool needs_ridge_retry = false;

  // Deviance and score both grow linearly in n. Relative thresholds keep the
  // fitted-parameter precision n-independent and sit above the objective's
  // floating-point granularity, which an absolute cutoff drops below once the
  // deviance reaches the 1e4 range.
  auto score_threshold = [&options](double objective_value) {
    return options.score_tol * (1.0 + std::fabs(objective_value));
  };

  // A binomial deviance this close to zero means every observation is fitted
  // to within ~1e-7 of its label: the data are perfectly classified and no
  // finite maximizer exists.
  auto perfectly_classified = [&ridge](double objective_value) {
    return ridge == 0.0 && objective_value < 1e-6;
  };

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    const Eigen::VectorXd eta = X * fit.beta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = expit(eta(i));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-10);
    }
    const Eigen::VectorXd score = X.transpose() * (y - mu) - ridge * fit.beta;

    Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    info.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) {
      needs_ridge_retry = true;
      break;
    }
    const Eigen::VectorXd step = ldlt.solve(score);
    if (!step.allFinite()) {
      needs_ridge_retry = true;
      break;
    }

    // Step-halving keeps the objective non-increasing.
    double scale = 1.0;
    Eigen::VectorXd candidate;
    double obj_new = 0.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving) {
      candidate = fit.beta + scale * step;
      obj_new = objective(candidate);
      if (std::isfinite(obj_new) && obj_new <= obj + 1e-12 * (1.0 + std::fabs(obj))) {
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      // A full Newton step that cannot improve the objective signals either
      // convergence (score already tiny) or a degenerate system.
      if (!perfectly_classified(obj) &&
          score.lpNorm<Eigen::Infinity>() <= score_threshold(obj)) {
        fit.converged = true;
      } else {
        needs_ridge_retry = true;
      }
      break;
    }

    fit.beta = candidate;
    const double obj_change = obj - obj_new;
    obj = obj_new;
    fit.objective_trace.push_back(obj);

    // Separation drives coefficients off to infinity while the deviance
    // still creeps (or collapses to zero outright); treat either signature
    // as a failure to converge.
    if (perfectly_classified(obj) ||
        (ridge == 0.0 && fit.beta.lpNorm<Eigen::Infinity>() > 30.0)) {
      needs_ridge_retry = true;
      break;
    }

    if (obj_change <= options.deviance_tol * (std::fabs(obj) + 0.1)) {
      const Eigen::VectorXd eta_now = X * fit.beta;
      Eigen::VectorXd mu_now(n);
      for (Eigen::Index i = 0; i < n; ++i) mu_now(i) = expit(eta_now(i));
      const Eigen::VectorXd score_now =
          X.transpose() * (y - mu_now) - ridge * fit.beta;
      if (score_now.lpNorm<Eigen::Infinity>() <= score_threshold(obj)) {
        fit.converged = true;
        break;
      }
    }
  }

  if (needs_ridge_retry || !fit.converged) {
    if (options.auto_ridge && ridge == 0.0) {
      IrlsFit retry =
          fit_binomial_irls(X, y, names, options, options.auto_ridge_value);
      retry.ridged = true;
      retry.warnings.push_back(
          "logistic fit unstable (separation or singular weights); "
          "ridge-stabilized estimates reported");
      return retry;
    }
    if (!fit.converged) {
      throw NumericError("logistic regression did not converge after " +
                         std::to_string(fit.iterations) + " iterations");
    }
  }

  const Eigen::VectorXd eta = X * fit.beta;
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = expit(eta(i));
    w(i) = std::max(mu * (1.0 - mu), 1e-10);
  }
  Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
  info.diagonal().array() += ridge;
  fit.covariance = info.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  fit.loglik = binomial_loglik(eta, y);
  fit.deviance = -2.0 * fit.loglik;
  return fit;
}

}  // namespace detail

// Maximum-likelihood fit of y on X for the given family. Gaussian solves the
// least-squares problem directly; binomial runs IRLS with step-halving.
inline IrlsFit fit_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        Family family, const GlmOptions& options = {},
                        const std::vector<std::string>& names = {}) {
  if (X.rows() != y.size()) throw DataError("design/response length mismatch");
  if (X.rows() < X.cols()) {
    throw DataError("fewer observations than coefficients (" +
                    std::to_string(X.rows()) + " < " + std::to_string(X.cols()) +
                    ")");
  }
  if (family == Family::binomial) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y(i) != 0.0 && y(i) != 1.0) {
        throw DataError("binomial response must be 0 or 1");
      }
    }
    return detail::fit_binomial_irls(X, y, names, options, options.ridge);
  }
  return detail::fit_gaussian_ls(X, y, names, options.ridge);
}

// A fitted fixed-effects regression bound to its dataset schema.
struct FittedGlm {
  ModelSpec spec;
  ResponseRole role = ResponseRole::outcome;
  std::vector<std::string> labels;
  GlmCoefficients coef;
  Eigen::VectorXd flat;
  std::vector<std::string> names;
  Eigen::MatrixXd covariance;
  double sigma2 = 0.0;
  double deviance = 0.0;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ridged = false;
  std::vector<double> objective_trace;
  std::vector<std::string> warnings;

  int hospital_index(const std::string& label) const {
    const auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || *it != label) {
      throw DataError("unknown hospital label '" + label + "'");
    }
    return static_cast<int>(it - labels.begin());
  }
};

inline FittedGlm fit_glm(const Dataset& data, const ModelSpec& spec,
                         ResponseRole role, const GlmOptions& options = {}) {
  if (spec.hospital_effects != EffectKind::fixed) {
    throw ConfigError("fit_glm handles fixed hospital effects only");
  }
  if (role == ResponseRole::mediator && spec.family == Family::binomial &&
      !data.mediator_binary()) {
    throw ConfigError("binomial mediator model requires a binary mediator");
  }
  const Design design = build_design(data, spec, role, true);
  IrlsFit fit = fit_irls(design.X, design.y, spec.family, options, design.names);

  FittedGlm out;
  out.spec = spec;
  out.role = role;
  out.labels = data.labels();
  out.coef = design.unpack(fit.beta);
  out.flat = std::move(fit.beta);
  out.names = design.names;
  out.covariance = std::move(fit.covariance);
  out.sigma2 = fit.sigma2;
  out.deviance = fit.deviance;
  out.loglik = fit.loglik;
  out.iterations = fit.iterations;
  out.converged = fit.converged;
  out.ridged = fit.ridged;
  out.objective_trace = std::move(fit.objective_trace);
  out.warnings = std::move(fit.warnings);
  return out;
}

// Mean outcome under hospital z and mediator value m. x is the full dataset
// covariate row.
template <class XRow>
double predict_mu(const FittedGlm& outcome_fit, int z, double m, const XRow& x) {
  const double lp = outcome_fit.coef.linear_predictor(z, m, x);
  return outcome_fit.spec.family == Family::binomial ? expit(lp) : lp;
}

template <class XRow>
double predict_mu(const FittedGlm& outcome_fit, const std::string& z, double m,
                  const XRow& x) {
  return predict_mu(outcome_fit, outcome_fit.hospital_index(z), m, x);
}

// P(M = m | z, x) for a binary mediator model.
template <class XRow>
double predict_eta(const FittedGlm& mediator_fit, int m, int z, const XRow& x) {
  if (mediator_fit.spec.family != Family::binomial) {
    throw ConfigError("predict_eta requires a binomial mediator model");
  }
  if (m != 0 && m != 1) throw ConfigError("binary mediator value must be 0 or 1");
  const double p1 = expit(mediator_fit.coef.linear_predictor(z, 0.0, x));
  return m == 1 ? p1 : 1.0 - p1;
}

template <class XRow>
double predict_eta(const FittedGlm& mediator_fit, int m, const std::string& z,
                   const XRow& x) {
  return predict_eta(mediator_fit, m, mediator_fit.hospital_index(z), x);
}

// Conditional mean of a continuous (gaussian) mediator.
template <class XRow>
double predict_mediator_mean(const FittedGlm& mediator_fit, int z, const XRow& x) {
  if (mediator_fit.spec.family != Family::gaussian) {
    throw ConfigError("mediator mean requires a gaussian mediator model");
  }
  return mediator_fit.coef.linear_predictor(z, 0.0, x);
}

}  // namespace medvar

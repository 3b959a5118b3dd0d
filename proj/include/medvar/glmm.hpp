#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "medvar/design.hpp"
#include "medvar/errors.hpp"
#include "medvar/glm.hpp"
#include "medvar/quadrature.hpp"

namespace medvar {

struct GlmmOptions {
  // Number of adaptive Gauss-Hermite nodes for binomial fits; 1 is the
  // Laplace approximation. Gaussian fits use an exact profiled likelihood
  // unless force_quadrature is set (testing hook: the gaussian integrand is
  // exactly quadratic, so any node count must reproduce the exact path).
  int quadrature_nodes = 15;
  bool force_quadrature = false;
  int max_iterations = 500;
  double objective_tol = 1e-8;  // relative marginal log likelihood change
  double gradient_tol = 1e-5;   // sup-norm, scaled by 1 + |loglik|
  double tau2_floor = 1e-8;     // at or below: boundary fit, tau2 == 0
  int max_inner_iterations = 50;
  GlmOptions pooled;
};

// Random-intercept regression fit by maximum likelihood. The hospital slot
// of `coef` carries the conditional modes, so predictions plug in the best
// available hospital effect; `fixed_flat` holds only the shared parameters.
struct FittedGlmm {
  ModelSpec spec;
  ResponseRole role = ResponseRole::outcome;
  std::vector<std::string> labels;
  GlmCoefficients coef;  // hospital(z) = conditional mode of hospital z
  Eigen::VectorXd fixed_flat;
  std::vector<std::string> fixed_names;
  Eigen::MatrixXd fixed_covariance;
  double tau2 = 0.0;    // variance of the hospital intercepts
  double sigma2 = 0.0;  // gaussian only: residual variance (ML)
  double loglik = 0.0;  // marginal log likelihood
  double pooled_loglik = 0.0;
  double lrt_chisq = 0.0;  // 2 * (loglik - pooled_loglik), clamped at zero
  int iterations = 0;
  int quadrature_nodes = 0;  // 0 marks the exact gaussian path
  bool converged = false;
  bool boundary = false;  // tau2 hit zero; estimates equal the pooled fit
  double mode_score_max = 0.0;  // max |d/db| of the joint density at the modes
  std::vector<double> objective_trace;  // -2 loglik per accepted iterate
  std::vector<std::string> warnings;

  int hospital_index(const std::string& label) const {
    const auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || *it != label) {
      throw DataError("unknown hospital label '" + label + "'");
    }
    return static_cast<int>(it - labels.begin());
  }
};

namespace detail {

struct ClusterIndex {
  std::vector<std::vector<Eigen::Index>> rows;  // per hospital
  std::vector<double> counts;
};

inline ClusterIndex cluster_rows(const Dataset& data) {
  ClusterIndex index;
  index.rows.resize(static_cast<std::size_t>(data.q()));
  index.counts.resize(static_cast<std::size_t>(data.q()));
  for (std::size_t i = 0; i < data.n(); ++i) {
    index.rows[static_cast<std::size_t>(data.hospital(i))].push_back(
        static_cast<Eigen::Index>(i));
  }
  for (std::size_t z = 0; z < index.rows.size(); ++z) {
    index.counts[z] = static_cast<double>(index.rows[z].size());
  }
  return index;
}

// Exact ML for the gaussian random-intercept model via the profiled
// likelihood of lambda = tau2/sigma2. For fixed lambda both beta and sigma2
// have closed forms through per-cluster sufficient statistics, so the outer
// problem is one-dimensional.
class GaussianProfile {
 public:
  GaussianProfile(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const ClusterIndex& clusters)
      : k_(X.cols()), n_(static_cast<double>(X.rows())) {
    const std::size_t q = clusters.rows.size();
    s_.resize(q);
    t_.resize(q);
    n_j_ = clusters.counts;
    xtx_ = Eigen::MatrixXd::Zero(k_, k_);
    xty_ = Eigen::VectorXd::Zero(k_);
    yty_ = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(k_);
      double t = 0.0;
      for (Eigen::Index i : clusters.rows[j]) {
        s += X.row(i).transpose();
        t += y(i);
        xtx_.noalias() += X.row(i).transpose() * X.row(i);
        xty_ += X.row(i).transpose() * y(i);
        yty_ += y(i) * y(i);
      }
      s_[j] = std::move(s);
      t_[j] = t;
    }
  }

  struct Eval {
    double minus2ll = 0.0;
    Eigen::VectorXd beta;
    double sigma2 = 0.0;
    Eigen::MatrixXd beta_cov;
  };

  Eval evaluate(double lambda) const {
    Eval out;
    Eigen::MatrixXd a = xtx_;
    Eigen::VectorXd b = xty_;
    double quad = yty_;
    double logdet = 0.0;
    for (std::size_t j = 0; j < s_.size(); ++j) {
      const double cj = lambda / (1.0 + lambda * n_j_[j]);
      a.noalias() -= cj * (s_[j] * s_[j].transpose());
      b -= cj * t_[j] * s_[j];
      quad -= cj * t_[j] * t_[j];
      logdet += std::log1p(lambda * n_j_[j]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success) {
      throw NumericError("gaussian mixed model: singular GLS system");
    }
    out.beta = ldlt.solve(b);
    const double rss = quad - out.beta.dot(b);
    out.sigma2 = std::max(rss / n_, 1e-300);
    out.minus2ll = n_ * std::log(2.0 * M_PI * out.sigma2) + logdet + n_;
    out.beta_cov =
        out.sigma2 * ldlt.solve(Eigen::MatrixXd::Identity(k_, k_));
    return out;
  }

  // Conditional mode of cluster j at (lambda, beta).
  double mode(std::size_t j, double lambda, const Eigen::VectorXd& beta) const {
    const double resid_sum = t_[j] - s_[j].dot(beta);
    return lambda * resid_sum / (1.0 + lambda * n_j_[j]);
  }

 private:
  Eigen::Index k_;
  double n_;
  std::vector<Eigen::VectorXd> s_;  // per-cluster column sums of X
  std::vector<double> t_;           // per-cluster sums of y
  std::vector<double> n_j_;
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xty_;
  double yty_ = 0.0;
};

// Marginal likelihood of the random-intercept model by adaptive
// Gauss-Hermite quadrature, with analytic gradients on the frozen node grid.
// Parameters are theta = (fixed coefficients, [log sigma], log tau).
class QuadratureLikelihood {
 public:
  QuadratureLikelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const ClusterIndex& clusters, Family family, int nodes,
                       int max_inner)
      : X_(X),
        y_(y),
        clusters_(clusters),
        family_(family),
        rule_(gauss_hermite(nodes)),
        max_inner_(max_inner),
        modes_(clusters.rows.size(), 0.0) {
    log_weights_.resize(rule_.nodes.size());
    for (std::size_t k = 0; k < rule_.nodes.size(); ++k) {
      // GH weights absorb exp(-t^2); adding t^2 back converts them into
      // plain integration weights for an arbitrary integrand.
      log_weights_[k] =
          std::log(rule_.weights[k]) + rule_.nodes[k] * rule_.nodes[k];
    }
  }

  Eigen::Index dim() const {
    return X_.cols() + (family_ == Family::gaussian ? 2 : 1);
  }

  // Log likelihood and, when grad is non-null, its analytic gradient.
  double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    const Eigen::Index k = X_.cols();
    const Eigen::VectorXd c = theta.head(k);
    const bool gaussian = family_ == Family::gaussian;
    const double sigma = gaussian ? std::exp(theta(k)) : 1.0;
    const double tau = std::exp(theta(theta.size() - 1));
    const double tau2 = tau * tau;
    const double sigma2 = sigma * sigma;

    const Eigen::VectorXd lp = X_ * c;
    if (grad) grad->setZero(dim());

    double total = 0.0;
    const std::size_t nodes = rule_.nodes.size();
    std::vector<double> log_terms(nodes), posterior(nodes);

    for (std::size_t j = 0; j < clusters_.rows.size(); ++j) {
      const auto& rows = clusters_.rows[j];

      // Inner Newton for the mode of the joint log density h(b). For the
      // gaussian family h is quadratic and one step is exact.
      double b = modes_[j];
      double h1 = 0.0, h2 = 0.0;
      for (int it = 0; it < max_inner_; ++it) {
        h1 = -b / tau2;
        h2 = -1.0 / tau2;
        for (Eigen::Index i : rows) {
          const double eta = lp(i) + b;
          if (gaussian) {
            h1 += (y_(i) - eta) / sigma2;
            h2 -= 1.0 / sigma2;
          } else {
            const double p = expit(eta);
            h1 += y_(i) - p;
            h2 -= std::max(p * (1.0 - p), 1e-12);
          }
        }
        const double step = -h1 / h2;
        b += step;
        if (std::fabs(step) < 1e-12 * (1.0 + std::fabs(b))) break;
      }
      modes_[j] = b;
      // Curvature at the final mode.
      h2 = -1.0 / tau2;
      for (Eigen::Index i : rows) {
        const double eta = lp(i) + b;
        if (gaussian) {
          h2 -= 1.0 / sigma2;
        } else {
          const double p = expit(eta);
          h2 -= std::max(p * (1.0 - p), 1e-12);
        }
      }
      const double scale = std::sqrt(2.0 / -h2);

      double max_term = -std::numeric_limits<double>::infinity();
      for (std::size_t node = 0; node < nodes; ++node) {
        const double bk = b + scale * rule_.nodes[node];
        log_terms[node] = log_weights_[node] + joint_log_density(rows, lp, bk, sigma2, tau2);
        max_term = std::max(max_term, log_terms[node]);
      }
      double sum = 0.0;
      for (std::size_t node = 0; node < nodes; ++node) {
        posterior[node] = std::exp(log_terms[node] - max_term);
        sum += posterior[node];
      }
      total += max_term + std::log(sum) + std::log(scale);
      for (std::size_t node = 0; node < nodes; ++node) posterior[node] /= sum;

      if (!grad) continue;
      if (gaussian) {
        // The gaussian posterior of b is exactly N(mode, -1/h2), so the
        // Fisher-identity gradient has closed-form moments; grid sums would
        // lose the second moment below two nodes.
        const double v = -1.0 / h2;
        const double nj = static_cast<double>(rows.size());
        double ssr = 0.0;
        for (Eigen::Index i : rows) {
          const double r = y_(i) - lp(i) - b;
          ssr += r * r;
          grad->head(k).noalias() += (r / sigma2) * X_.row(i).transpose();
        }
        grad->operator()(k) += -nj + (ssr + nj * v) / sigma2;
        grad->operator()(dim() - 1) += (b * b + v) / tau2 - 1.0;
        continue;
      }
      // Fisher identity on the frozen grid: the gradient of log L_j is the
      // posterior expectation of the gradient of h.
      for (std::size_t node = 0; node < nodes; ++node) {
        const double w = posterior[node];
        if (w < 1e-300) continue;
        const double bk = b + scale * rule_.nodes[node];
        double dzeta = bk * bk / tau2 - 1.0;
        double dlogsigma = -static_cast<double>(rows.size());
        for (Eigen::Index i : rows) {
          const double eta = lp(i) + bk;
          double resid;
          if (gaussian) {
            resid = (y_(i) - eta) / sigma2;
            dlogsigma += (y_(i) - eta) * (y_(i) - eta) / sigma2;
          } else {
            resid = y_(i) - expit(eta);
          }
          grad->head(k).noalias() += w * resid * X_.row(i).transpose();
        }
        if (gaussian) grad->operator()(k) += w * dlogsigma;
        grad->operator()(dim() - 1) += w * dzeta;
      }
    }
    return total;
  }

  double mode_score_max(const Eigen::VectorXd& theta) {
    const Eigen::Index k = X_.cols();
    const Eigen::VectorXd c = theta.head(k);
    const bool gaussian = family_ == Family::gaussian;
    const double sigma2 = gaussian ? std::exp(2.0 * theta(k)) : 1.0;
    const double tau2 = std::exp(2.0 * theta(theta.size() - 1));
    const Eigen::VectorXd lp = X_ * c;
    double worst = 0.0;
    for (std::size_t j = 0; j < clusters_.rows.size(); ++j) {
      double h1 = -modes_[j] / tau2;
      for (Eigen::Index i : clusters_.rows[j]) {
        const double eta = lp(i) + modes_[j];
        h1 += gaussian ? (y_(i) - eta) / sigma2 : y_(i) - expit(eta);
      }
      worst = std::max(worst, std::fabs(h1));
    }
    return worst;
  }

  const std::vector<double>& modes() const { return modes_; }

 private:
  double joint_log_density(const std::vector<Eigen::Index>& rows,
                           const Eigen::VectorXd& lp, double b, double sigma2,
                           double tau2) const {
    double h = -0.5 * b * b / tau2 - 0.5 * std::log(2.0 * M_PI * tau2);
    for (Eigen::Index i : rows) {
      const double eta = lp(i) + b;
      if (family_ == Family::gaussian) {
        const double r = y_(i) - eta;
        h += -0.5 * r * r / sigma2 - 0.5 * std::log(2.0 * M_PI * sigma2);
      } else {
        const double e = eta;
        const double log1pexp =
            e >= 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        h += y_(i) * e - log1pexp;
      }
    }
    return h;
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  const ClusterIndex& clusters_;
  Family family_;
  const GaussHermite& rule_;
  std::vector<double> log_weights_;
  int max_inner_;
  std::vector<double> modes_;  // warm starts across evaluations
};

// BFGS with Armijo backtracking on f = -loglik. Returns the iterate count;
// the best point is written back into theta.
template <class Objective>
int bfgs_maximize(Objective&& objective, Eigen::VectorXd& theta,
                  const GlmmOptions& options, double zeta_floor,
                  Eigen::Index zeta_index, bool& converged,
                  std::vector<double>& trace) {
  const Eigen::Index d = theta.size();
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd grad(d);
  double f = -objective(theta, &grad);
  grad = -grad;
  trace.push_back(2.0 * f);  // -2 loglik

  converged = false;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const double scale_ref = 1.0 + std::fabs(f);
    if (grad.lpNorm<Eigen::Infinity>() <= options.gradient_tol * scale_ref) {
      converged = true;
      break;
    }

    Eigen::VectorXd direction = -(h_inv * grad);
    if (iter == 0) {
      direction = -grad / std::max(1.0, grad.norm());
    }
    double slope = grad.dot(direction);
    if (slope >= 0.0) {
      // Curvature information went stale; restart from steepest descent.
      h_inv.setIdentity();
      direction = -grad / std::max(1.0, grad.norm());
      slope = grad.dot(direction);
    }

    double alpha = 1.0;
    Eigen::VectorXd theta_new;
    Eigen::VectorXd grad_new(d);
    double f_new = f;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      theta_new = theta + alpha * direction;
      if (theta_new(zeta_index) < zeta_floor) theta_new(zeta_index) = zeta_floor;
      f_new = -objective(theta_new, &grad_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      converged = grad.lpNorm<Eigen::Infinity>() <=
                  10.0 * options.gradient_tol * scale_ref;
      break;
    }

    grad_new = -grad_new;
    const Eigen::VectorXd s = theta_new - theta;
    const Eigen::VectorXd yv = grad_new - grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      if (iter == 0) {
        h_inv = (sy / yv.squaredNorm()) * Eigen::MatrixXd::Identity(d, d);
      }
      const Eigen::VectorXd hy = h_inv * yv;
      const double yhy = yv.dot(hy);
      h_inv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
               (hy * s.transpose() + s * hy.transpose()) / sy;
    }

    const double change = f - f_new;
    theta = theta_new;
    grad = grad_new;
    f = f_new;
    trace.push_back(2.0 * f);

    if (change <= options.objective_tol * (std::fabs(f) + 0.1)) {
      converged = true;
      ++iter;
      break;
    }
  }
  return iter;
}

inline FittedGlmm glmm_boundary_fit(const Dataset& data, const ModelSpec& spec,
                                    ResponseRole role, const Design& design,
                                    const IrlsFit& pooled,
                                    std::vector<std::string> warnings) {
  FittedGlmm out;
  out.spec = spec;
  out.role = role;
  out.labels = data.labels();
  out.coef = design.unpack(pooled.beta);
  out.coef.hospital = Eigen::VectorXd::Zero(data.q());
  out.fixed_flat = pooled.beta;
  out.fixed_names = design.names;
  out.fixed_covariance = pooled.covariance;
  out.tau2 = 0.0;
  out.sigma2 = pooled.sigma2;
  out.loglik = pooled.loglik;
  out.pooled_loglik = pooled.loglik;
  out.lrt_chisq = 0.0;
  out.iterations = pooled.iterations;
  out.converged = true;
  out.boundary = true;
  out.warnings = std::move(warnings);
  out.warnings.push_back(
      "hospital variance hit the boundary; pooled fit reported (tau2 = 0)");
  return out;
}

}  // namespace detail

// Maximum-likelihood fit of a random-intercept model for the outcome or the
// mediator. Gaussian responses use the exact profiled likelihood; binomial
// responses use adaptive Gauss-Hermite quadrature with a BFGS outer loop.
inline FittedGlmm fit_glmm(const Dataset& data, const ModelSpec& spec,
                           ResponseRole role, const GlmmOptions& options = {}) {
  if (spec.hospital_effects != EffectKind::random_intercept) {
    throw ConfigError("fit_glmm handles random hospital intercepts only");
  }
  if (spec.hospital_mediator_interaction) {
    throw ConfigError("hospital-mediator interaction requires fixed hospital effects");
  }
  if (role == ResponseRole::mediator && spec.family == Family::binomial &&
      !data.mediator_binary()) {
    throw ConfigError("binomial mediator model requires a binary mediator");
  }
  if (options.quadrature_nodes < 1) {
    throw ConfigError("quadrature node count must be at least 1");
  }

  const Design design = build_design(data, spec, role, false);
  const detail::ClusterIndex clusters = detail::cluster_rows(data);

  // Pooled fit: starting values, the likelihood-ratio reference, and the
  // boundary fallback.
  const IrlsFit pooled =
      fit_irls(design.X, design.y, spec.family, options.pooled, design.names);

  const bool gaussian_exact =
      spec.family == Family::gaussian && !options.force_quadrature;

  FittedGlmm out;
  out.spec = spec;
  out.role = role;
  out.labels = data.labels();
  out.fixed_names = design.names;
  out.pooled_loglik = pooled.loglik;

  if (gaussian_exact) {
    detail::GaussianProfile profile(design.X, design.y, clusters);

    // Coarse scan over log lambda, then golden-section refinement. The
    // profiled objective is smooth in log lambda with a single practical
    // minimum for one-way random intercepts.
    const double lo = -30.0, hi = 15.0;
    double best_t = lo;
    double best_val = std::numeric_limits<double>::infinity();
    out.objective_trace.clear();
    for (double t = lo; t <= hi + 1e-9; t += 0.5) {
      const double val = profile.evaluate(std::exp(t)).minus2ll;
      if (val < best_val) {
        best_val = val;
        best_t = t;
        out.objective_trace.push_back(val);
      }
    }
    double a = best_t - 0.5, b = best_t + 0.5;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = profile.evaluate(std::exp(x1)).minus2ll;
    double f2 = profile.evaluate(std::exp(x2)).minus2ll;
    for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - gr * (b - a);
        f1 = profile.evaluate(std::exp(x1)).minus2ll;
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + gr * (b - a);
        f2 = profile.evaluate(std::exp(x2)).minus2ll;
      }
      const double running = std::min(f1, f2);
      if (running < out.objective_trace.back()) {
        out.objective_trace.push_back(running);
      }
    }
    const double t_hat = f1 <= f2 ? x1 : x2;
    const double lambda = std::exp(t_hat);
    const auto eval = profile.evaluate(lambda);

    // The lambda = 0 boundary is the pooled model; prefer it when the
    // interior optimum cannot beat it.
    const double pooled_minus2ll = -2.0 * pooled.loglik;
    if (pooled_minus2ll <= eval.minus2ll + 1e-10 ||
        lambda * eval.sigma2 <= options.tau2_floor) {
      return detail::glmm_boundary_fit(data, spec, role, design, pooled, {});
    }

    out.coef = design.unpack(eval.beta);
    out.coef.hospital = Eigen::VectorXd::Zero(data.q());
    for (int z = 0; z < data.q(); ++z) {
      out.coef.hospital(z) =
          profile.mode(static_cast<std::size_t>(z), lambda, eval.beta);
    }
    out.fixed_flat = eval.beta;
    out.fixed_covariance = eval.beta_cov;
    out.sigma2 = eval.sigma2;
    out.tau2 = lambda * eval.sigma2;
    out.loglik = -0.5 * eval.minus2ll;
    out.lrt_chisq = std::max(0.0, 2.0 * (out.loglik - pooled.loglik));
    out.iterations = static_cast<int>(out.objective_trace.size());
    out.quadrature_nodes = 0;
    out.converged = true;
    out.mode_score_max = 0.0;
    return out;
  }

  // Quadrature path. theta = (fixed coefficients, [log sigma], log tau).
  detail::QuadratureLikelihood like(design.X, design.y, clusters, spec.family,
                                    options.quadrature_nodes,
                                    options.max_inner_iterations);
  const Eigen::Index d = like.dim();
  const Eigen::Index zeta_index = d - 1;
  const double zeta_floor = 0.5 * std::log(std::max(options.tau2_floor * 0.01, 1e-14));

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  theta.head(design.X.cols()) = pooled.beta;
  if (spec.family == Family::gaussian) {
    theta(design.X.cols()) = 0.5 * std::log(std::max(pooled.sigma2, 1e-12));
  }
  theta(zeta_index) = 0.0;  // tau = 1 start

  auto objective = [&](const Eigen::VectorXd& th, Eigen::VectorXd* grad) {
    return like.evaluate(th, grad);
  };

  bool converged = false;
  out.iterations = detail::bfgs_maximize(objective, theta, options, zeta_floor,
                                         zeta_index, converged, out.objective_trace);
  out.quadrature_nodes = options.quadrature_nodes;

  const double tau2_hat = std::exp(2.0 * theta(zeta_index));
  if (tau2_hat <= options.tau2_floor ||
      theta(zeta_index) <= zeta_floor + 1e-9) {
    return detail::glmm_boundary_fit(data, spec, role, design, pooled,
                                     std::move(out.warnings));
  }
  if (!converged) {
    throw NumericError("mixed model did not converge after " +
                       std::to_string(out.iterations) + " outer iterations");
  }

  Eigen::VectorXd grad_unused(d);
  out.loglik = like.evaluate(theta, &grad_unused);
  out.mode_score_max = like.mode_score_max(theta);

  out.coef = design.unpack(theta.head(design.X.cols()));
  out.coef.hospital = Eigen::VectorXd::Zero(data.q());
  for (int z = 0; z < data.q(); ++z) {
    out.coef.hospital(z) = like.modes()[static_cast<std::size_t>(z)];
  }
  out.fixed_flat = theta.head(design.X.cols());
  out.tau2 = tau2_hat;
  out.sigma2 = spec.family == Family::gaussian
                   ? std::exp(2.0 * theta(design.X.cols()))
                   : 0.0;
  out.lrt_chisq = std::max(0.0, 2.0 * (out.loglik - pooled.loglik));
  out.converged = true;

  // Fixed-effect covariance by central differences of the analytic gradient.
  {
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(d, d);
    const double step = 1e-5;
    Eigen::VectorXd gp(d), gm(d), point = theta;
    bool ok = true;
    for (Eigen::Index j = 0; j < d; ++j) {
      point(j) = theta(j) + step;
      like.evaluate(point, &gp);
      point(j) = theta(j) - step;
      like.evaluate(point, &gm);
      point(j) = theta(j);
      info.col(j) = -(gp - gm) / (2.0 * step);
    }
    info = 0.5 * (info + info.transpose());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() == Eigen::Success) {
      const Eigen::MatrixXd cov =
          ldlt.solve(Eigen::MatrixXd::Identity(d, d));
      if (cov.allFinite()) {
        out.fixed_covariance = cov.topLeftCorner(design.X.cols(), design.X.cols());
      } else {
        ok = false;
      }
    } else {
      ok = false;
    }
    if (!ok) {
      out.fixed_covariance =
          Eigen::MatrixXd::Zero(design.X.cols(), design.X.cols());
      out.warnings.push_back(
          "observed information singular; fixed-effect covariance unavailable");
    }
    // Restore the cached modes to the optimum for downstream predictions.
    like.evaluate(theta, nullptr);
  }

  return out;
}

// Conditional-mode predictions: the fitted hospital effect is plugged into
// the linear predictor.
template <class XRow>
double predict_mu_random(const FittedGlmm& fit, int z, double m, const XRow& x) {
  if (fit.role != ResponseRole::outcome) {
    throw ConfigError("predict_mu_random requires an outcome fit");
  }
  const double lp = fit.coef.linear_predictor(z, m, x);
  return fit.spec.family == Family::binomial ? expit(lp) : lp;
}

template <class XRow>
double predict_mu_random(const FittedGlmm& fit, const std::string& z, double m,
                         const XRow& x) {
  return predict_mu_random(fit, fit.hospital_index(z), m, x);
}

template <class XRow>
double predict_eta_random(const FittedGlmm& fit, int m, int z, const XRow& x) {
  if (fit.role != ResponseRole::mediator || fit.spec.family != Family::binomial) {
    throw ConfigError("predict_eta_random requires a binomial mediator fit");
  }
  if (m != 0 && m != 1) throw ConfigError("binary mediator value must be 0 or 1");
  const double p1 = expit(fit.coef.linear_predictor(z, 0.0, x));
  return m == 1 ? p1 : 1.0 - p1;
}

template <class XRow>
double predict_eta_random(const FittedGlmm& fit, int m, const std::string& z,
                          const XRow& x) {
  return predict_eta_random(fit, m, fit.hospital_index(z), x);
}

template <class XRow>
double predict_mediator_mean_random(const FittedGlmm& fit, int z, const XRow& x) {
  if (fit.role != ResponseRole::mediator || fit.spec.family != Family::gaussian) {
    throw ConfigError("mediator mean requires a gaussian mediator fit");
  }
  return fit.coef.linear_predictor(z, 0.0, x);
}

}  // namespace medvar

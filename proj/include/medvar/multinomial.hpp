#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "medvar/dataset.hpp"
#include "medvar/errors.hpp"
#include "medvar/glm.hpp"

namespace medvar {

// Multinomial logistic model for hospital assignment. The first (sorted)
// hospital is the baseline with score zero; every other hospital gets an
// intercept, and a case-mix slope vector unless it was masked for being
// smaller than the fitting threshold.
struct AssignmentModel {
  std::vector<std::string> labels;
  std::vector<std::string> covariate_names;
  int p = 0;
  int small_hospital_threshold = 0;
  Eigen::VectorXd psi;           // q intercepts, psi(0) == 0
  Eigen::MatrixXd phi;           // q x p slopes, row 0 and masked rows == 0
  std::vector<char> slope_free;  // per hospital; baseline is never free
  // Flat free-parameter order: hospitals 1..q-1, intercept then slopes.
  // term == -1 marks an intercept, otherwise the covariate column.
  std::vector<std::pair<int, int>> free_map;
  Eigen::MatrixXd covariance;    // free parameters, inverse observed information
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ridged = false;
  std::vector<double> objective_trace;  // -2 loglik per accepted iterate
  std::vector<std::string> warnings;

  int q() const { return static_cast<int>(labels.size()); }

  int hospital_index(const std::string& label) const {
    const auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || *it != label) {
      throw DataError("unknown hospital label '" + label + "'");
    }
    return static_cast<int>(it - labels.begin());
  }

  Eigen::VectorXd get_free() const {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(free_map.size()));
    for (std::size_t j = 0; j < free_map.size(); ++j) {
      const auto [z, term] = free_map[j];
      theta(static_cast<Eigen::Index>(j)) = term < 0 ? psi(z) : phi(z, term);
    }
    return theta;
  }

  void set_free(const Eigen::VectorXd& theta) {
    if (theta.size() != static_cast<Eigen::Index>(free_map.size())) {
      throw ConfigError("assignment parameter vector has wrong length");
    }
    for (std::size_t j = 0; j < free_map.size(); ++j) {
      const auto [z, term] = free_map[j];
      if (term < 0) {
        psi(z) = theta(static_cast<Eigen::Index>(j));
      } else {
        phi(z, term) = theta(static_cast<Eigen::Index>(j));
      }
    }
  }

  // Softmax probabilities over all hospitals for one covariate row. The
  // max-shift keeps exponentials bounded; the result sums to one up to
  // floating point roundoff.
  template <class XRow>
  Eigen::VectorXd probabilities(const XRow& x) const {
    const int nq = q();
    Eigen::VectorXd score(nq);
    score(0) = 0.0;
    for (int z = 1; z < nq; ++z) {
      double s = psi(z);
      for (int j = 0; j < p; ++j) s += phi(z, j) * x(j);
      score(z) = s;
    }
    const double shift = score.maxCoeff();
    Eigen::VectorXd prob(nq);
    double total = 0.0;
    for (int z = 0; z < nq; ++z) {
      prob(z) = std::exp(score(z) - shift);
      total += prob(z);
    }
    prob /= total;
    return prob;
  }
};

namespace detail {

inline double multinomial_loglik(const Dataset& data, const AssignmentModel& model) {
  double ll = 0.0;
  const int nq = model.q();
  Eigen::VectorXd score(nq);
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto x = data.covariate_row(i);
    score(0) = 0.0;
    for (int z = 1; z < nq; ++z) {
      double s = model.psi(z);
      for (int j = 0; j < model.p; ++j) s += model.phi(z, j) * x(j);
      score(z) = s;
    }
    const double shift = score.maxCoeff();
    double total = 0.0;
    for (int z = 0; z < nq; ++z) total += std::exp(score(z) - shift);
    ll += score(data.hospital(i)) - shift - std::log(total);
  }
  return ll;
}

}  // namespace detail

// Newton fit of the assignment model. Hospitals with fewer than
// `small_hospital_threshold` patients keep intercept-only scores; pass 0 to
// give every non-baseline hospital a slope vector.
inline AssignmentModel fit_assignment(const Dataset& data,
                                      int small_hospital_threshold = 40,
                                      const GlmOptions& options = {}) {
  const int nq = data.q();
  const int p = data.p();
  const std::size_t n = data.n();

  AssignmentModel model;
  model.labels = data.labels();
  model.covariate_names = data.covariate_names();
  model.p = p;
  model.small_hospital_threshold = small_hospital_threshold;
  model.psi = Eigen::VectorXd::Zero(nq);
  model.phi = Eigen::MatrixXd::Zero(nq, p);
  model.slope_free.assign(static_cast<std::size_t>(nq), 0);

  for (int z = 1; z < nq; ++z) {
    const bool free = static_cast<int>(data.hospital_count(z)) >=
                      small_hospital_threshold;
    model.slope_free[static_cast<std::size_t>(z)] = free && p > 0 ? 1 : 0;
    model.free_map.emplace_back(z, -1);
    if (model.slope_free[static_cast<std::size_t>(z)]) {
      for (int j = 0; j < p; ++j) model.free_map.emplace_back(z, j);
    }
  }
  const Eigen::Index kfree = static_cast<Eigen::Index>(model.free_map.size());

  // Empirical log odds against the baseline start the intercepts close to
  // the optimum; slopes start at zero.
  const double n0 = static_cast<double>(data.hospital_count(0));
  for (int z = 1; z < nq; ++z) {
    model.psi(z) = std::log(static_cast<double>(data.hospital_count(z)) / n0);
  }

  // Offsets of each hospital's block inside the free-parameter vector.
  std::vector<Eigen::Index> block_at(static_cast<std::size_t>(nq), -1);
  std::vector<int> block_len(static_cast<std::size_t>(nq), 0);
  for (std::size_t j = 0; j < model.free_map.size(); ++j) {
    const auto [z, term] = model.free_map[j];
    if (term < 0) block_at[static_cast<std::size_t>(z)] = static_cast<Eigen::Index>(j);
    ++block_len[static_cast<std::size_t>(z)];
  }

  double ridge = options.ridge;
  double ll = detail::multinomial_loglik(data, model);
  model.objective_trace.push_back(-2.0 * ll);

  Eigen::VectorXd grad(kfree);
  Eigen::MatrixXd hess(kfree, kfree);
  Eigen::VectorXd prob(nq);
  Eigen::VectorXd u(std::max(p, 0) + 1);

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    model.iterations = iter;
    grad.setZero();
    hess.setZero();

    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.covariate_row(i);
      prob = model.probabilities(x);
      const int zi = data.hospital(i);
      u(0) = 1.0;
      for (int j = 0; j < p; ++j) u(j + 1) = x(j);

      for (int z = 1; z < nq; ++z) {
        const Eigen::Index at = block_at[static_cast<std::size_t>(z)];
        const int len = block_len[static_cast<std::size_t>(z)];
        const double resid = (zi == z ? 1.0 : 0.0) - prob(z);
        for (int a = 0; a < len; ++a) grad(at + a) += resid * u(a);

        // Upper-triangle Hessian blocks; curvature of the log likelihood is
        // -sum_i [diag(e) - e e'] expanded over score gradients u.
        for (int w = z; w < nq; ++w) {
          const Eigen::Index at2 = block_at[static_cast<std::size_t>(w)];
          const int len2 = block_len[static_cast<std::size_t>(w)];
          const double curv =
              prob(z) * ((z == w ? 1.0 : 0.0) - prob(w));
          for (int a = 0; a < len; ++a) {
            const double ua = curv * u(a);
            for (int b = 0; b < len2; ++b) {
              hess(at + a, at2 + b) -= ua * u(b);
            }
          }
        }
      }
    }
    for (Eigen::Index r = 0; r < kfree; ++r) {
      for (Eigen::Index c = 0; c < r; ++c) hess(r, c) = hess(c, r);
    }

    Eigen::VectorXd theta = model.get_free();
    if (ridge > 0.0) {
      grad -= ridge * theta;
      hess.diagonal().array() -= ridge;
    }

    // Score and log likelihood both grow linearly in n, so a scale-relative
    // tolerance keeps the fitted-parameter precision n-independent.
    if (grad.lpNorm<Eigen::Infinity>() <=
        options.score_tol * (1.0 + std::fabs(ll))) {
      model.converged = true;
      break;
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(-hess);
    Eigen::VectorXd step;
    bool solved = ldlt.info() == Eigen::Success;
    if (solved) {
      step = ldlt.solve(grad);
      solved = step.allFinite();
    }
    if (!solved) {
      if (options.auto_ridge && ridge == 0.0) {
        ridge = options.auto_ridge_value;
        model.ridged = true;
        model.warnings.push_back(
            "assignment fit unstable; ridge-stabilized estimates reported");
        continue;
      }
      throw NumericError("assignment model: singular information matrix");
    }

    double scale = 1.0;
    bool improved = false;
    double ll_new = ll;
    // Acceptance slack tracks the objective's floating-point granularity;
    // a fixed 1e-12 would reject exact-arithmetic improvements once the
    // log likelihood reaches the 1e5 range.
    const double slack = 1e-12 * (1.0 + std::fabs(ll));
    for (int halving = 0; halving < 40; ++halving) {
      model.set_free(theta + scale * step);
      ll_new = detail::multinomial_loglik(data, model);
      if (ridge > 0.0) {
        // Penalized objective so the trace stays monotone under the ridge.
        const double pen_old = ll - 0.5 * ridge * theta.squaredNorm();
        const double pen_new =
            ll_new - 0.5 * ridge * model.get_free().squaredNorm();
        if (std::isfinite(ll_new) && pen_new >= pen_old - slack) {
          improved = true;
          break;
        }
      } else if (std::isfinite(ll_new) && ll_new >= ll - slack) {
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      model.set_free(theta);
      if (options.auto_ridge && ridge == 0.0) {
        ridge = options.auto_ridge_value;
        model.ridged = true;
        model.warnings.push_back(
            "assignment fit unstable; ridge-stabilized estimates reported");
        continue;
      }
      throw NumericError("assignment model: Newton step failed to improve");
    }

    ll = ll_new;
    model.objective_trace.push_back(-2.0 * ll);

    // Convergence is decided by the score check at the top of the next
    // sweep, so the final gradient is always evaluated at the reported
    // estimates.
    if (ridge == 0.0 &&
        model.get_free().lpNorm<Eigen::Infinity>() >
            30.0 + std::log(static_cast<double>(n))) {
      if (options.auto_ridge) {
        ridge = options.auto_ridge_value;
        model.ridged = true;
        model.warnings.push_back(
            "assignment scores diverging (sparse hospital or separation); "
            "ridge-stabilized estimates reported");
        continue;
      }
      throw NumericError("assignment model: diverging scores");
    }
  }

  if (!model.converged) {
    throw NumericError("assignment model did not converge after " +
                       std::to_string(model.iterations) + " iterations");
  }

  // Observed information of the free parameters at the optimum, for
  // approximate-posterior draws. Rebuilt without the ridge so intervals are
  // honest; if that matrix is singular the ridged version is used instead.
  {
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(kfree, kfree);
    Eigen::VectorXd uu(std::max(p, 0) + 1);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = data.covariate_row(i);
      prob = model.probabilities(x);
      uu(0) = 1.0;
      for (int j = 0; j < p; ++j) uu(j + 1) = x(j);
      for (int z = 1; z < nq; ++z) {
        const Eigen::Index at = block_at[static_cast<std::size_t>(z)];
        const int len = block_len[static_cast<std::size_t>(z)];
        for (int w = z; w < nq; ++w) {
          const Eigen::Index at2 = block_at[static_cast<std::size_t>(w)];
          const int len2 = block_len[static_cast<std::size_t>(w)];
          const double curv = prob(z) * ((z == w ? 1.0 : 0.0) - prob(w));
          for (int a = 0; a < len; ++a) {
            const double ua = curv * uu(a);
            for (int b = 0; b < len2; ++b) info(at + a, at2 + b) += ua * uu(b);
          }
        }
      }
    }
    for (Eigen::Index r = 0; r < kfree; ++r) {
      for (Eigen::Index c = 0; c < r; ++c) info(r, c) = info(c, r);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() == Eigen::Success) {
      model.covariance = ldlt.solve(Eigen::MatrixXd::Identity(kfree, kfree));
    }
    if (model.covariance.size() == 0 || !model.covariance.allFinite()) {
      Eigen::MatrixXd ridged_info = info;
      ridged_info.diagonal().array() += options.auto_ridge_value;
      model.covariance =
          ridged_info.ldlt().solve(Eigen::MatrixXd::Identity(kfree, kfree));
      model.warnings.push_back(
          "assignment information singular; covariance from ridged information");
    }
  }

  model.loglik = detail::multinomial_loglik(data, model);
  return model;
}

// e(z | x): probability that a patient with case-mix x is assigned to z.
template <class XRow>
double predict_e(const AssignmentModel& model, int z, const XRow& x) {
  if (z < 0 || z >= model.q()) throw DataError("hospital index out of range");
  return model.probabilities(x)(z);
}

template <class XRow>
double predict_e(const AssignmentModel& model, const std::string& z,
                 const XRow& x) {
  return predict_e(model, model.hospital_index(z), x);
}

}  // namespace medvar

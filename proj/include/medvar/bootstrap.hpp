#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "medvar/dataset.hpp"
#include "medvar/errors.hpp"
#include "medvar/mechanism.hpp"
#include "medvar/mediation.hpp"
#include "medvar/models.hpp"
#include "medvar/parallel.hpp"
#include "medvar/rng.hpp"

namespace medvar {

struct BootstrapOptions {
  int draws = 1000;
  std::uint64_t seed = 1;
  int threads = 1;
  double level = 0.95;
  // Random-effect refits: replace fitted conditional modes with fresh
  // N(0, tau2) hospital effects when resampling responses.
  bool redraw_random_effects = true;
  // Hard error when more than this fraction of draws fails to refit.
  double max_failure_fraction = 0.05;
  int gh_nodes = 30;
  FitOptions refit;
};

// Approximate posterior of the decomposition: parametric resampling of the
// outcome and mediator models plus normal draws of the assignment
// parameters. Only converged draws are retained.
struct PosteriorDraws {
  std::uint64_t seed = 0;
  int requested = 0;
  std::size_t discarded = 0;
  double level = 0.95;
  std::vector<Decomposition> draws;
  std::vector<int> draw_ids;  // substream index per retained draw
  std::vector<std::string> warnings;
};

namespace detail {

inline double component_value(const Decomposition& d, const std::string& name) {
  if (name == "omega0") return d.omega0;
  if (name == "omega1") return d.omega1;
  if (name == "omega2") return d.omega2;
  if (name == "omega3") return d.omega3;
  if (name == "total_variance") return d.total_variance;
  if (name == "casemix") return d.casemix;
  if (name == "residual") return d.residual;
  throw ConfigError("unknown decomposition component '" + name + "'");
}

}  // namespace detail

// Type-7 quantile of a sorted sample (the interpolation used by most
// statistical software).
inline double quantile_type7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw DataError("quantile of an empty sample");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  const double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline PosteriorDraws draw_posterior(const Dataset& data,
                                     const OutcomeModel& outcome,
                                     const MediatorModel& mediator,
                                     const AssignmentModel* assignment,
                                     const AssignmentMechanism& mechanism,
                                     const BootstrapOptions& options) {
  if (options.draws < 1) throw ConfigError("bootstrap needs at least one draw");
  if (!(options.level > 0.0 && options.level < 1.0)) {
    throw ConfigError("credible level must lie in (0, 1)");
  }
  if (mechanism.kind() == MechanismKind::observed && assignment == nullptr) {
    throw ConfigError("observed mechanism draws need the fitted assignment model");
  }
  mechanism.check_against(data);

  PosteriorDraws result;
  result.seed = options.seed;
  result.requested = options.draws;
  result.level = options.level;

  // Cholesky factor of the assignment covariance, shared by all draws.
  Eigen::MatrixXd chol;
  Eigen::VectorXd theta_hat;
  if (mechanism.kind() == MechanismKind::observed) {
    theta_hat = assignment->get_free();
    Eigen::MatrixXd cov = assignment->covariance;
    if (cov.rows() != theta_hat.size() || cov.cols() != theta_hat.size()) {
      throw NumericError("assignment covariance has the wrong shape");
    }
    double jitter = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
      Eigen::MatrixXd work = cov;
      work.diagonal().array() += jitter;
      Eigen::LLT<Eigen::MatrixXd> llt(work);
      if (llt.info() == Eigen::Success) {
        chol = llt.matrixL();
        break;
      }
      jitter = jitter == 0.0 ? 1e-12 * (1.0 + cov.diagonal().maxCoeff())
                             : jitter * 100.0;
    }
    if (chol.size() == 0) {
      throw NumericError("assignment covariance is not positive definite");
    }
    if (jitter > 0.0) {
      result.warnings.push_back(
          "assignment covariance jittered for the Cholesky factor");
    }
  }

  const std::size_t total = static_cast<std::size_t>(options.draws);
  std::vector<Decomposition> slots(total);
  std::vector<char> ok(total, 0);

  parallel_for(total, options.threads, [&](std::size_t b) {
    try {
      CounterRng rng_y =
          CounterRng::stream(options.seed, rng_stream::kBootstrapOutcome, b);
      CounterRng rng_m =
          CounterRng::stream(options.seed, rng_stream::kBootstrapMediator, b);

      const Dataset data_y = data.with_outcomes(
          outcome.simulate(data, rng_y, options.redraw_random_effects));
      const Dataset data_m = data.with_mediators(
          mediator.simulate(data, rng_m, options.redraw_random_effects));

      // Refits follow the factorization of the estimation problem: theta1
      // from (Y*, Z, M, X), theta2 from (Z, M*, X), theta3 from its normal
      // approximation. The observed mediator column feeds the outcome refit.
      const OutcomeModel outcome_b =
          fit_outcome_model(data_y, outcome.spec(), options.refit);
      const MediatorModel mediator_b =
          fit_mediator_model(data_m, mediator.spec(), options.refit);

      Decomposition draw;
      if (mechanism.kind() == MechanismKind::observed) {
        CounterRng rng_a = CounterRng::stream(
            options.seed, rng_stream::kBootstrapAssignment, b);
        Eigen::VectorXd zvec(theta_hat.size());
        for (Eigen::Index j = 0; j < zvec.size(); ++j) zvec(j) = rng_a.normal();
        AssignmentModel model_b = *assignment;
        model_b.set_free(theta_hat + chol * zvec);
        const AssignmentMechanism mech_b =
            AssignmentMechanism::observed(data, model_b);
        draw = decompose(data, outcome_b, mediator_b, mech_b,
                         {.gh_nodes = options.gh_nodes});
      } else {
        draw = decompose(data, outcome_b, mediator_b, mechanism,
                         {.gh_nodes = options.gh_nodes});
      }
      slots[b] = draw;
      ok[b] = 1;
    } catch (const NumericError&) {
      ok[b] = 0;
    }
  });

  for (std::size_t b = 0; b < total; ++b) {
    if (ok[b]) {
      result.draws.push_back(slots[b]);
      result.draw_ids.push_back(static_cast<int>(b));
    } else {
      ++result.discarded;
    }
  }

  const double failure_fraction =
      static_cast<double>(result.discarded) / static_cast<double>(total);
  if (failure_fraction > options.max_failure_fraction) {
    throw NumericError(
        "bootstrap instability: " + std::to_string(result.discarded) + " of " +
        std::to_string(total) + " draws failed to refit");
  }
  if (result.discarded > 0) {
    result.warnings.push_back("discarded " + std::to_string(result.discarded) +
                              " non-converged draw(s) of " +
                              std::to_string(total));
  }
  return result;
}

// Equal-tailed credible interval for one component of the decomposition.
inline std::pair<double, double> credible_interval(const PosteriorDraws& draws,
                                                   const std::string& component,
                                                   double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ConfigError("credible level must lie in (0, 1)");
  }
  if (draws.draws.empty()) throw DataError("no retained bootstrap draws");
  std::vector<double> values;
  values.reserve(draws.draws.size());
  for (const Decomposition& d : draws.draws) {
    values.push_back(detail::component_value(d, component));
  }
  std::sort(values.begin(), values.end());
  const double tail = 0.5 * (1.0 - level);
  return {quantile_type7(values, tail), quantile_type7(values, 1.0 - tail)};
}

}  // namespace medvar

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "medvar/bootstrap.hpp"
#include "medvar/dataset.hpp"
#include "medvar/errors.hpp"
#include "medvar/mediation.hpp"
#include "medvar/models.hpp"
#include "medvar/multinomial.hpp"
#include "medvar/parallel.hpp"
#include "medvar/rng.hpp"

namespace medvar {

// Synthetic-study design. Patients carry one standard-normal and one
// Bernoulli(1/2) covariate; hospital assignment follows a softmax over
// hospital-specific scores; a latent-logistic mediator is dichotomized at
// zero; the outcome is linear in hospital effect, mediator, and case mix,
// with logistic noise, optionally dichotomized at zero.
struct SimulationConfig {
  int n = 5000;
  int q = 10;
  std::uint64_t seed = 1;
  bool binary_outcome = false;
  double mediator_effect = 7.0;  // outcome coefficient of the mediator
  // Hospital effect pairs (alpha_z, beta_z) are bivariate normal with this
  // common variance and covariance.
  double hospital_variance = 4.0;
  double hospital_covariance = 0.0;
  // Softmax score scales (variances of the drawn parameters).
  double assignment_intercept_variance = 0.25;
  double assignment_slope_variance = 0.5;

  void validate() const {
    if (n < 2) throw ConfigError("simulation needs at least two patients");
    if (q < 2) throw ConfigError("simulation needs at least two hospitals");
    if (hospital_variance < 0.0) {
      throw ConfigError("hospital effect variance must be nonnegative");
    }
    if (std::fabs(hospital_covariance) > hospital_variance) {
      throw ConfigError(
          "hospital effect covariance exceeds the variance (not a valid "
          "covariance matrix)");
    }
    if (assignment_intercept_variance < 0.0 || assignment_slope_variance < 0.0) {
      throw ConfigError("assignment parameter variances must be nonnegative");
    }
  }
};

// Hospital-level parameters of one scenario. Drawn once per scenario seed
// and held fixed across replications, so replication noise reflects patient
// sampling only.
struct ScenarioParameters {
  Eigen::VectorXd alpha;  // mediator-model hospital effects
  Eigen::VectorXd beta;   // outcome-model hospital effects
  Eigen::VectorXd psi;    // assignment intercepts
  Eigen::MatrixXd phi;    // q x 2 assignment slopes
};

// Zero-padded labels ("h01".."h10") so lexicographic dataset order matches
// the generation order.
inline std::vector<std::string> hospital_labels(int q) {
  const std::size_t width = std::to_string(q).size();
  std::vector<std::string> labels(static_cast<std::size_t>(q));
  for (int z = 0; z < q; ++z) {
    std::string digits = std::to_string(z + 1);
    digits.insert(0, width - digits.size(), '0');
    labels[static_cast<std::size_t>(z)] = "h" + digits;
  }
  return labels;
}

inline ScenarioParameters draw_scenario_parameters(const SimulationConfig& config) {
  config.validate();
  CounterRng rng =
      CounterRng::stream(config.seed, rng_stream::kScenarioParameters);
  const int q = config.q;

  ScenarioParameters params;
  params.alpha.resize(q);
  params.beta.resize(q);
  params.psi.resize(q);
  params.phi.resize(q, 2);

  // Bivariate normal through the Cholesky factor of
  // [[v, c], [c, v]]: alpha = sqrt(v) z1, beta = (c/sqrt(v)) z1 + s z2.
  const double v = config.hospital_variance;
  const double c = config.hospital_covariance;
  const double a11 = std::sqrt(v);
  const double a21 = v > 0.0 ? c / a11 : 0.0;
  const double a22 = std::sqrt(std::max(0.0, v - a21 * a21));
  for (int z = 0; z < q; ++z) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    params.alpha(z) = a11 * z1;
    params.beta(z) = a21 * z1 + a22 * z2;
  }
  const double psi_sd = std::sqrt(config.assignment_intercept_variance);
  for (int z = 0; z < q; ++z) params.psi(z) = rng.normal(0.0, psi_sd);
  const double phi_sd = std::sqrt(config.assignment_slope_variance);
  for (int z = 0; z < q; ++z) {
    params.phi(z, 0) = rng.normal(0.0, phi_sd);
    params.phi(z, 1) = rng.normal(0.0, phi_sd);
  }
  return params;
}

// One replication's patient table. Draw order per patient is fixed (x1, x2,
// assignment, mediator noise, outcome noise), so any replication can be
// regenerated in isolation.
inline Dataset generate_dataset(const SimulationConfig& config,
                                const ScenarioParameters& params,
                                int replication) {
  config.validate();
  if (params.alpha.size() != config.q || params.beta.size() != config.q ||
      params.psi.size() != config.q || params.phi.rows() != config.q) {
    throw ConfigError("scenario parameters do not match the configuration");
  }
  CounterRng rng = CounterRng::stream(config.seed, rng_stream::kReplication,
                                      static_cast<std::uint64_t>(replication));
  const int q = config.q;
  const std::vector<std::string> labels = hospital_labels(q);

  std::vector<double> outcome(static_cast<std::size_t>(config.n));
  std::vector<double> mediator(static_cast<std::size_t>(config.n));
  std::vector<std::string> hospital(static_cast<std::size_t>(config.n));
  Eigen::MatrixXd covariates(config.n, 2);

  std::vector<double> weights(static_cast<std::size_t>(q));
  for (int i = 0; i < config.n; ++i) {
    const double x1 = rng.normal();
    const double x2 = rng.bernoulli(0.5) ? 1.0 : 0.0;

    double max_score = -std::numeric_limits<double>::infinity();
    for (int z = 0; z < q; ++z) {
      const double s = params.psi(z) + params.phi(z, 0) * x1 + params.phi(z, 1) * x2;
      weights[static_cast<std::size_t>(z)] = s;
      max_score = std::max(max_score, s);
    }
    for (int z = 0; z < q; ++z) {
      weights[static_cast<std::size_t>(z)] =
          std::exp(weights[static_cast<std::size_t>(z)] - max_score);
    }
    const int z = rng.categorical(weights);

    const double m_latent = params.alpha(z) + x1 + 1.5 * x2 + rng.logistic();
    const double m = m_latent >= 0.0 ? 1.0 : 0.0;
    const double y_latent =
        params.beta(z) + config.mediator_effect * m + x1 + 2.0 * x2 + rng.logistic();

    const std::size_t at = static_cast<std::size_t>(i);
    outcome[at] = config.binary_outcome ? (y_latent >= 0.0 ? 1.0 : 0.0) : y_latent;
    mediator[at] = m;
    hospital[at] = labels[static_cast<std::size_t>(z)];
    covariates(i, 0) = x1;
    covariates(i, 1) = x2;
  }

  return Dataset(std::move(outcome), std::move(mediator), hospital,
                 std::move(covariates), {"x1", "x2"}, true);
}

// The generator written as fitted-model objects: a logit mediator model, a
// linear or logit outcome model, and the softmax assignment. These are exact
// representations, not fits, so plugging them into the decomposition gives
// the scenario's truth for a given case-mix population.
inline OutcomeModel true_outcome_model(const SimulationConfig& config,
                                       const ScenarioParameters& params) {
  FittedGlm fit;
  fit.spec.family = config.binary_outcome ? Family::binomial : Family::gaussian;
  fit.spec.hospital_effects = EffectKind::fixed;
  fit.spec.covariates = {"x1", "x2"};
  fit.role = ResponseRole::outcome;
  fit.labels = hospital_labels(config.q);
  fit.coef.intercept = 0.0;
  fit.coef.hospital = params.beta;
  fit.coef.has_mediator = true;
  fit.coef.mediator = config.mediator_effect;
  fit.coef.covariates = Eigen::Vector2d(1.0, 2.0);
  fit.coef.covariate_index = {0, 1};
  // Latent logistic noise: variance pi^2 / 3.
  fit.sigma2 = M_PI * M_PI / 3.0;
  fit.converged = true;
  return OutcomeModel(std::move(fit));
}

inline MediatorModel true_mediator_model(const SimulationConfig& config,
                                         const ScenarioParameters& params) {
  FittedGlm fit;
  fit.spec.family = Family::binomial;
  fit.spec.hospital_effects = EffectKind::fixed;
  fit.spec.covariates = {"x1", "x2"};
  fit.role = ResponseRole::mediator;
  fit.labels = hospital_labels(config.q);
  fit.coef.intercept = 0.0;
  fit.coef.hospital = params.alpha;
  fit.coef.has_mediator = false;
  fit.coef.covariates = Eigen::Vector2d(1.0, 1.5);
  fit.coef.covariate_index = {0, 1};
  fit.converged = true;
  return MediatorModel(std::move(fit));
}

inline AssignmentModel true_assignment_model(const SimulationConfig& config,
                                             const ScenarioParameters& params) {
  AssignmentModel model;
  model.labels = hospital_labels(config.q);
  model.p = 2;
  // Softmax scores are shift-invariant; anchor the first hospital at zero to
  // match the model's parameterization exactly.
  model.psi = params.psi.array() - params.psi(0);
  model.phi = params.phi;
  for (int z = 0; z < config.q; ++z) {
    model.phi.row(z) -= params.phi.row(0);
  }
  model.slope_free.assign(static_cast<std::size_t>(config.q), 1);
  model.slope_free[0] = 0;
  model.converged = true;
  return model;
}

// Scenario truth by Monte Carlo over the case-mix distribution, with exact
// sums over hospitals and mediator values. Standard errors come from
// splitting the draws into batches.
struct OracleResult {
  Decomposition truth;
  // Per-component Monte Carlo standard errors (same field layout as truth;
  // not a decomposition, additivity does not apply).
  Decomposition se;
  long draws = 0;
  int batches = 0;
};

inline OracleResult oracle_truth(const SimulationConfig& config,
                                 const ScenarioParameters& params,
                                 long mc_draws, int batches = 100) {
  config.validate();
  if (mc_draws < batches || batches < 2) {
    throw ConfigError("oracle needs at least two batches and one draw per batch");
  }
  const long per_batch = mc_draws / batches;
  const long used = per_batch * batches;

  const OutcomeModel outcome = true_outcome_model(config, params);
  const MediatorModel mediator = true_mediator_model(config, params);
  const AssignmentModel assignment = true_assignment_model(config, params);
  const std::vector<std::string> labels = hospital_labels(config.q);

  CounterRng rng = CounterRng::stream(config.seed, rng_stream::kOracle);

  auto make_population = [&](long count) {
    std::vector<double> outcome_col(static_cast<std::size_t>(count), 0.0);
    std::vector<double> mediator_col(static_cast<std::size_t>(count), 0.0);
    std::vector<std::string> hospital_col(static_cast<std::size_t>(count));
    Eigen::MatrixXd covariates(count, 2);
    for (long i = 0; i < count; ++i) {
      covariates(i, 0) = rng.normal();
      covariates(i, 1) = rng.bernoulli(0.5) ? 1.0 : 0.0;
      // Hospital codes only carry the label set; the decomposition never
      // reads them.
      hospital_col[static_cast<std::size_t>(i)] =
          labels[static_cast<std::size_t>(i % config.q)];
    }
    return Dataset(std::move(outcome_col), std::move(mediator_col), hospital_col,
                   std::move(covariates), {"x1", "x2"}, true);
  };

  // Batch decompositions feed the standard errors; the pooled truth comes
  // from one pass over the full population (the case-mix component is
  // nonlinear in the batch, so the mean of batch values is not the pooled
  // value). Covariate draws depend only on the position in the stream, so
  // resetting the stream makes the full population the exact concatenation
  // of the batches.
  std::vector<Decomposition> batch_values;
  batch_values.reserve(static_cast<std::size_t>(batches));
  for (int b = 0; b < batches; ++b) {
    const Dataset batch = make_population(per_batch);
    const AssignmentMechanism batch_mechanism =
        AssignmentMechanism::observed(batch, assignment);
    batch_values.push_back(decompose(batch, outcome, mediator, batch_mechanism));
  }

  rng = CounterRng::stream(config.seed, rng_stream::kOracle);
  const Dataset population = make_population(used);
  const AssignmentMechanism mechanism =
      AssignmentMechanism::observed(population, assignment);

  OracleResult result;
  result.truth = decompose(population, outcome, mediator, mechanism);
  result.draws = used;
  result.batches = batches;

  auto batch_se = [&](auto member) {
    double mean = 0.0;
    for (const Decomposition& d : batch_values) mean += d.*member;
    mean /= static_cast<double>(batches);
    double ss = 0.0;
    for (const Decomposition& d : batch_values) {
      const double delta = d.*member - mean;
      ss += delta * delta;
    }
    const double var = ss / static_cast<double>(batches - 1);
    return std::sqrt(var / static_cast<double>(batches));
  };
  result.se.total_variance = batch_se(&Decomposition::total_variance);
  result.se.casemix = batch_se(&Decomposition::casemix);
  result.se.omega0 = batch_se(&Decomposition::omega0);
  result.se.residual = batch_se(&Decomposition::residual);
  result.se.omega1 = batch_se(&Decomposition::omega1);
  result.se.omega2 = batch_se(&Decomposition::omega2);
  result.se.omega3 = batch_se(&Decomposition::omega3);
  return result;
}

// Estimator configuration for the replication study.
struct EstimatorSettings {
  EffectKind outcome_effects = EffectKind::fixed;
  EffectKind mediator_effects = EffectKind::fixed;
  int small_hospital_threshold = 40;
  int glmm_nodes = 15;
  int gh_nodes = 30;
};

struct ReplicationResult {
  int replication = 0;
  bool ok = false;
  std::string error;
  Decomposition estimate;
};

struct ComponentStats {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;  // sd / sqrt(replications used)
  double q025 = 0.0;
  double q975 = 0.0;
};

struct ScenarioSummary {
  SimulationConfig config;
  EstimatorSettings settings;
  int replications = 0;
  std::size_t failures = 0;
  std::vector<ReplicationResult> detail;
  // Order: total, casemix, omega0, residual, omega1, omega2, omega3.
  std::array<ComponentStats, 7> stats;
};

inline const std::array<const char*, 7>& component_names() {
  static const std::array<const char*, 7> names = {
      "total_variance", "casemix", "omega0", "residual", "omega1", "omega2", "omega3"};
  return names;
}

// Generate, fit, decompose, repeat. Failed replications (non-convergence or
// degenerate data) are recorded, not fatal; systematic configuration errors
// still throw.
inline ScenarioSummary run_scenario(const SimulationConfig& config,
                                    int replications,
                                    const EstimatorSettings& settings,
                                    int threads = 1) {
  config.validate();
  if (replications < 1) throw ConfigError("scenario needs at least one replication");
  const ScenarioParameters params = draw_scenario_parameters(config);

  ScenarioSummary summary;
  summary.config = config;
  summary.settings = settings;
  summary.replications = replications;
  summary.detail.resize(static_cast<std::size_t>(replications));

  ModelSpec outcome_spec;
  outcome_spec.family =
      config.binary_outcome ? Family::binomial : Family::gaussian;
  outcome_spec.hospital_effects = settings.outcome_effects;
  outcome_spec.covariates = {"x1", "x2"};

  ModelSpec mediator_spec;
  mediator_spec.family = Family::binomial;
  mediator_spec.hospital_effects = settings.mediator_effects;
  mediator_spec.covariates = {"x1", "x2"};

  FitOptions fit_options;
  fit_options.glmm.quadrature_nodes = settings.glmm_nodes;

  parallel_for(static_cast<std::size_t>(replications), threads, [&](std::size_t r) {
    ReplicationResult& slot = summary.detail[r];
    slot.replication = static_cast<int>(r);
    try {
      const Dataset data = generate_dataset(config, params, static_cast<int>(r));
      const OutcomeModel outcome = fit_outcome_model(data, outcome_spec, fit_options);
      const MediatorModel mediator =
          fit_mediator_model(data, mediator_spec, fit_options);
      const AssignmentModel assignment =
          fit_assignment(data, settings.small_hospital_threshold);
      const AssignmentMechanism mechanism =
          AssignmentMechanism::observed(data, assignment);
      slot.estimate = decompose(data, outcome, mediator, mechanism,
                                {.gh_nodes = settings.gh_nodes});
      slot.ok = true;
    } catch (const NumericError& e) {
      slot.error = e.what();
    } catch (const DataError& e) {
      slot.error = e.what();
    }
  });

  std::vector<double> values;
  auto fill_stats = [&](auto member, ComponentStats& stats) {
    values.clear();
    for (const ReplicationResult& r : summary.detail) {
      if (r.ok) values.push_back(r.estimate.*member);
    }
    if (values.empty()) return;
    const double count = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= count;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    stats.mean = mean;
    stats.sd = values.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    stats.se = stats.sd / std::sqrt(count);
    std::sort(values.begin(), values.end());
    stats.q025 = quantile_type7(values, 0.025);
    stats.q975 = quantile_type7(values, 0.975);
  };

  fill_stats(&Decomposition::total_variance, summary.stats[0]);
  fill_stats(&Decomposition::casemix, summary.stats[1]);
  fill_stats(&Decomposition::omega0, summary.stats[2]);
  fill_stats(&Decomposition::residual, summary.stats[3]);
  fill_stats(&Decomposition::omega1, summary.stats[4]);
  fill_stats(&Decomposition::omega2, summary.stats[5]);
  fill_stats(&Decomposition::omega3, summary.stats[6]);

  for (const ReplicationResult& r : summary.detail) {
    if (!r.ok) ++summary.failures;
  }
  return summary;
}

}  // namespace medvar

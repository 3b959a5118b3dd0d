#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "medvar/dataset.hpp"
#include "medvar/errors.hpp"
#include "medvar/mechanism.hpp"
#include "medvar/model_spec.hpp"
#include "medvar/models.hpp"
#include "medvar/quadrature.hpp"

namespace medvar {

struct DecomposeOptions {
  // Gauss-Hermite nodes for integrating a continuous mediator out of the
  // outcome mean. Identity-link outcomes are linear in the mediator, where
  // any node count is exact; logit links need the full rule.
  int gh_nodes = 30;
};

namespace detail {

inline void check_alignment(const Dataset& data, const OutcomeModel& outcome,
                            const MediatorModel& mediator,
                            const AssignmentMechanism& mechanism) {
  if (outcome.labels() != data.labels() || mediator.labels() != data.labels()) {
    throw DataError("models were fitted against different hospital labels");
  }
  if (mediator.binary() != data.mediator_binary()) {
    throw DataError("mediator model type does not match the dataset mediator");
  }
  mechanism.check_against(data);
}

// Per-patient working state for the decomposition sums: standardized means
// under (delivery z, mediator source z*), their diagonal v, mechanism-mixed
// w, and fully mixed t.
struct PatientGrid {
  Eigen::VectorXd v;       // v(z)   = P(z, z)
  Eigen::VectorXd w;       // w(z)   = sum_z* e~(z*) P(z, z*)
  double t = 0.0;          // t      = sum_z  e~(z)  v(z)
  Eigen::VectorXd var_mu;  // Var_M[mu(z, M, x)] given z, for gaussian outcomes
};

// Fills the grid for one patient. Binary mediators have closed forms in
// eta1; continuous mediators integrate over M | z* by quadrature.
template <class XRow, class EWRow>
void patient_grid(const OutcomeModel& outcome, const MediatorModel& mediator,
                  const XRow& x, const EWRow& ew, int gh_nodes,
                  PatientGrid& grid) {
  const GlmCoefficients& oc = outcome.coefficients();
  const GlmCoefficients& mc = mediator.coefficients();
  const bool logit = outcome.family() == Family::binomial;
  const int q = static_cast<int>(oc.hospital.size());

  grid.v.resize(q);
  grid.w.resize(q);
  grid.var_mu.resize(q);

  if (mediator.binary()) {
    Eigen::VectorXd eta1(q);
    double ebar = 0.0;
    for (int z = 0; z < q; ++z) {
      eta1(z) = expit(mc.linear_predictor(z, 0.0, x));
      ebar += ew(z) * eta1(z);
    }
    for (int z = 0; z < q; ++z) {
      const double lp0 = oc.linear_predictor(z, 0.0, x);
      const double lp1 = oc.linear_predictor(z, 1.0, x);
      const double mu0 = logit ? expit(lp0) : lp0;
      const double mu1 = logit ? expit(lp1) : lp1;
      const double gap = mu1 - mu0;
      // P(z, z*) = mu0 + gap * eta1(z*) for any outcome link, because the
      // mediator average is a two-point mixture.
      grid.v(z) = mu0 + gap * eta1(z);
      grid.w(z) = mu0 + gap * ebar;
      grid.var_mu(z) = eta1(z) * (1.0 - eta1(z)) * gap * gap;
    }
  } else {
    const GaussHermite& rule = gauss_hermite(gh_nodes);
    const double sd = mediator.sd();
    const double scale = std::sqrt(2.0) * sd;
    const double norm = 1.0 / std::sqrt(M_PI);
    Eigen::VectorXd mean_m(q);
    for (int z = 0; z < q; ++z) mean_m(z) = mc.linear_predictor(z, 0.0, x);

    for (int z = 0; z < q; ++z) {
      double w_mix = 0.0;
      double diag = 0.0;
      double diag_sq = 0.0;
      for (int zs = 0; zs < q; ++zs) {
        double mean_mu = 0.0;
        double mean_mu2 = 0.0;
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
          const double m = mean_m(zs) + scale * rule.nodes[k];
          const double lp = oc.linear_predictor(z, m, x);
          const double mu = logit ? expit(lp) : lp;
          mean_mu += rule.weights[k] * mu;
          if (zs == z) mean_mu2 += rule.weights[k] * mu * mu;
        }
        mean_mu *= norm;
        if (zs == z) {
          diag = mean_mu;
          diag_sq = mean_mu2 * norm;
        }
        w_mix += ew(zs) * mean_mu;
      }
      grid.v(z) = diag;
      grid.w(z) = w_mix;
      grid.var_mu(z) = std::max(0.0, diag_sq - diag * diag);
    }
  }

  grid.t = 0.0;
  for (int z = 0; z < q; ++z) grid.t += ew(z) * grid.v(z);
}

}  // namespace detail

// Standardized mean outcome had patient x been delivered at hospital z while
// the mediator arose as at hospital z_star.
template <class XRow>
double potential_outcome(const OutcomeModel& outcome,
                         const MediatorModel& mediator, int z, int z_star,
                         const XRow& x, int gh_nodes = 30) {
  const GlmCoefficients& oc = outcome.coefficients();
  const GlmCoefficients& mc = mediator.coefficients();
  const bool logit = outcome.family() == Family::binomial;
  if (mediator.binary()) {
    const double eta1 = expit(mc.linear_predictor(z_star, 0.0, x));
    const double lp0 = oc.linear_predictor(z, 0.0, x);
    const double lp1 = oc.linear_predictor(z, 1.0, x);
    const double mu0 = logit ? expit(lp0) : lp0;
    const double mu1 = logit ? expit(lp1) : lp1;
    return mu0 + (mu1 - mu0) * eta1;
  }
  const double mean_m = mc.linear_predictor(z_star, 0.0, x);
  return gauss_hermite_mean(gh_nodes, mean_m, mediator.sd(), [&](double m) {
    const double lp = oc.linear_predictor(z, m, x);
    return logit ? expit(lp) : lp;
  });
}

// Continuous-mediator version with the integral spelled out; rejects binary
// mediator models so callers cannot silently mix the two conventions.
template <class XRow>
double potential_outcome_continuous(const OutcomeModel& outcome,
                                    const MediatorModel& mediator, int z,
                                    int z_star, const XRow& x,
                                    int gh_nodes = 30) {
  if (mediator.binary()) {
    throw ConfigError("potential_outcome_continuous requires a continuous mediator model");
  }
  return potential_outcome(outcome, mediator, z, z_star, x, gh_nodes);
}

// One patient's full grid of standardized means, rows indexed by delivery
// hospital z and columns by mediator source z*.
struct PotentialOutcomeGrid {
  std::size_t patient = 0;
  std::vector<std::string> labels;
  Eigen::MatrixXd values;
};

inline PotentialOutcomeGrid potential_outcome_grid(
    const Dataset& data, const OutcomeModel& outcome,
    const MediatorModel& mediator, std::size_t patient, int gh_nodes = 30) {
  if (patient >= data.n()) throw DataError("patient index out of range");
  const int q = data.q();
  PotentialOutcomeGrid grid;
  grid.patient = patient;
  grid.labels = data.labels();
  grid.values.resize(q, q);
  const auto x = data.covariate_row(patient);
  for (int z = 0; z < q; ++z) {
    for (int zs = 0; zs < q; ++zs) {
      grid.values(z, zs) = potential_outcome(outcome, mediator, z, zs, x, gh_nodes);
    }
  }
  return grid;
}

// Plug-in decomposition of the outcome variance. The between-hospital
// component omega0 splits into a mediated part (omega1), a direct part
// (omega2), and their covariance (omega3, by subtraction); case-mix and
// residual components complete the total.
inline Decomposition decompose(const Dataset& data, const OutcomeModel& outcome,
                               const MediatorModel& mediator,
                               const AssignmentMechanism& mechanism,
                               const DecomposeOptions& options = {}) {
  detail::check_alignment(data, outcome, mediator, mechanism);
  const std::size_t n = data.n();
  const int q = data.q();
  const Eigen::MatrixXd& ew = mechanism.weights();
  const bool logit_outcome = outcome.family() == Family::binomial;
  const double sigma2_y = logit_outcome ? 0.0 : outcome.sigma2();

  double sum0 = 0.0, sum1 = 0.0, sum2 = 0.0;
  double sum_resid = 0.0, sum_t = 0.0, sum_t2 = 0.0;

  detail::PatientGrid grid;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.covariate_row(i);
    const auto w = ew.row(static_cast<Eigen::Index>(i));
    detail::patient_grid(outcome, mediator, x, w, options.gh_nodes, grid);

    for (int z = 0; z < q; ++z) {
      const double d_total = grid.v(z) - grid.t;
      const double d_nie = grid.v(z) - grid.w(z);
      const double d_nde = grid.w(z) - grid.t;
      sum0 += w(z) * d_total * d_total;
      sum1 += w(z) * d_nie * d_nie;
      sum2 += w(z) * d_nde * d_nde;
      const double var_y = logit_outcome
                               ? grid.v(z) * (1.0 - grid.v(z))
                               : sigma2_y + grid.var_mu(z);
      sum_resid += w(z) * var_y;
    }
    sum_t += grid.t;
    sum_t2 += grid.t * grid.t;
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  Decomposition d;
  d.omega0 = sum0 * inv_n;
  d.omega1 = sum1 * inv_n;
  d.omega2 = sum2 * inv_n;
  d.omega3 = d.omega0 - d.omega1 - d.omega2;
  d.residual = sum_resid * inv_n;
  const double t_mean = sum_t * inv_n;
  d.casemix = std::max(0.0, sum_t2 * inv_n - t_mean * t_mean);
  d.total_variance = d.casemix + d.omega0 + d.residual;
  return d;
}

// Two-hospital closed form. With pi the weight of the second hospital and
// P the 2x2 grid, each component reduces to a weighted square or cross
// product of grid contrasts; agreement with the general path is exact.
inline Decomposition decompose_two_hospital_closed_form(
    const Dataset& data, const OutcomeModel& outcome,
    const MediatorModel& mediator, const AssignmentMechanism& mechanism,
    const DecomposeOptions& options = {}) {
  detail::check_alignment(data, outcome, mediator, mechanism);
  if (data.q() != 2) {
    throw ConfigError("closed form requires exactly two hospitals, dataset has " +
                      std::to_string(data.q()));
  }
  const std::size_t n = data.n();
  const Eigen::MatrixXd& ew = mechanism.weights();
  const bool logit_outcome = outcome.family() == Family::binomial;
  const double sigma2_y = logit_outcome ? 0.0 : outcome.sigma2();

  double sum0 = 0.0, sum1 = 0.0, sum2 = 0.0;
  double sum_resid = 0.0, sum_t = 0.0, sum_t2 = 0.0;

  detail::PatientGrid grid;  // reused only for var_mu bookkeeping
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.covariate_row(i);
    const double pi = ew(static_cast<Eigen::Index>(i), 1);
    const double om = 1.0 - pi;

    double p00, p01, p10, p11;
    p00 = potential_outcome(outcome, mediator, 0, 0, x, options.gh_nodes);
    p01 = potential_outcome(outcome, mediator, 0, 1, x, options.gh_nodes);
    p10 = potential_outcome(outcome, mediator, 1, 0, x, options.gh_nodes);
    p11 = potential_outcome(outcome, mediator, 1, 1, x, options.gh_nodes);

    const double nie = pi * om *
                       (om * (p11 - p10) * (p11 - p10) +
                        pi * (p00 - p01) * (p00 - p01));
    const double nde = pi * om *
                       (om * (p10 - p00) * (p10 - p00) +
                        pi * (p01 - p11) * (p01 - p11));
    const double cov = 2.0 * pi * om *
                       (om * (p11 - p10) * (p10 - p00) +
                        pi * (p00 - p01) * (p01 - p11));
    sum1 += nie;
    sum2 += nde;
    sum0 += nie + nde + cov;

    const double t = om * p00 + pi * p11;
    sum_t += t;
    sum_t2 += t * t;

    const auto w = ew.row(static_cast<Eigen::Index>(i));
    detail::patient_grid(outcome, mediator, x, w, options.gh_nodes, grid);
    for (int z = 0; z < 2; ++z) {
      const double var_y = logit_outcome
                               ? grid.v(z) * (1.0 - grid.v(z))
                               : sigma2_y + grid.var_mu(z);
      sum_resid += w(z) * var_y;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  Decomposition d;
  d.omega0 = sum0 * inv_n;
  d.omega1 = sum1 * inv_n;
  d.omega2 = sum2 * inv_n;
  d.omega3 = d.omega0 - d.omega1 - d.omega2;
  d.residual = sum_resid * inv_n;
  const double t_mean = sum_t * inv_n;
  d.casemix = std::max(0.0, sum_t2 * inv_n - t_mean * t_mean);
  d.total_variance = d.casemix + d.omega0 + d.residual;
  return d;
}

// Two-hospital linear structural model with half/half assignment. With
// direct effect beta2, mediator path beta3 (hospital -> mediator) and beta4
// (mediator -> outcome), the components have closed forms:
//   omega0 = (beta2 + beta3*beta4)^2 / 4
//   omega1 = (beta3*beta4)^2 / 4
//   omega2 = beta2^2 / 4
//   omega3 = beta2*beta3*beta4 / 2.
inline std::array<double, 4> decompose_linear_special_case(double beta2,
                                                           double beta3,
                                                           double beta4) {
  const double mediated = beta3 * beta4;
  return {0.25 * (beta2 + mediated) * (beta2 + mediated),
          0.25 * mediated * mediated, 0.25 * beta2 * beta2,
          0.5 * beta2 * mediated};
}

// Assignment-weighted per-hospital contrasts: how much hospital z's
// standardized mean deviates from the mechanism average, split into the
// mediated channel (nie) and the direct channel (nde). The mass-weighted sum
// of nie + nde is exactly zero by construction.
inline HospitalEffects hospital_effects(const Dataset& data,
                                        const OutcomeModel& outcome,
                                        const MediatorModel& mediator,
                                        const AssignmentMechanism& mechanism,
                                        const DecomposeOptions& options = {}) {
  detail::check_alignment(data, outcome, mediator, mechanism);
  const std::size_t n = data.n();
  const int q = data.q();
  const Eigen::MatrixXd& ew = mechanism.weights();

  HospitalEffects effects;
  effects.labels = data.labels();
  effects.nie.assign(static_cast<std::size_t>(q), 0.0);
  effects.nde.assign(static_cast<std::size_t>(q), 0.0);
  effects.mass.assign(static_cast<std::size_t>(q), 0.0);

  detail::PatientGrid grid;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.covariate_row(i);
    const auto w = ew.row(static_cast<Eigen::Index>(i));
    detail::patient_grid(outcome, mediator, x, w, options.gh_nodes, grid);
    for (int z = 0; z < q; ++z) {
      const std::size_t zz = static_cast<std::size_t>(z);
      effects.nie[zz] += w(z) * (grid.v(z) - grid.w(z));
      effects.nde[zz] += w(z) * (grid.w(z) - grid.t);
      effects.mass[zz] += w(z);
    }
  }
  for (int z = 0; z < q; ++z) {
    const std::size_t zz = static_cast<std::size_t>(z);
    if (effects.mass[zz] > 0.0) {
      effects.nie[zz] /= effects.mass[zz];
      effects.nde[zz] /= effects.mass[zz];
    }
    effects.mass[zz] /= static_cast<double>(n);
  }
  return effects;
}

// Streams every patient's grid as csv rows (patient, z, z*, value).
inline void write_grid_csv(const std::string& path, const Dataset& data,
                           const OutcomeModel& outcome,
                           const MediatorModel& mediator, int gh_nodes = 30) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write grid file: " + path);
  out << "patient,hospital,mediator_source,value\n";
  char buffer[64];
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto x = data.covariate_row(i);
    for (int z = 0; z < data.q(); ++z) {
      for (int zs = 0; zs < data.q(); ++zs) {
        const double value =
            potential_outcome(outcome, mediator, z, zs, x, gh_nodes);
        std::snprintf(buffer, sizeof buffer, "%.17g", value);
        out << (i + 1) << ',' << csv_escape(data.label(z)) << ','
            << csv_escape(data.label(zs)) << ',' << buffer << '\n';
      }
    }
  }
  if (!out) throw DataError("failed writing grid file: " + path);
}

}  // namespace medvar

#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "medvar/dataset.hpp"
#include "medvar/errors.hpp"
#include "medvar/glm.hpp"
#include "medvar/glmm.hpp"
#include "medvar/rng.hpp"

namespace medvar {

struct FitOptions {
  GlmOptions glm;
  GlmmOptions glmm;
};

// Fitted outcome regression, fixed or random hospital effects behind one
// interface. Both representations expose GlmCoefficients whose hospital slot
// already carries the per-hospital effect (dummy coefficient or conditional
// mode), so evaluation code never branches on the effect kind.
class OutcomeModel {
 public:
  explicit OutcomeModel(FittedGlm fit) : fit_(std::move(fit)) { check_role(); }
  explicit OutcomeModel(FittedGlmm fit) : fit_(std::move(fit)) { check_role(); }

  bool is_random() const { return std::holds_alternative<FittedGlmm>(fit_); }
  Family family() const { return spec().family; }
  const ModelSpec& spec() const {
    return is_random() ? std::get<FittedGlmm>(fit_).spec
                       : std::get<FittedGlm>(fit_).spec;
  }
  const std::vector<std::string>& labels() const {
    return is_random() ? std::get<FittedGlmm>(fit_).labels
                       : std::get<FittedGlm>(fit_).labels;
  }
  const GlmCoefficients& coefficients() const {
    return is_random() ? std::get<FittedGlmm>(fit_).coef
                       : std::get<FittedGlm>(fit_).coef;
  }
  // Gaussian residual variance (ML); zero for binomial models.
  double sigma2() const {
    return is_random() ? std::get<FittedGlmm>(fit_).sigma2
                       : std::get<FittedGlm>(fit_).sigma2;
  }
  double tau2() const {
    return is_random() ? std::get<FittedGlmm>(fit_).tau2 : 0.0;
  }
  bool converged() const {
    return is_random() ? std::get<FittedGlmm>(fit_).converged
                       : std::get<FittedGlm>(fit_).converged;
  }
  const FittedGlm* glm() const { return std::get_if<FittedGlm>(&fit_); }
  const FittedGlmm* glmm() const { return std::get_if<FittedGlmm>(&fit_); }

  template <class XRow>
  double mu(int z, double m, const XRow& x) const {
    const double lp = coefficients().linear_predictor(z, m, x);
    return family() == Family::binomial ? expit(lp) : lp;
  }

  // Parametric resampling of the outcome column given the observed design.
  // For random-effect fits, redraw_effects replaces the fitted conditional
  // modes with fresh N(0, tau2) hospital effects (one per hospital, drawn in
  // label order before any row-level noise).
  std::vector<double> simulate(const Dataset& data, CounterRng& rng,
                               bool redraw_effects) const {
    const GlmCoefficients& coef = coefficients();
    Eigen::VectorXd effects = coef.hospital;
    if (is_random() && redraw_effects) {
      const double tau = std::sqrt(tau2());
      for (Eigen::Index z = 0; z < effects.size(); ++z) {
        effects(z) = rng.normal(0.0, tau);
      }
    }
    const double sd = family() == Family::gaussian ? std::sqrt(sigma2()) : 0.0;
    std::vector<double> out(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
      const int z = data.hospital(i);
      double lp = coef.linear_predictor(z, data.mediator(i), data.covariate_row(i));
      lp += effects(z) - coef.hospital(z);
      if (family() == Family::binomial) {
        out[i] = rng.bernoulli(expit(lp)) ? 1.0 : 0.0;
      } else {
        out[i] = lp + rng.normal(0.0, sd);
      }
    }
    return out;
  }

 private:
  void check_role() {
    const ResponseRole role = is_random() ? std::get<FittedGlmm>(fit_).role
                                          : std::get<FittedGlm>(fit_).role;
    if (role != ResponseRole::outcome) {
      throw ConfigError("OutcomeModel requires a fit with the outcome role");
    }
  }
  std::variant<FittedGlm, FittedGlmm> fit_;
};

// Fitted mediator regression. Binary mediators use a binomial model and are
// queried through prob1; continuous mediators use a gaussian model queried
// through mean and sd.
class MediatorModel {
 public:
  explicit MediatorModel(FittedGlm fit) : fit_(std::move(fit)) { check_role(); }
  explicit MediatorModel(FittedGlmm fit) : fit_(std::move(fit)) { check_role(); }

  bool is_random() const { return std::holds_alternative<FittedGlmm>(fit_); }
  bool binary() const { return spec().family == Family::binomial; }
  const ModelSpec& spec() const {
    return is_random() ? std::get<FittedGlmm>(fit_).spec
                       : std::get<FittedGlm>(fit_).spec;
  }
  const std::vector<std::string>& labels() const {
    return is_random() ? std::get<FittedGlmm>(fit_).labels
                       : std::get<FittedGlm>(fit_).labels;
  }
  const GlmCoefficients& coefficients() const {
    return is_random() ? std::get<FittedGlmm>(fit_).coef
                       : std::get<FittedGlm>(fit_).coef;
  }
  double sigma2() const {
    return is_random() ? std::get<FittedGlmm>(fit_).sigma2
                       : std::get<FittedGlm>(fit_).sigma2;
  }
  double sd() const { return std::sqrt(sigma2()); }
  double tau2() const {
    return is_random() ? std::get<FittedGlmm>(fit_).tau2 : 0.0;
  }
  bool converged() const {
    return is_random() ? std::get<FittedGlmm>(fit_).converged
                       : std::get<FittedGlm>(fit_).converged;
  }
  const FittedGlm* glm() const { return std::get_if<FittedGlm>(&fit_); }
  const FittedGlmm* glmm() const { return std::get_if<FittedGlmm>(&fit_); }

  template <class XRow>
  double prob1(int z, const XRow& x) const {
    if (!binary()) throw ConfigError("prob1 requires a binary mediator model");
    return expit(coefficients().linear_predictor(z, 0.0, x));
  }

  template <class XRow>
  double mean(int z, const XRow& x) const {
    if (binary()) throw ConfigError("mean requires a continuous mediator model");
    return coefficients().linear_predictor(z, 0.0, x);
  }

  std::vector<double> simulate(const Dataset& data, CounterRng& rng,
                               bool redraw_effects) const {
    const GlmCoefficients& coef = coefficients();
    Eigen::VectorXd effects = coef.hospital;
    if (is_random() && redraw_effects) {
      const double tau = std::sqrt(tau2());
      for (Eigen::Index z = 0; z < effects.size(); ++z) {
        effects(z) = rng.normal(0.0, tau);
      }
    }
    const double noise_sd = binary() ? 0.0 : sd();
    std::vector<double> out(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
      const int z = data.hospital(i);
      double lp = coef.linear_predictor(z, 0.0, data.covariate_row(i));
      lp += effects(z) - coef.hospital(z);
      if (binary()) {
        out[i] = rng.bernoulli(expit(lp)) ? 1.0 : 0.0;
      } else {
        out[i] = lp + rng.normal(0.0, noise_sd);
      }
    }
    return out;
  }

 private:
  void check_role() {
    const ResponseRole role = is_random() ? std::get<FittedGlmm>(fit_).role
                                          : std::get<FittedGlm>(fit_).role;
    if (role != ResponseRole::mediator) {
      throw ConfigError("MediatorModel requires a fit with the mediator role");
    }
  }
  std::variant<FittedGlm, FittedGlmm> fit_;
};

inline OutcomeModel fit_outcome_model(const Dataset& data, const ModelSpec& spec,
                                      const FitOptions& options = {}) {
  if (spec.hospital_effects == EffectKind::random_intercept) {
    return OutcomeModel(
        fit_glmm(data, spec, ResponseRole::outcome, options.glmm));
  }
  return OutcomeModel(fit_glm(data, spec, ResponseRole::outcome, options.glm));
}

inline MediatorModel fit_mediator_model(const Dataset& data,
                                        const ModelSpec& spec,
                                        const FitOptions& options = {}) {
  if (spec.hospital_mediator_interaction) {
    throw ConfigError("hospital-mediator interaction applies to the outcome model only");
  }
  if (spec.family == Family::binomial && !data.mediator_binary()) {
    throw ConfigError("binomial mediator model requires a binary mediator");
  }
  if (spec.family == Family::gaussian && data.mediator_binary()) {
    throw ConfigError("gaussian mediator model requires a continuous mediator");
  }
  if (spec.hospital_effects == EffectKind::random_intercept) {
    return MediatorModel(
        fit_glmm(data, spec, ResponseRole::mediator, options.glmm));
  }
  return MediatorModel(fit_glm(data, spec, ResponseRole::mediator, options.glm));
}

}  // namespace medvar

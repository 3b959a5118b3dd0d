#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "medvar/dataset.hpp"
#include "medvar/errors.hpp"
#include "medvar/model_spec.hpp"

namespace medvar {

enum class ResponseRole { outcome, mediator };

// Structured view of a fitted linear predictor. Hospital terms are stored as
// a full q-vector with the reference level pinned at zero, so evaluation
// never needs to know which dummy columns existed.
struct GlmCoefficients {
  double intercept = 0.0;
  Eigen::VectorXd hospital;       // size q; [0] == 0 for fixed-effect fits
  bool has_mediator = false;
  double mediator = 0.0;
  Eigen::VectorXd interaction;    // size q when present, else size 0; [0] == 0
  Eigen::VectorXd covariates;     // model-term order
  std::vector<int> covariate_index;  // dataset column for each term

  bool has_interaction() const { return interaction.size() > 0; }

  // x is the full dataset covariate row; the spec's covariate subset is
  // applied through covariate_index.
  template <class XRow>
  double linear_predictor(int z, double m, const XRow& x) const {
    double lp = intercept + hospital(z);
    if (has_mediator) lp += mediator * m;
    if (has_interaction()) lp += interaction(z) * m;
    for (std::size_t j = 0; j < covariate_index.size(); ++j) {
      lp += covariates(static_cast<Eigen::Index>(j)) * x(covariate_index[j]);
    }
    return lp;
  }
};

// Dense design for one regression. Column layout:
//   intercept | hospital dummies (levels 2..q) | mediator (outcome role)
//   | covariates | mediator:hospital dummies (levels 2..q).
struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> names;
  int q = 0;
  bool hospital_dummies = false;
  bool has_mediator = false;
  bool has_interaction = false;
  std::vector<int> covariate_index;

  Eigen::Index coefficient_count() const {
    return 1 + (hospital_dummies ? q - 1 : 0) + (has_mediator ? 1 : 0) +
           static_cast<Eigen::Index>(covariate_index.size()) +
           (has_interaction ? q - 1 : 0);
  }

  GlmCoefficients unpack(const Eigen::VectorXd& beta) const {
    if (beta.size() != coefficient_count()) {
      throw NumericError("design unpack size mismatch");
    }
    GlmCoefficients coef;
    Eigen::Index at = 0;
    coef.intercept = beta(at++);
    coef.hospital = Eigen::VectorXd::Zero(q);
    if (hospital_dummies) {
      for (int z = 1; z < q; ++z) coef.hospital(z) = beta(at++);
    }
    coef.has_mediator = has_mediator;
    if (has_mediator) coef.mediator = beta(at++);
    coef.covariates.resize(static_cast<Eigen::Index>(covariate_index.size()));
    for (std::size_t j = 0; j < covariate_index.size(); ++j) {
      coef.covariates(static_cast<Eigen::Index>(j)) = beta(at++);
    }
    coef.covariate_index = covariate_index;
    if (has_interaction) {
      coef.interaction = Eigen::VectorXd::Zero(q);
      for (int z = 1; z < q; ++z) coef.interaction(z) = beta(at++);
    }
    return coef;
  }
};

inline Design build_design(const Dataset& data, const ModelSpec& spec,
                           ResponseRole role, bool hospital_dummies = true) {
  if (spec.hospital_mediator_interaction && role != ResponseRole::outcome) {
    throw ConfigError("hospital-mediator interaction applies to the outcome model only");
  }
  if (spec.hospital_mediator_interaction && !hospital_dummies) {
    throw ConfigError("hospital-mediator interaction requires fixed hospital effects");
  }

  Design design;
  design.q = data.q();
  design.hospital_dummies = hospital_dummies;
  design.has_mediator = role == ResponseRole::outcome;
  design.has_interaction = spec.hospital_mediator_interaction;
  for (const std::string& name : spec.covariates) {
    design.covariate_index.push_back(data.covariate_index(name));
  }

  const int q = design.q;
  const Eigen::Index n = static_cast<Eigen::Index>(data.n());
  const Eigen::Index k = design.coefficient_count();
  design.X = Eigen::MatrixXd::Zero(n, k);
  design.y.resize(n);
  design.names.reserve(static_cast<std::size_t>(k));

  Eigen::Index col = 0;
  const Eigen::Index intercept_col = col++;
  design.names.push_back("(intercept)");
  const Eigen::Index hosp_col = col;
  if (hospital_dummies) {
    for (int z = 1; z < q; ++z) {
      design.names.push_back("hospital[" + data.label(z) + "]");
    }
    col += q - 1;
  }
  const Eigen::Index med_col = col;
  if (design.has_mediator) {
    design.names.push_back("mediator");
    ++col;
  }
  const Eigen::Index cov_col = col;
  for (std::size_t j = 0; j < design.covariate_index.size(); ++j) {
    design.names.push_back(spec.covariates[j]);
    ++col;
  }
  const Eigen::Index inter_col = col;
  if (design.has_interaction) {
    for (int z = 1; z < q; ++z) {
      design.names.push_back("mediator:hospital[" + data.label(z) + "]");
    }
    col += q - 1;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t row = static_cast<std::size_t>(i);
    design.X(i, intercept_col) = 1.0;
    const int z = data.hospital(row);
    if (hospital_dummies && z > 0) design.X(i, hosp_col + z - 1) = 1.0;
    if (design.has_mediator) design.X(i, med_col) = data.mediator(row);
    for (std::size_t j = 0; j < design.covariate_index.size(); ++j) {
      design.X(i, cov_col + static_cast<Eigen::Index>(j)) =
          data.covariate_row(row)(design.covariate_index[j]);
    }
    if (design.has_interaction && z > 0) {
      design.X(i, inter_col + z - 1) = data.mediator(row);
    }
    design.y(i) = role == ResponseRole::outcome ? data.outcome(row)
                                                : data.mediator(row);
  }
  return design;
}

}  // namespace medvar

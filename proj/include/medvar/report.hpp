#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "medvar/bootstrap.hpp"
#include "medvar/errors.hpp"
#include "medvar/model_spec.hpp"
#include "medvar/models.hpp"
#include "medvar/multinomial.hpp"
#include "medvar/version.hpp"

namespace medvar {

using ordered_json = nlohmann::ordered_json;

struct CoefficientRow {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double statistic = 0.0;  // estimate / se (Wald)
};

// Serializable summary of one fitted model.
struct FitSummary {
  std::string role;     // outcome | mediator | assignment
  std::string family;   // gaussian | binomial | multinomial
  std::string effects;  // fixed | random_intercept
  std::vector<CoefficientRow> coefficients;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool stabilized = false;  // ridge engaged or variance boundary hit
  std::optional<double> sigma2;
  std::optional<double> tau2;
  std::optional<double> lrt_chisq;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<CoefficientRow> coefficient_rows(
    const std::vector<std::string>& names, const Eigen::VectorXd& estimates,
    const Eigen::MatrixXd& covariance) {
  std::vector<CoefficientRow> rows;
  rows.reserve(names.size());
  const bool have_cov = covariance.rows() == estimates.size() &&
                        covariance.cols() == estimates.size();
  for (Eigen::Index j = 0; j < estimates.size(); ++j) {
    CoefficientRow row;
    row.name = names[static_cast<std::size_t>(j)];
    row.estimate = estimates(j);
    const double var = have_cov ? covariance(j, j) : 0.0;
    row.se = var > 0.0 ? std::sqrt(var) : 0.0;
    row.statistic = row.se > 0.0 ? row.estimate / row.se : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline FitSummary summarize_glm(const FittedGlm& fit, const std::string& role) {
  FitSummary s;
  s.role = role;
  s.family = family_name(fit.spec.family);
  s.effects = "fixed";
  s.coefficients = coefficient_rows(fit.names, fit.flat, fit.covariance);
  s.loglik = fit.loglik;
  s.iterations = fit.iterations;
  s.converged = fit.converged;
  s.stabilized = fit.ridged;
  if (fit.spec.family == Family::gaussian) s.sigma2 = fit.sigma2;
  s.warnings = fit.warnings;
  return s;
}

inline FitSummary summarize_glmm(const FittedGlmm& fit, const std::string& role) {
  FitSummary s;
  s.role = role;
  s.family = family_name(fit.spec.family);
  s.effects = "random_intercept";
  s.coefficients =
      coefficient_rows(fit.fixed_names, fit.fixed_flat, fit.fixed_covariance);
  s.loglik = fit.loglik;
  s.iterations = fit.iterations;
  s.converged = fit.converged;
  s.stabilized = fit.boundary;
  if (fit.spec.family == Family::gaussian) s.sigma2 = fit.sigma2;
  s.tau2 = fit.tau2;
  s.lrt_chisq = fit.lrt_chisq;
  s.warnings = fit.warnings;
  return s;
}

}  // namespace detail

inline FitSummary summarize_model(const OutcomeModel& model) {
  return model.is_random() ? detail::summarize_glmm(*model.glmm(), "outcome")
                           : detail::summarize_glm(*model.glm(), "outcome");
}

inline FitSummary summarize_model(const MediatorModel& model) {
  return model.is_random() ? detail::summarize_glmm(*model.glmm(), "mediator")
                           : detail::summarize_glm(*model.glm(), "mediator");
}

inline FitSummary summarize_model(const AssignmentModel& model) {
  FitSummary s;
  s.role = "assignment";
  s.family = "multinomial";
  s.effects = "fixed";
  std::vector<std::string> names;
  names.reserve(model.free_map.size());
  for (const auto& [z, term] : model.free_map) {
    const std::string label = model.labels[static_cast<std::size_t>(z)];
    names.push_back(
        term < 0
            ? "score[" + label + "]:(intercept)"
            : "score[" + label + "]:" +
                  model.covariate_names[static_cast<std::size_t>(term)]);
  }
  s.coefficients =
      detail::coefficient_rows(names, model.get_free(), model.covariance);
  s.loglik = model.loglik;
  s.iterations = model.iterations;
  s.converged = model.converged;
  s.stabilized = model.ridged;
  s.warnings = model.warnings;
  return s;
}

// Per-component credible intervals plus bookkeeping of the draw process.
struct UncertaintySummary {
  int requested = 0;
  std::size_t retained = 0;
  std::size_t discarded = 0;
  double level = 0.95;
  std::uint64_t seed = 0;
  // Fixed component order as in component_names().
  std::vector<std::pair<std::string, std::pair<double, double>>> intervals;
};

inline UncertaintySummary summarize_uncertainty(const PosteriorDraws& draws,
                                                double level) {
  UncertaintySummary u;
  u.requested = draws.requested;
  u.retained = draws.draws.size();
  u.discarded = draws.discarded;
  u.level = level;
  u.seed = draws.seed;
  for (const char* name :
       {"total_variance", "casemix", "omega0", "residual", "omega1", "omega2",
        "omega3"}) {
    u.intervals.emplace_back(name, credible_interval(draws, name, level));
  }
  return u;
}

// Everything the decompose command reports.
struct DecomposeReport {
  std::uint64_t seed = 0;
  std::size_t patients = 0;
  int hospitals = 0;
  std::string mechanism;
  Decomposition decomposition;
  std::optional<UncertaintySummary> uncertainty;
  HospitalEffects hospital_effects;
  std::vector<FitSummary> models;
  std::vector<std::string> warnings;
  double timing_seconds = 0.0;
};

inline ordered_json to_json(const Decomposition& d) {
  ordered_json j;
  j["omega0"] = d.omega0;
  j["omega1"] = d.omega1;
  j["omega2"] = d.omega2;
  j["omega3"] = d.omega3;
  j["casemix"] = d.casemix;
  j["residual"] = d.residual;
  j["total_variance"] = d.total_variance;
  ordered_json percent;
  for (const auto& [name, value] :
       {std::pair<const char*, double>{"omega1", d.omega1},
        {"omega2", d.omega2},
        {"omega3", d.omega3}}) {
    const auto pct = d.percent_of_omega0(value);
    if (pct) {
      percent[name] = *pct;
    } else {
      percent[name] = nullptr;
    }
  }
  j["percentages"] = std::move(percent);
  return j;
}

inline ordered_json to_json(const FitSummary& s) {
  ordered_json j;
  j["role"] = s.role;
  j["family"] = s.family;
  j["effects"] = s.effects;
  ordered_json coefs = ordered_json::array();
  for (const CoefficientRow& row : s.coefficients) {
    ordered_json c;
    c["name"] = row.name;
    c["estimate"] = row.estimate;
    c["se"] = row.se;
    c["statistic"] = row.statistic;
    coefs.push_back(std::move(c));
  }
  j["coefficients"] = std::move(coefs);
  j["loglik"] = s.loglik;
  j["iterations"] = s.iterations;
  j["converged"] = s.converged;
  j["stabilized"] = s.stabilized;
  if (s.sigma2) j["sigma2"] = *s.sigma2;
  if (s.tau2) j["tau2"] = *s.tau2;
  if (s.lrt_chisq) j["lrt_chisq"] = *s.lrt_chisq;
  if (!s.warnings.empty()) j["warnings"] = s.warnings;
  return j;
}

inline ordered_json to_json(const DecomposeReport& report) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["software_version"] = kVersion;
  j["seed"] = report.seed;
  j["patients"] = report.patients;
  j["hospitals"] = report.hospitals;
  j["mechanism"] = report.mechanism;
  j["decomposition"] = to_json(report.decomposition);
  if (report.uncertainty) {
    const UncertaintySummary& u = *report.uncertainty;
    ordered_json uj;
    uj["draws_requested"] = u.requested;
    uj["draws_retained"] = u.retained;
    uj["draws_discarded"] = u.discarded;
    uj["level"] = u.level;
    uj["seed"] = u.seed;
    ordered_json intervals;
    for (const auto& [name, bounds] : u.intervals) {
      intervals[name] = ordered_json::array({bounds.first, bounds.second});
    }
    uj["credible_intervals"] = std::move(intervals);
    j["uncertainty"] = std::move(uj);
  } else {
    j["uncertainty"] = nullptr;
  }
  ordered_json effects = ordered_json::array();
  for (std::size_t z = 0; z < report.hospital_effects.labels.size(); ++z) {
    ordered_json e;
    e["hospital"] = report.hospital_effects.labels[z];
    e["mass"] = report.hospital_effects.mass[z];
    e["nie"] = report.hospital_effects.nie[z];
    e["nde"] = report.hospital_effects.nde[z];
    effects.push_back(std::move(e));
  }
  j["per_hospital_effects"] = std::move(effects);
  ordered_json models = ordered_json::array();
  for (const FitSummary& s : report.models) models.push_back(to_json(s));
  j["model_summaries"] = std::move(models);
  j["warnings"] = report.warnings;
  j["timing_seconds"] = report.timing_seconds;
  return j;
}

namespace detail {

inline std::string format_fixed(double value, int decimals) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", decimals, value);
  return buffer;
}

// Point estimates rounding to 0.0000 but actually positive render as the
// published "<0.0001"; percentages are signed and unbounded.
inline std::string format_estimate(double value) {
  std::string s = format_fixed(value, 4);
  if ((s == "0.0000" || s == "-0.0000") && value != 0.0) {
    return value > 0.0 ? "<0.0001" : ">-0.0001";
  }
  return s;
}

inline std::string format_percent(const std::optional<double>& pct) {
  if (!pct) return "—";  // em dash: undefined share of a zero omega0
  return format_fixed(*pct, 2) + "%";
}

}  // namespace detail

// Fixed-width text table in the published layout: the between-hospital
// variance and its three components, each with its share of omega0 and,
// when uncertainty was computed, a credible interval.
inline std::string render_table(const DecomposeReport& report) {
  const Decomposition& d = report.decomposition;

  const std::array<std::string, 4> headers = {"Total", "Direct effect",
                                              "Indirect effect", "Covariance"};
  const std::array<double, 4> values = {d.omega0, d.omega2, d.omega1, d.omega3};
  std::array<std::optional<double>, 4> percents;
  percents[0] = d.percent_of_omega0(d.omega0);
  percents[1] = d.percent_of_omega0(d.omega2);
  percents[2] = d.percent_of_omega0(d.omega1);
  percents[3] = d.percent_of_omega0(d.omega3);

  std::array<std::string, 4> value_cells;
  for (std::size_t c = 0; c < 4; ++c) {
    value_cells[c] = detail::format_estimate(values[c]) + " (" +
                     detail::format_percent(percents[c]) + ")";
  }

  std::array<std::string, 4> ci_cells;
  bool have_ci = false;
  std::string ci_label;
  if (report.uncertainty) {
    have_ci = true;
    const UncertaintySummary& u = *report.uncertainty;
    ci_label = detail::format_fixed(100.0 * u.level, 0) + "% CI";
    auto interval_for = [&](const char* name) -> std::string {
      for (const auto& [key, bounds] : u.intervals) {
        if (key == name) {
          return "(" + detail::format_estimate(bounds.first) + ", " +
                 detail::format_estimate(bounds.second) + ")";
        }
      }
      return "";
    };
    ci_cells = {interval_for("omega0"), interval_for("omega2"),
                interval_for("omega1"), interval_for("omega3")};
  }

  const std::string row_header = "Source of variation";
  std::size_t label_width = row_header.size();
  label_width = std::max(label_width, std::string("Variance").size());
  if (have_ci) label_width = std::max(label_width, ci_label.size());

  std::array<std::size_t, 4> widths;
  for (std::size_t c = 0; c < 4; ++c) {
    widths[c] = headers[c].size();
    widths[c] = std::max(widths[c], value_cells[c].size());
    if (have_ci) widths[c] = std::max(widths[c], ci_cells[c].size());
  }

  auto pad = [](const std::string& s, std::size_t width) {
    return s + std::string(width > s.size() ? width - s.size() : 0, ' ');
  };

  std::string out;
  out += pad(row_header, label_width);
  for (std::size_t c = 0; c < 4; ++c) out += "  " + pad(headers[c], widths[c]);
  out += '\n';
  out += pad("Variance", label_width);
  for (std::size_t c = 0; c < 4; ++c) out += "  " + pad(value_cells[c], widths[c]);
  out += '\n';
  if (have_ci) {
    out += pad(ci_label, label_width);
    for (std::size_t c = 0; c < 4; ++c) out += "  " + pad(ci_cells[c], widths[c]);
    out += '\n';
  }
  return out;
}

// Inverse of render_table for round-trip checks: pulls the four component
// estimates, their percentages, and interval bounds back out of the text.
struct ParsedTable {
  // Order follows the table: omega0, omega2, omega1, omega3.
  std::array<double, 4> values{};
  std::array<std::optional<double>, 4> percents{};
  bool has_intervals = false;
  std::array<std::pair<double, double>, 4> intervals{};
};

namespace detail {

// "<0.0001" carries half a rounding unit of information; midpoint rules.
inline double parse_estimate_token(const std::string& token) {
  if (token == "—") throw DataError("estimate token is the null marker");
  if (!token.empty() && token.front() == '<') return 0.00005;
  if (!token.empty() && token.front() == '>') return -0.00005;
  return std::stod(token);
}

}  // namespace detail

inline ParsedTable parse_table(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  for (char ch : text) {
    if (ch == '\n') {
      lines.push_back(line);
      line.clear();
    } else {
      line.push_back(ch);
    }
  }
  if (!line.empty()) lines.push_back(line);
  if (lines.size() < 2) throw DataError("table text is too short to parse");

  auto tokenize = [](const std::string& row) {
    std::vector<std::string> tokens;
    std::string token;
    for (char ch : row) {
      if (ch == ' ') {
        if (!token.empty()) {
          tokens.push_back(token);
          token.clear();
        }
      } else {
        token.push_back(ch);
      }
    }
    if (!token.empty()) tokens.push_back(token);
    return tokens;
  };

  ParsedTable parsed;
  {
    // "Variance  a (p%)  b (p%)  c (p%)  d (p%)"
    const std::vector<std::string> tokens = tokenize(lines.at(1));
    if (tokens.size() < 9 || tokens[0] != "Variance") {
      throw DataError("unrecognized variance row");
    }
    for (std::size_t c = 0; c < 4; ++c) {
      const std::string& value = tokens.at(1 + 2 * c);
      std::string pct = tokens.at(2 + 2 * c);
      parsed.values[c] = detail::parse_estimate_token(value);
      if (pct.size() >= 2 && pct.front() == '(' && pct.back() == ')') {
        pct = pct.substr(1, pct.size() - 2);
      }
      if (pct == "—") {
        parsed.percents[c] = std::nullopt;
      } else {
        if (!pct.empty() && pct.back() == '%') pct.pop_back();
        parsed.percents[c] = std::stod(pct);
      }
    }
  }
  if (lines.size() >= 3 && lines[2].find("CI") != std::string::npos) {
    parsed.has_intervals = true;
    const std::vector<std::string> tokens = tokenize(lines.at(2));
    // "95% CI  (a, b)  (a, b)  (a, b)  (a, b)"
    if (tokens.size() < 10) throw DataError("unrecognized interval row");
    for (std::size_t c = 0; c < 4; ++c) {
      std::string lo = tokens.at(2 + 2 * c);
      std::string hi = tokens.at(3 + 2 * c);
      if (!lo.empty() && lo.front() == '(') lo.erase(lo.begin());
      if (!lo.empty() && lo.back() == ',') lo.pop_back();
      if (!hi.empty() && hi.back() == ')') hi.pop_back();
      parsed.intervals[c] = {detail::parse_estimate_token(lo),
                             detail::parse_estimate_token(hi)};
    }
  }
  return parsed;
}

}  // namespace medvar

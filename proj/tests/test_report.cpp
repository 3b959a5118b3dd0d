#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <medvar/bootstrap.hpp>
#include <medvar/dataset.hpp>
#include <medvar/mechanism.hpp>
#include <medvar/mediation.hpp>
#include <medvar/models.hpp>
#include <medvar/multinomial.hpp>
#include <medvar/report.hpp>
#include <medvar/rng.hpp>

using namespace medvar;

namespace {

Decomposition make_decomposition(double omega1, double omega2, double omega3,
                                 double casemix, double residual) {
  Decomposition d;
  d.omega1 = omega1;
  d.omega2 = omega2;
  d.omega3 = omega3;
  d.omega0 = omega1 + omega2 + omega3;
  d.casemix = casemix;
  d.residual = residual;
  d.total_variance = d.casemix + d.omega0 + d.residual;
  return d;
}

std::string fixture_path(const std::string& name) {
#ifdef MEDVAR_FIXTURE_DIR
  const std::string dir = MEDVAR_FIXTURE_DIR;
#else
  const char* env = std::getenv("MEDVAR_FIXTURE_DIR");
  REQUIRE(env != nullptr);
  const std::string dir = env;
#endif
  return dir + "/" + name;
}

// The analytic two-hospital table: identity links, no covariates, noise-free
// outcome. Fitted mediator means are 0.4 (A) and 0.9 (B) with ML residual
// variance 0.98; the outcome is exactly 0.2 + 0.3[B] + 0.4 m.
struct FixtureFit {
  Dataset data;
  OutcomeModel outcome;
  MediatorModel mediator;
  AssignmentModel assignment;
  AssignmentMechanism mechanism;
};

FixtureFit load_fixture() {
  IngestOptions options;
  options.mediator_binary = false;
  IngestResult loaded = ingest_csv(fixture_path("two_hospital_linear.csv"), options);
  Dataset data = std::move(loaded.dataset);

  ModelSpec outcome_spec;
  outcome_spec.family = Family::gaussian;
  ModelSpec mediator_spec;
  mediator_spec.family = Family::gaussian;
  OutcomeModel outcome = fit_outcome_model(data, outcome_spec);
  MediatorModel mediator = fit_mediator_model(data, mediator_spec);
  AssignmentModel assignment = fit_assignment(data);
  AssignmentMechanism mechanism = AssignmentMechanism::observed(data, assignment);
  return {std::move(data), std::move(outcome), std::move(mediator),
          std::move(assignment), std::move(mechanism)};
}

}  // namespace

TEST_CASE("table renders the published layout exactly") {
  DecomposeReport report;
  report.decomposition = make_decomposition(0.0034, 0.0072, 0.0010, 0.2, 0.5);
  const std::string want =
      "Source of variation  Total             Direct effect    Indirect effect  Covariance    \n"
      "Variance             0.0116 (100.00%)  0.0072 (62.07%)  0.0034 (29.31%)  0.0010 (8.62%)\n";
  REQUIRE(render_table(report) == want);
}

TEST_CASE("zero between-hospital variance renders undefined shares") {
  DecomposeReport report;
  report.decomposition = make_decomposition(0.0, 0.0, 0.0, 0.1, 0.4);
  REQUIRE_FALSE(report.decomposition.percent_of_omega0(0.0).has_value());
  const std::string table = render_table(report);
  REQUIRE(table.find("0.0000 (—)") != std::string::npos);
  const ParsedTable parsed = parse_table(table);
  for (std::size_t c = 0; c < 4; ++c) {
    REQUIRE(parsed.values[c] == 0.0);
    REQUIRE_FALSE(parsed.percents[c].has_value());
  }
  REQUIRE_FALSE(parsed.has_intervals);
}

TEST_CASE("tiny magnitudes render as bounded tokens") {
  DecomposeReport report;
  report.decomposition = make_decomposition(0.2, 0.3, 4e-5, 0.0, 0.0);
  std::string table = render_table(report);
  REQUIRE(table.find("<0.0001") != std::string::npos);
  ParsedTable parsed = parse_table(table);
  REQUIRE(parsed.values[3] == Catch::Approx(0.00005));

  report.decomposition = make_decomposition(0.2, 0.3, -4e-5, 0.0, 0.0);
  table = render_table(report);
  REQUIRE(table.find(">-0.0001") != std::string::npos);
  parsed = parse_table(table);
  REQUIRE(parsed.values[3] == Catch::Approx(-0.00005));

  // An exact zero is a zero, not a bound.
  report.decomposition = make_decomposition(0.2, 0.3, 0.0, 0.0, 0.0);
  table = render_table(report);
  REQUIRE(table.find("0.0000 (0.00%)") != std::string::npos);
}

TEST_CASE("rendered tables parse back within half a rounding unit") {
  DecomposeReport report;
  report.decomposition =
      make_decomposition(0.0123456, 0.0456789, 0.0011111, 0.1234567, 0.9876543);
  UncertaintySummary u;
  u.requested = 100;
  u.retained = 100;
  u.level = 0.95;
  for (const char* name : {"total_variance", "casemix", "omega0", "residual",
                           "omega1", "omega2", "omega3"}) {
    u.intervals.emplace_back(name, std::make_pair(0.0101234, 0.0909876));
  }
  report.uncertainty = u;

  const std::string table = render_table(report);
  REQUIRE(table.find("95% CI") != std::string::npos);
  const ParsedTable parsed = parse_table(table);
  const Decomposition& d = report.decomposition;
  const std::array<double, 4> want = {d.omega0, d.omega2, d.omega1, d.omega3};
  for (std::size_t c = 0; c < 4; ++c) {
    REQUIRE(parsed.values[c] == Catch::Approx(want[c]).margin(5e-5));
    REQUIRE(parsed.percents[c].has_value());
    REQUIRE(*parsed.percents[c] ==
            Catch::Approx(100.0 * want[c] / d.omega0).margin(5e-3));
  }
  REQUIRE(parsed.has_intervals);
  for (std::size_t c = 0; c < 4; ++c) {
    REQUIRE(parsed.intervals[c].first == Catch::Approx(0.0101234).margin(5e-5));
    REQUIRE(parsed.intervals[c].second == Catch::Approx(0.0909876).margin(5e-5));
  }
}

TEST_CASE("malformed tables are rejected") {
  REQUIRE_THROWS_AS(parse_table(""), DataError);
  REQUIRE_THROWS_AS(parse_table("only a header line\n"), DataError);
  REQUIRE_THROWS_AS(parse_table("header\nnot a variance row at all\n"), DataError);
  REQUIRE_THROWS_AS(
      parse_table("header\nVariance 1 (2%) 3 (4%) 5 (6%) 7 (8%)\nbroken CI row\n"),
      DataError);
}

TEST_CASE("decompositions serialize with their shares") {
  const Decomposition d = make_decomposition(0.01, 0.0225, 0.03, 0.0, 0.1568);
  const ordered_json j = to_json(d);
  REQUIRE(j.at("omega0").get<double>() == Catch::Approx(0.0625));
  REQUIRE(j.at("omega1").get<double>() == Catch::Approx(0.01));
  REQUIRE(j.at("omega2").get<double>() == Catch::Approx(0.0225));
  REQUIRE(j.at("omega3").get<double>() == Catch::Approx(0.03));
  REQUIRE(j.at("casemix").get<double>() == 0.0);
  REQUIRE(j.at("residual").get<double>() == Catch::Approx(0.1568));
  REQUIRE(j.at("total_variance").get<double>() == Catch::Approx(0.2193));
  REQUIRE(j.at("percentages").at("omega1").get<double>() == Catch::Approx(16.0));
  REQUIRE(j.at("percentages").at("omega2").get<double>() == Catch::Approx(36.0));
  REQUIRE(j.at("percentages").at("omega3").get<double>() == Catch::Approx(48.0));

  const ordered_json zero = to_json(make_decomposition(0.0, 0.0, 0.0, 0.0, 0.0));
  REQUIRE(zero.at("percentages").at("omega1").is_null());
}

TEST_CASE("the analytic fixture reproduces its closed-form table") {
  FixtureFit f = load_fixture();
  REQUIRE(f.data.n() == 10);
  REQUIRE(f.data.q() == 2);
  REQUIRE_FALSE(f.data.mediator_binary());

  // Exact fits of the generating equations.
  const FittedGlm& outcome = *f.outcome.glm();
  REQUIRE(outcome.coef.intercept == Catch::Approx(0.2).margin(1e-12));
  REQUIRE(outcome.coef.hospital(1) == Catch::Approx(0.3).margin(1e-12));
  REQUIRE(outcome.coef.mediator == Catch::Approx(0.4).margin(1e-12));
  REQUIRE(outcome.sigma2 == Catch::Approx(0.0).margin(1e-20));
  const FittedGlm& mediator = *f.mediator.glm();
  REQUIRE(mediator.coef.intercept == Catch::Approx(0.4).margin(1e-12));
  REQUIRE(mediator.coef.hospital(1) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(mediator.sigma2 == Catch::Approx(0.98).margin(1e-12));

  // Balanced hospitals with intercept-only assignment scores: the observed
  // mechanism is the uniform one.
  const Decomposition d = decompose(f.data, f.outcome, f.mediator, f.mechanism);
  REQUIRE(d.omega0 == Catch::Approx(0.0625).margin(1e-10));
  REQUIRE(d.omega1 == Catch::Approx(0.01).margin(1e-10));
  REQUIRE(d.omega2 == Catch::Approx(0.0225).margin(1e-10));
  REQUIRE(d.omega3 == Catch::Approx(0.03).margin(1e-10));
  REQUIRE(d.casemix == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(d.residual == Catch::Approx(0.1568).margin(1e-10));
  REQUIRE(d.total_variance == Catch::Approx(0.2193).margin(1e-10));

  DecomposeReport report;
  report.decomposition = d;
  const std::string want =
      "Source of variation  Total             Direct effect    Indirect effect  Covariance     \n"
      "Variance             0.0625 (100.00%)  0.0225 (36.00%)  0.0100 (16.00%)  0.0300 (48.00%)\n";
  REQUIRE(render_table(report) == want);
}

TEST_CASE("reports serialize the full schema") {
  FixtureFit f = load_fixture();
  const Decomposition d = decompose(f.data, f.outcome, f.mediator, f.mechanism);

  DecomposeReport report;
  report.seed = 3;
  report.patients = f.data.n();
  report.hospitals = f.data.q();
  report.mechanism = "observed";
  report.decomposition = d;
  report.hospital_effects =
      hospital_effects(f.data, f.outcome, f.mediator, f.mechanism);
  report.models.push_back(summarize_model(f.outcome));
  report.models.push_back(summarize_model(f.mediator));
  report.models.push_back(summarize_model(f.assignment));
  report.warnings = {"example warning"};
  report.timing_seconds = 0.25;

  // Without uncertainty the slot is an explicit null.
  ordered_json j = to_json(report);
  REQUIRE(j.at("uncertainty").is_null());

  BootstrapOptions boot;
  boot.draws = 16;
  boot.seed = 3;
  boot.level = 0.9;
  const PosteriorDraws draws = draw_posterior(f.data, f.outcome, f.mediator,
                                              &f.assignment, f.mechanism, boot);
  REQUIRE(draws.draws.size() == 16);
  report.uncertainty = summarize_uncertainty(draws, boot.level);

  j = to_json(report);
  REQUIRE(j.at("schema_version").get<std::string>() == kReportSchemaVersion);
  REQUIRE(j.at("software_version").get<std::string>() == kVersion);
  REQUIRE(j.at("seed").get<std::uint64_t>() == 3);
  REQUIRE(j.at("patients").get<std::size_t>() == 10);
  REQUIRE(j.at("hospitals").get<int>() == 2);
  REQUIRE(j.at("mechanism").get<std::string>() == "observed");
  REQUIRE(j.at("decomposition").at("omega0").get<double>() ==
          Catch::Approx(0.0625).margin(1e-10));

  const ordered_json& u = j.at("uncertainty");
  REQUIRE(u.at("draws_requested").get<int>() == 16);
  REQUIRE(u.at("draws_retained").get<std::size_t>() == 16);
  REQUIRE(u.at("draws_discarded").get<std::size_t>() == 0);
  REQUIRE(u.at("level").get<double>() == 0.9);
  REQUIRE(u.at("seed").get<std::uint64_t>() == 3);
  const ordered_json& intervals = u.at("credible_intervals");
  REQUIRE(intervals.size() == 7);
  for (const char* name : {"total_variance", "casemix", "omega0", "residual",
                           "omega1", "omega2", "omega3"}) {
    REQUIRE(intervals.contains(name));
    REQUIRE(intervals.at(name).is_array());
    REQUIRE(intervals.at(name).size() == 2);
    REQUIRE(intervals.at(name).at(0).get<double>() <=
            intervals.at(name).at(1).get<double>());
  }

  const ordered_json& effects = j.at("per_hospital_effects");
  REQUIRE(effects.size() == 2);
  double mass = 0.0, weighted_nie = 0.0;
  for (const auto& e : effects) {
    REQUIRE(e.contains("hospital"));
    mass += e.at("mass").get<double>();
    weighted_nie += e.at("mass").get<double>() * e.at("nie").get<double>();
  }
  REQUIRE(mass == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(weighted_nie == Catch::Approx(0.0).margin(1e-12));

  REQUIRE(j.at("model_summaries").size() == 3);
  REQUIRE(j.at("model_summaries").at(0).at("role").get<std::string>() == "outcome");
  REQUIRE(j.at("model_summaries").at(1).at("role").get<std::string>() == "mediator");
  REQUIRE(j.at("model_summaries").at(2).at("role").get<std::string>() ==
          "assignment");
  REQUIRE(j.at("warnings").size() == 1);
  REQUIRE(j.at("timing_seconds").get<double>() == 0.25);
}

TEST_CASE("fit summaries expose coefficients and spread") {
  FixtureFit f = load_fixture();

  const FitSummary outcome = summarize_model(f.outcome);
  REQUIRE(outcome.role == "outcome");
  REQUIRE(outcome.family == "gaussian");
  REQUIRE(outcome.effects == "fixed");
  REQUIRE(outcome.converged);
  REQUIRE(outcome.sigma2.has_value());
  REQUIRE_FALSE(outcome.tau2.has_value());
  REQUIRE(outcome.coefficients.size() == 3);
  REQUIRE(outcome.coefficients[0].name == "(intercept)");
  REQUIRE(outcome.coefficients[1].name == "hospital[B]");
  REQUIRE(outcome.coefficients[2].name == "mediator");

  const FitSummary mediator = summarize_model(f.mediator);
  REQUIRE(mediator.role == "mediator");
  const FittedGlm& fit = *f.mediator.glm();
  for (std::size_t c = 0; c < mediator.coefficients.size(); ++c) {
    const CoefficientRow& row = mediator.coefficients[c];
    const double var = fit.covariance(static_cast<Eigen::Index>(c),
                                      static_cast<Eigen::Index>(c));
    REQUIRE(row.estimate == fit.flat(static_cast<Eigen::Index>(c)));
    REQUIRE(row.se == Catch::Approx(std::sqrt(var)).margin(1e-14));
    REQUIRE(row.statistic == Catch::Approx(row.estimate / row.se));
    REQUIRE(row.se > 0.0);
  }

  const FitSummary assignment = summarize_model(f.assignment);
  REQUIRE(assignment.role == "assignment");
  REQUIRE(assignment.family == "multinomial");
  REQUIRE(assignment.coefficients.size() == 1);
  REQUIRE(assignment.coefficients[0].name == "score[B]:(intercept)");
  REQUIRE(assignment.coefficients[0].estimate == Catch::Approx(0.0).margin(1e-8));

  // Random-intercept fits report the variance pair and the boundary flag.
  CounterRng rng = CounterRng::stream(77, 50);
  const int q = 4, per = 25, n = q * per;
  std::vector<double> y(static_cast<std::size_t>(n));
  std::vector<double> m(static_cast<std::size_t>(n));
  std::vector<std::string> hosp(static_cast<std::size_t>(n));
  std::vector<double> effect(static_cast<std::size_t>(q));
  for (int z = 0; z < q; ++z) effect[static_cast<std::size_t>(z)] = rng.normal();
  for (int i = 0; i < n; ++i) {
    const int z = i / per;
    const std::size_t at = static_cast<std::size_t>(i);
    m[at] = rng.bernoulli(0.4) ? 1.0 : 0.0;
    y[at] = effect[static_cast<std::size_t>(z)] + 0.6 * m[at] + rng.normal(0.0, 0.9);
    hosp[at] = "c" + std::to_string(z + 1);
  }
  const Dataset data(std::move(y), std::move(m), hosp, Eigen::MatrixXd(n, 0), {},
                     true);
  ModelSpec spec;
  spec.family = Family::gaussian;
  spec.hospital_effects = EffectKind::random_intercept;
  const OutcomeModel random_fit = fit_outcome_model(data, spec);
  const FitSummary glmm = summarize_model(random_fit);
  REQUIRE(glmm.effects == "random_intercept");
  REQUIRE(glmm.tau2.has_value());
  REQUIRE(*glmm.tau2 > 0.0);
  REQUIRE(glmm.sigma2.has_value());
  REQUIRE(glmm.lrt_chisq.has_value());
  REQUIRE(glmm.coefficients.size() == 2);
  REQUIRE(glmm.coefficients[0].name == "(intercept)");
  REQUIRE(glmm.coefficients[1].name == "mediator");
  REQUIRE_FALSE(glmm.stabilized);
}

TEST_CASE("uncertainty summaries keep the draw bookkeeping") {
  PosteriorDraws draws;
  draws.seed = 9;
  draws.requested = 10;
  draws.discarded = 2;
  draws.level = 0.8;
  for (int i = 1; i <= 5; ++i) {
    Decomposition d =
        make_decomposition(0.1 * i, 0.2 * i, 0.0, 0.05 * i, 0.01 * i);
    draws.draws.push_back(d);
    draws.draw_ids.push_back(i - 1);
  }
  const UncertaintySummary u = summarize_uncertainty(draws, 0.8);
  REQUIRE(u.requested == 10);
  REQUIRE(u.retained == 5);
  REQUIRE(u.discarded == 2);
  REQUIRE(u.level == 0.8);
  REQUIRE(u.seed == 9);
  REQUIRE(u.intervals.size() == 7);
  REQUIRE(u.intervals[0].first == "total_variance");
  REQUIRE(u.intervals[2].first == "omega0");
  REQUIRE(u.intervals[6].first == "omega3");
  // omega0 takes values 0.3, 0.6, .., 1.5; type-7 quantiles at level 0.8.
  REQUIRE(u.intervals[2].second.first == Catch::Approx(0.3 + 0.3 * 0.4));
  REQUIRE(u.intervals[2].second.second == Catch::Approx(0.3 + 0.3 * 3.6));
}

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <medvar/simulation.hpp>

using namespace medvar;

namespace {

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.n() != b.n() || a.q() != b.q()) return false;
  for (std::size_t i = 0; i < a.n(); ++i) {
    if (a.outcome(i) != b.outcome(i) || a.mediator(i) != b.mediator(i) ||
        a.hospital(i) != b.hospital(i)) {
      return false;
    }
  }
  return a.covariates() == b.covariates();
}

// E[expit(shift + X)] for X standard normal, by dense trapezoid; reference
// for the latent-logistic mediator rate.
double expit_normal_mean(double shift) {
  const int grid = 20001;
  const double span = 9.0;
  double sum = 0.0, mass = 0.0;
  for (int g = 0; g < grid; ++g) {
    const double x = -span + 2.0 * span * g / (grid - 1);
    double w = std::exp(-0.5 * x * x);
    if (g == 0 || g == grid - 1) w *= 0.5;
    sum += w / (1.0 + std::exp(-(shift + x)));
    mass += w;
  }
  return sum / mass;
}

}  // namespace

TEST_CASE("hospital labels are zero-padded into generation order") {
  REQUIRE(hospital_labels(2) == std::vector<std::string>{"h1", "h2"});
  const auto ten = hospital_labels(10);
  REQUIRE(ten.front() == "h01");
  REQUIRE(ten[8] == "h09");
  REQUIRE(ten.back() == "h10");
  const auto hundred = hospital_labels(100);
  REQUIRE(hundred.front() == "h001");
  REQUIRE(hundred.back() == "h100");
  for (const auto& labels : {ten, hundred}) {
    REQUIRE(std::is_sorted(labels.begin(), labels.end()));
  }
}

TEST_CASE("scenario configurations are validated") {
  SimulationConfig config;
  config.n = 1;
  REQUIRE_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.q = 1;
  REQUIRE_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.hospital_variance = -1.0;
  REQUIRE_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.hospital_variance = 1.0;
  config.hospital_covariance = 1.5;
  REQUIRE_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.assignment_slope_variance = -0.1;
  REQUIRE_THROWS_AS(config.validate(), ConfigError);
  config = {};
  REQUIRE_NOTHROW(config.validate());
}

TEST_CASE("scenario parameters are seed-determined with the requested moments") {
  SimulationConfig config;
  config.q = 400;
  config.seed = 42;
  config.hospital_variance = 4.0;
  config.hospital_covariance = 2.0;
  const ScenarioParameters a = draw_scenario_parameters(config);
  const ScenarioParameters b = draw_scenario_parameters(config);
  REQUIRE(a.alpha == b.alpha);
  REQUIRE(a.beta == b.beta);
  REQUIRE(a.psi == b.psi);
  REQUIRE(a.phi == b.phi);

  auto var = [](const Eigen::VectorXd& v) {
    const double mean = v.mean();
    return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
  };
  const double q = static_cast<double>(config.q);
  // Sample variance of a chi-square-ish statistic: SE ~ v * sqrt(2 / (q-1)).
  const double tol = 4.0 * 4.0 * std::sqrt(2.0 / (q - 1.0));
  REQUIRE(var(a.alpha) == Catch::Approx(4.0).margin(tol));
  REQUIRE(var(a.beta) == Catch::Approx(4.0).margin(tol));
  double cov = 0.0;
  const double ma = a.alpha.mean(), mb = a.beta.mean();
  for (int z = 0; z < config.q; ++z) {
    cov += (a.alpha(z) - ma) * (a.beta(z) - mb);
  }
  cov /= q - 1.0;
  REQUIRE(cov == Catch::Approx(2.0).margin(tol));
  REQUIRE(var(a.psi) == Catch::Approx(0.25).margin(4.0 * 0.25 * std::sqrt(2.0 / (q - 1.0))));

  // A different seed draws different parameters.
  config.seed = 43;
  const ScenarioParameters c = draw_scenario_parameters(config);
  REQUIRE(a.alpha != c.alpha);

  // Zero covariance decouples the pair without touching the margins.
  config.hospital_covariance = 0.0;
  const ScenarioParameters d = draw_scenario_parameters(config);
  double cov0 = 0.0;
  const double md_a = d.alpha.mean(), md_b = d.beta.mean();
  for (int z = 0; z < config.q; ++z) {
    cov0 += (d.alpha(z) - md_a) * (d.beta(z) - md_b);
  }
  cov0 /= q - 1.0;
  REQUIRE(cov0 == Catch::Approx(0.0).margin(tol));
}

TEST_CASE("replications are reproducible and distinct") {
  SimulationConfig config;
  config.n = 500;
  config.q = 5;
  config.seed = 7;
  const ScenarioParameters params = draw_scenario_parameters(config);
  const Dataset r0 = generate_dataset(config, params, 0);
  const Dataset r0_again = generate_dataset(config, params, 0);
  const Dataset r1 = generate_dataset(config, params, 1);
  REQUIRE(same_dataset(r0, r0_again));
  REQUIRE_FALSE(same_dataset(r0, r1));
  REQUIRE(r0.labels() == hospital_labels(5));
  REQUIRE(r0.covariate_names() == std::vector<std::string>{"x1", "x2"});
  REQUIRE(r0.mediator_binary());

  SimulationConfig binary = config;
  binary.binary_outcome = true;
  const ScenarioParameters bparams = draw_scenario_parameters(binary);
  const Dataset rb = generate_dataset(binary, bparams, 0);
  for (std::size_t i = 0; i < rb.n(); ++i) {
    REQUIRE((rb.outcome(i) == 0.0 || rb.outcome(i) == 1.0));
  }

  // Mismatched parameters are rejected.
  SimulationConfig other = config;
  other.q = 6;
  REQUIRE_THROWS_AS(generate_dataset(other, params, 0), ConfigError);
}

TEST_CASE("generated data follow the declared structure") {
  SimulationConfig config;
  config.n = 24000;
  config.q = 4;
  config.seed = 11;
  config.mediator_effect = 0.0;
  config.hospital_variance = 0.0;  // alpha = beta = 0
  config.assignment_intercept_variance = 0.0;
  config.assignment_slope_variance = 0.0;  // uniform assignment
  const ScenarioParameters params = draw_scenario_parameters(config);
  REQUIRE(params.alpha.isZero(0.0));
  REQUIRE(params.beta.isZero(0.0));
  const Dataset data = generate_dataset(config, params, 0);

  const double n = static_cast<double>(data.n());
  // Covariates: standard normal and Bernoulli(1/2).
  double mx1 = 0.0, sx1 = 0.0, mx2 = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    mx1 += data.covariate_row(i)(0);
    mx2 += data.covariate_row(i)(1);
  }
  mx1 /= n;
  mx2 /= n;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double d = data.covariate_row(i)(0) - mx1;
    sx1 += d * d;
  }
  sx1 = std::sqrt(sx1 / (n - 1.0));
  REQUIRE(mx1 == Catch::Approx(0.0).margin(4.0 / std::sqrt(n)));
  REQUIRE(sx1 == Catch::Approx(1.0).margin(0.02));
  REQUIRE(mx2 == Catch::Approx(0.5).margin(4.0 * 0.5 / std::sqrt(n)));

  // Flat softmax shares.
  for (int z = 0; z < data.q(); ++z) {
    const double share = static_cast<double>(data.hospital_count(z)) / n;
    REQUIRE(share == Catch::Approx(0.25).margin(4.0 * std::sqrt(0.25 * 0.75 / n)));
  }

  // Latent-logistic mediator: P(M = 1) = E[expit(x1 + 1.5 x2)].
  double mrate = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) mrate += data.mediator(i);
  mrate /= n;
  const double want_rate =
      0.5 * expit_normal_mean(0.0) + 0.5 * expit_normal_mean(1.5);
  REQUIRE(mrate == Catch::Approx(want_rate).margin(4.0 * 0.5 / std::sqrt(n)));

  // Outcome (mediator effect zero): mean x1 + 2 x2 + logistic noise, so the
  // mean is 1 and the variance is 1 + 1 + pi^2 / 3.
  double my = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) my += data.outcome(i);
  my /= n;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double d = data.outcome(i) - my;
    sy += d * d;
  }
  sy /= n - 1.0;
  const double want_var = 2.0 + M_PI * M_PI / 3.0;
  REQUIRE(my == Catch::Approx(1.0).margin(4.0 * std::sqrt(want_var / n)));
  REQUIRE(sy == Catch::Approx(want_var).margin(4.0 * want_var * std::sqrt(2.0 / n)));
}

TEST_CASE("true model objects reproduce the generator's conditionals") {
  SimulationConfig config;
  config.n = 30000;
  config.q = 6;
  config.seed = 19;
  config.mediator_effect = 4.0;
  const ScenarioParameters params = draw_scenario_parameters(config);
  const Dataset data = generate_dataset(config, params, 0);
  const OutcomeModel outcome = true_outcome_model(config, params);
  const MediatorModel mediator = true_mediator_model(config, params);
  const AssignmentModel assignment = true_assignment_model(config, params);

  // Per-hospital mediator rates match the model-implied conditional means.
  std::vector<double> seen(6, 0.0), want(6, 0.0), count(6, 0.0);
  for (std::size_t i = 0; i < data.n(); ++i) {
    const int z = data.hospital(i);
    seen[static_cast<std::size_t>(z)] += data.mediator(i);
    want[static_cast<std::size_t>(z)] +=
        mediator.prob1(z, data.covariate_row(i));
    count[static_cast<std::size_t>(z)] += 1.0;
  }
  for (int z = 0; z < 6; ++z) {
    const std::size_t zz = static_cast<std::size_t>(z);
    REQUIRE(count[zz] > 500.0);
    const double se = std::sqrt(0.25 / count[zz]);
    REQUIRE(seen[zz] / count[zz] ==
            Catch::Approx(want[zz] / count[zz]).margin(4.0 * se));
  }

  // Outcome residuals against the true conditional mean are centered with
  // the logistic variance.
  double resid = 0.0, resid2 = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double mu = outcome.mu(data.hospital(i), data.mediator(i),
                                 data.covariate_row(i));
    const double r = data.outcome(i) - mu;
    resid += r;
    resid2 += r * r;
  }
  resid /= static_cast<double>(data.n());
  resid2 /= static_cast<double>(data.n());
  const double lvar = M_PI * M_PI / 3.0;
  REQUIRE(resid == Catch::Approx(0.0).margin(4.0 * std::sqrt(lvar / 30000.0)));
  REQUIRE(resid2 == Catch::Approx(lvar).margin(4.0 * lvar * std::sqrt(2.0 / 30000.0)));
  REQUIRE(outcome.sigma2() == Catch::Approx(lvar).margin(1e-12));

  // Softmax shares: empirical hospital frequencies match the average of the
  // assignment model's probabilities over the drawn case mix.
  Eigen::VectorXd mean_prob = Eigen::VectorXd::Zero(6);
  for (std::size_t i = 0; i < data.n(); ++i) {
    mean_prob += assignment.probabilities(data.covariate_row(i));
  }
  mean_prob /= static_cast<double>(data.n());
  for (int z = 0; z < 6; ++z) {
    const double share =
        static_cast<double>(data.hospital_count(z)) / static_cast<double>(data.n());
    const double se = std::sqrt(mean_prob(z) * (1.0 - mean_prob(z)) / 30000.0);
    REQUIRE(share == Catch::Approx(mean_prob(z)).margin(4.0 * se));
  }
}

TEST_CASE("oracle truth is deterministic, additive, and batch-consistent") {
  SimulationConfig config;
  config.q = 6;
  config.seed = 23;
  config.mediator_effect = 5.0;
  const ScenarioParameters params = draw_scenario_parameters(config);

  const OracleResult a = oracle_truth(config, params, 20000, 20);
  const OracleResult b = oracle_truth(config, params, 20000, 20);
  REQUIRE(a.truth.omega0 == b.truth.omega0);
  REQUIRE(a.se.omega0 == b.se.omega0);
  REQUIRE(a.draws == 20000);
  REQUIRE(a.batches == 20);
  a.truth.assert_valid();

  // The population pass concatenates the batch streams exactly, so a
  // different batch split reuses the same draws and lands on the same truth.
  const OracleResult c = oracle_truth(config, params, 20000, 40);
  REQUIRE(a.truth.omega0 == c.truth.omega0);
  REQUIRE(a.truth.casemix == c.truth.casemix);
  REQUIRE(a.se.omega0 != c.se.omega0);

  for (double se : {a.se.total_variance, a.se.casemix, a.se.omega0, a.se.residual,
                    a.se.omega1, a.se.omega2, a.se.omega3}) {
    REQUIRE(se > 0.0);
    REQUIRE(se < 1.0);
  }

  // More draws shrink the batch standard errors roughly like 1/sqrt.
  const OracleResult fine = oracle_truth(config, params, 80000, 20);
  REQUIRE(fine.se.omega0 < a.se.omega0);

  REQUIRE_THROWS_AS(oracle_truth(config, params, 10, 100), ConfigError);
  REQUIRE_THROWS_AS(oracle_truth(config, params, 1000, 1), ConfigError);
}

TEST_CASE("oracle components vanish without a mediator pathway") {
  SimulationConfig config;
  config.q = 8;
  config.seed = 29;
  config.mediator_effect = 0.0;
  const ScenarioParameters params = draw_scenario_parameters(config);
  const OracleResult oracle = oracle_truth(config, params, 10000, 20);
  REQUIRE(oracle.truth.omega1 == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(oracle.truth.omega3 == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(oracle.truth.omega0 == Catch::Approx(oracle.truth.omega2).margin(1e-12));
  REQUIRE(oracle.truth.omega0 > 0.1);  // direct hospital effects persist

  SimulationConfig binary = config;
  binary.binary_outcome = true;
  const OracleResult ob = oracle_truth(binary, params, 10000, 20);
  REQUIRE(ob.truth.omega1 == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(ob.truth.omega3 == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("correlated hospital effects surface as covariance at the oracle") {
  SimulationConfig config;
  config.q = 60;
  config.seed = 31;
  config.mediator_effect = 7.0;
  config.hospital_variance = 4.0;
  config.hospital_covariance = 3.0;
  const ScenarioParameters params = draw_scenario_parameters(config);
  const OracleResult oracle = oracle_truth(config, params, 6000, 20);
  REQUIRE(oracle.truth.omega3 > 3.0 * oracle.se.omega3);
  REQUIRE(oracle.truth.omega1 > 0.0);
  REQUIRE(oracle.truth.omega2 > 0.0);
}

TEST_CASE("replication studies are thread-invariant and summarized") {
  SimulationConfig config;
  config.n = 600;
  config.q = 4;
  config.seed = 37;
  config.mediator_effect = 3.0;
  config.hospital_variance = 1.0;
  EstimatorSettings settings;

  const ScenarioSummary serial = run_scenario(config, 10, settings, 1);
  const ScenarioSummary parallel = run_scenario(config, 10, settings, 3);
  REQUIRE(serial.failures == 0);
  REQUIRE(serial.detail.size() == 10);
  REQUIRE(parallel.failures == 0);
  for (std::size_t r = 0; r < 10; ++r) {
    REQUIRE(serial.detail[r].ok);
    REQUIRE(serial.detail[r].replication == static_cast<int>(r));
    REQUIRE(serial.detail[r].estimate.omega0 == parallel.detail[r].estimate.omega0);
    REQUIRE(serial.detail[r].estimate.omega3 == parallel.detail[r].estimate.omega3);
    serial.detail[r].estimate.assert_valid(1e-8);
  }
  for (std::size_t k = 0; k < 7; ++k) {
    REQUIRE(serial.stats[k].mean == parallel.stats[k].mean);
    REQUIRE(serial.stats[k].sd == parallel.stats[k].sd);
  }
  REQUIRE(serial.stats[0].mean > 0.0);  // total variance
  REQUIRE(serial.stats[2].q025 <= serial.stats[2].q975);
  REQUIRE(serial.stats[2].se == Catch::Approx(serial.stats[2].sd / std::sqrt(10.0)));

  REQUIRE_THROWS_AS(run_scenario(config, 0, settings), ConfigError);
}

TEST_CASE("component names follow the report order") {
  const auto& names = component_names();
  REQUIRE(names.size() == 7);
  REQUIRE(std::string(names[0]) == "total_variance");
  REQUIRE(std::string(names[1]) == "casemix");
  REQUIRE(std::string(names[2]) == "omega0");
  REQUIRE(std::string(names[3]) == "residual");
  REQUIRE(std::string(names[4]) == "omega1");
  REQUIRE(std::string(names[5]) == "omega2");
  REQUIRE(std::string(names[6]) == "omega3");
}

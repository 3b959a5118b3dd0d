// Command-line front end: ingest a CSV, fit the three models, decompose the
// between-hospital variance, and emit a JSON report; plus simulation and
// oracle runs driven by a JSON scenario file.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <medvar/medvar.hpp>

namespace {

using medvar::ordered_json;

// steady_clock span in seconds; the only nondeterministic report field.
class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    const auto now = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(now - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw medvar::DataError("cannot write output file: " + path);
  out << text;
  if (!out) throw medvar::DataError("failed while writing: " + path);
}

std::string json_text(const ordered_json& j) { return j.dump(2) + "\n"; }

bool output_is_stdout(const std::string& path) {
  return path.empty() || path == "-";
}

// Column mapping and ingest policy shared by decompose and summarize.
struct DataFlags {
  std::string path;
  medvar::IngestOptions ingest;
  std::string missing = "error";

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", path, "input CSV file")->required();
    cmd->add_option("--outcome-column", ingest.outcome_column,
                    "column holding the outcome")
        ->capture_default_str();
    cmd->add_option("--mediator-column", ingest.mediator_column,
                    "column holding the mediator")
        ->capture_default_str();
    cmd->add_option("--hospital-column", ingest.hospital_column,
                    "column holding the hospital label")
        ->capture_default_str();
    cmd->add_option("--covariates", ingest.covariate_columns,
                    "covariate columns (default: all remaining columns)")
        ->delimiter(',');
    cmd->add_flag_callback(
        "--continuous-mediator",
        [this] { ingest.mediator_binary = false; },
        "treat the mediator as continuous instead of binary");
    cmd->add_option("--missing", missing, "missing-value policy")
        ->check(CLI::IsMember({"error", "drop"}))
        ->capture_default_str();
  }

  medvar::IngestResult load() const {
    medvar::IngestOptions options = ingest;
    options.missing = missing == "drop" ? medvar::MissingPolicy::drop
                                        : medvar::MissingPolicy::error;
    return medvar::ingest_csv(path, options);
  }
};

medvar::EffectKind parse_effects(const std::string& s) {
  if (s == "fixed") return medvar::EffectKind::fixed;
  if (s == "random") return medvar::EffectKind::random_intercept;
  throw medvar::ConfigError("unknown effect kind '" + s + "'");
}

medvar::AssignmentMechanism make_mechanism(
    const std::string& spec, const medvar::Dataset& data,
    const medvar::AssignmentModel* assignment) {
  if (spec == "observed") {
    if (assignment == nullptr) {
      throw medvar::ConfigError(
          "observed mechanism needs a fitted assignment model");
    }
    return medvar::AssignmentMechanism::observed(data, *assignment);
  }
  if (spec == "uniform") return medvar::AssignmentMechanism::uniform(data);
  const std::string prefix = "custom:";
  if (spec.rfind(prefix, 0) == 0) {
    return medvar::AssignmentMechanism::from_csv(data,
                                                 spec.substr(prefix.size()));
  }
  throw medvar::ConfigError(
      "mechanism must be observed, uniform, or custom:PATH (got '" + spec +
      "')");
}

// ---------------------------------------------------------------- decompose

struct DecomposeFlags {
  DataFlags data;
  std::string outcome_family = "gaussian";
  std::string outcome_effects = "fixed";
  std::string mediator_effects = "fixed";
  bool interaction = false;
  std::string mechanism = "observed";
  int small_hospital_threshold = 40;
  int glmm_nodes = 15;
  int gh_nodes = 30;
  int max_iterations = 0;
  int bootstrap = 0;
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string keep_draws;
  std::string emit_grid;
  std::string output;
};

void attach_decompose(CLI::App* cmd, DecomposeFlags& f) {
  f.data.attach(cmd);
  cmd->add_option("--outcome-family", f.outcome_family,
                  "outcome distribution")
      ->check(CLI::IsMember({"gaussian", "binomial"}))
      ->capture_default_str();
  cmd->add_option("--outcome-effects", f.outcome_effects,
                  "hospital effects in the outcome model")
      ->check(CLI::IsMember({"fixed", "random"}))
      ->capture_default_str();
  cmd->add_option("--mediator-effects", f.mediator_effects,
                  "hospital effects in the mediator model")
      ->check(CLI::IsMember({"fixed", "random"}))
      ->capture_default_str();
  cmd->add_flag("--interaction", f.interaction,
                "hospital-mediator interaction in the outcome model");
  cmd->add_option("--mechanism", f.mechanism,
                  "hypothetical assignment: observed, uniform, or custom:PATH")
      ->capture_default_str();
  cmd->add_option("--small-hospital-threshold", f.small_hospital_threshold,
                  "hospitals below this size get intercept-only assignment scores")
      ->capture_default_str();
  cmd->add_option("--glmm-nodes", f.glmm_nodes,
                  "quadrature nodes for binomial random-intercept fits")
      ->capture_default_str();
  cmd->add_option("--gh-nodes", f.gh_nodes,
                  "quadrature nodes for continuous-mediator integrals")
      ->capture_default_str();
  cmd->add_option("--max-iterations", f.max_iterations,
                  "cap on model-fitting iterations (0 = library defaults)");
  cmd->add_option("--bootstrap", f.bootstrap,
                  "posterior draws for credible intervals (0 = skip)")
      ->capture_default_str();
  cmd->add_option("--level", f.level, "credible level")->capture_default_str();
  cmd->add_option("--seed", f.seed, "random seed")->capture_default_str();
  cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)")
      ->capture_default_str();
  cmd->add_option("--keep-draws", f.keep_draws,
                  "write retained posterior draws to this CSV");
  cmd->add_option("--emit-grid", f.emit_grid,
                  "write the per-patient potential-outcome grid to this CSV");
  cmd->add_option("--output", f.output,
                  "write the JSON report here ('-' = stdout, suppresses the table)");
}

int run_decompose(const DecomposeFlags& f) {
  const Timer timer;
  const medvar::IngestResult loaded = f.data.load();
  const medvar::Dataset& data = loaded.dataset;

  medvar::ModelSpec outcome_spec;
  outcome_spec.family = medvar::parse_family(f.outcome_family);
  outcome_spec.hospital_effects = parse_effects(f.outcome_effects);
  outcome_spec.covariates = data.covariate_names();
  outcome_spec.hospital_mediator_interaction = f.interaction;

  medvar::ModelSpec mediator_spec;
  mediator_spec.family = f.data.ingest.mediator_binary
                             ? medvar::Family::binomial
                             : medvar::Family::gaussian;
  mediator_spec.hospital_effects = parse_effects(f.mediator_effects);
  mediator_spec.covariates = data.covariate_names();

  medvar::FitOptions fit_options;
  fit_options.glmm.quadrature_nodes = f.glmm_nodes;
  if (f.max_iterations > 0) {
    fit_options.glm.max_iterations = f.max_iterations;
    fit_options.glmm.max_iterations = f.max_iterations;
  }

  const medvar::OutcomeModel outcome =
      medvar::fit_outcome_model(data, outcome_spec, fit_options);
  const medvar::MediatorModel mediator =
      medvar::fit_mediator_model(data, mediator_spec, fit_options);

  // The assignment model is only fitted when something consumes it: the
  // observed mechanism, or assignment-parameter draws for the bootstrap.
  std::optional<medvar::AssignmentModel> assignment;
  if (f.mechanism == "observed") {
    assignment =
        medvar::fit_assignment(data, f.small_hospital_threshold);
  }
  const medvar::AssignmentMechanism mechanism = make_mechanism(
      f.mechanism, data, assignment ? &*assignment : nullptr);

  medvar::DecomposeOptions decompose_options;
  decompose_options.gh_nodes = f.gh_nodes;

  medvar::DecomposeReport report;
  report.seed = f.seed;
  report.patients = data.n();
  report.hospitals = data.q();
  report.mechanism = f.mechanism;
  report.decomposition =
      medvar::decompose(data, outcome, mediator, mechanism, decompose_options);
  report.hospital_effects = medvar::hospital_effects(
      data, outcome, mediator, mechanism, decompose_options);
  report.models.push_back(medvar::summarize_model(outcome));
  report.models.push_back(medvar::summarize_model(mediator));
  if (assignment) report.models.push_back(medvar::summarize_model(*assignment));
  report.warnings = loaded.warnings;

  if (f.bootstrap > 0) {
    medvar::BootstrapOptions boot;
    boot.draws = f.bootstrap;
    boot.seed = f.seed;
    boot.threads = medvar::resolve_threads(f.threads);
    boot.level = f.level;
    boot.gh_nodes = f.gh_nodes;
    boot.refit = fit_options;
    const medvar::PosteriorDraws draws = medvar::draw_posterior(
        data, outcome, mediator, assignment ? &*assignment : nullptr,
        mechanism, boot);
    report.uncertainty = medvar::summarize_uncertainty(draws, f.level);
    for (const std::string& w : draws.warnings) report.warnings.push_back(w);
    if (!f.keep_draws.empty()) {
      std::string csv = "draw,omega0,omega1,omega2,omega3\n";
      char line[160];
      for (std::size_t i = 0; i < draws.draws.size(); ++i) {
        const medvar::Decomposition& d = draws.draws[i];
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n",
                      draws.draw_ids[i], d.omega0, d.omega1, d.omega2,
                      d.omega3);
        csv += line;
      }
      write_text(f.keep_draws, csv);
    }
  }

  if (!f.emit_grid.empty()) {
    medvar::write_grid_csv(f.emit_grid, data, outcome, mediator, f.gh_nodes);
  }

  report.timing_seconds = timer.seconds();
  const std::string table = medvar::render_table(report);
  if (f.output.empty()) {
    std::cout << table;
  } else if (f.output == "-") {
    std::cout << json_text(medvar::to_json(report));
  } else {
    write_text(f.output, json_text(medvar::to_json(report)));
    std::cout << table;
  }
  return 0;
}

// ---------------------------------------------------------------- summarize

int run_summarize(const DataFlags& data_flags, const std::string& output) {
  const medvar::IngestResult loaded = data_flags.load();
  const medvar::DatasetSummary summary = medvar::summarize(loaded.dataset);

  ordered_json j;
  j["schema_version"] = medvar::kReportSchemaVersion;
  j["software_version"] = medvar::kVersion;
  j["patients"] = loaded.dataset.n();
  j["hospitals"] = loaded.dataset.q();
  j["rows_dropped"] = loaded.rows_dropped;
  ordered_json rows = ordered_json::array();
  auto append = [&rows](const medvar::HospitalSummary& h) {
    ordered_json r;
    r["hospital"] = h.label;
    r["patients"] = h.patients;
    r["outcome_mean"] = h.outcome_mean;
    r["mediator_mean"] = h.mediator_mean;
    rows.push_back(std::move(r));
  };
  for (const medvar::HospitalSummary& h : summary.hospitals) append(h);
  append(summary.overall);
  j["hospitals_detail"] = std::move(rows);
  if (!loaded.warnings.empty()) j["warnings"] = loaded.warnings;

  if (output.empty() || output == "-") {
    std::cout << json_text(j);
  } else {
    write_text(output, json_text(j));
  }
  return 0;
}

// --------------------------------------------------------- scenario parsing

medvar::EffectKind effects_from_json(const ordered_json& j, const char* key,
                                     medvar::EffectKind fallback) {
  if (!j.contains(key)) return fallback;
  return parse_effects(j.at(key).get<std::string>());
}

struct Scenario {
  medvar::SimulationConfig config;
  medvar::EstimatorSettings settings;
  int replications = 200;
};

// Strict parse: unknown keys are configuration errors, not silent no-ops.
Scenario parse_scenario(const ordered_json& j) {
  static const std::vector<std::string> known = {
      "n", "q", "seed", "binary_outcome", "mediator_effect",
      "hospital_variance", "hospital_covariance",
      "assignment_intercept_variance", "assignment_slope_variance",
      "replications", "estimator"};
  static const std::vector<std::string> known_estimator = {
      "outcome_effects", "mediator_effects", "small_hospital_threshold",
      "glmm_nodes", "gh_nodes"};
  if (!j.is_object()) throw medvar::ConfigError("scenario must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw medvar::ConfigError("unknown scenario key '" + key + "'");
    }
  }
  Scenario s;
  medvar::SimulationConfig& c = s.config;
  if (j.contains("n")) c.n = j.at("n").get<int>();
  if (j.contains("q")) c.q = j.at("q").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("binary_outcome")) {
    c.binary_outcome = j.at("binary_outcome").get<bool>();
  }
  if (j.contains("mediator_effect")) {
    c.mediator_effect = j.at("mediator_effect").get<double>();
  }
  if (j.contains("hospital_variance")) {
    c.hospital_variance = j.at("hospital_variance").get<double>();
  }
  if (j.contains("hospital_covariance")) {
    c.hospital_covariance = j.at("hospital_covariance").get<double>();
  }
  if (j.contains("assignment_intercept_variance")) {
    c.assignment_intercept_variance =
        j.at("assignment_intercept_variance").get<double>();
  }
  if (j.contains("assignment_slope_variance")) {
    c.assignment_slope_variance =
        j.at("assignment_slope_variance").get<double>();
  }
  if (j.contains("replications")) {
    s.replications = j.at("replications").get<int>();
  }
  if (j.contains("estimator")) {
    const ordered_json& e = j.at("estimator");
    if (!e.is_object()) {
      throw medvar::ConfigError("scenario key 'estimator' must be an object");
    }
    for (const auto& [key, value] : e.items()) {
      if (std::find(known_estimator.begin(), known_estimator.end(), key) ==
          known_estimator.end()) {
        throw medvar::ConfigError("unknown estimator key '" + key + "'");
      }
    }
    medvar::EstimatorSettings& t = s.settings;
    t.outcome_effects =
        effects_from_json(e, "outcome_effects", t.outcome_effects);
    t.mediator_effects =
        effects_from_json(e, "mediator_effects", t.mediator_effects);
    if (e.contains("small_hospital_threshold")) {
      t.small_hospital_threshold = e.at("small_hospital_threshold").get<int>();
    }
    if (e.contains("glmm_nodes")) t.glmm_nodes = e.at("glmm_nodes").get<int>();
    if (e.contains("gh_nodes")) t.gh_nodes = e.at("gh_nodes").get<int>();
  }
  s.config.validate();
  if (s.replications < 1) {
    throw medvar::ConfigError("scenario needs at least one replication");
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw medvar::ConfigError("cannot read scenario file: " + path);
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw medvar::ConfigError("scenario file " + path + ": " + e.what());
  }
  return parse_scenario(j);
}

ordered_json scenario_to_json(const Scenario& s) {
  const medvar::SimulationConfig& c = s.config;
  ordered_json j;
  j["n"] = c.n;
  j["q"] = c.q;
  j["seed"] = c.seed;
  j["binary_outcome"] = c.binary_outcome;
  j["mediator_effect"] = c.mediator_effect;
  j["hospital_variance"] = c.hospital_variance;
  j["hospital_covariance"] = c.hospital_covariance;
  j["assignment_intercept_variance"] = c.assignment_intercept_variance;
  j["assignment_slope_variance"] = c.assignment_slope_variance;
  j["replications"] = s.replications;
  ordered_json e;
  e["outcome_effects"] =
      s.settings.outcome_effects == medvar::EffectKind::fixed ? "fixed"
                                                              : "random";
  e["mediator_effects"] =
      s.settings.mediator_effects == medvar::EffectKind::fixed ? "fixed"
                                                               : "random";
  e["small_hospital_threshold"] = s.settings.small_hospital_threshold;
  e["glmm_nodes"] = s.settings.glmm_nodes;
  e["gh_nodes"] = s.settings.gh_nodes;
  j["estimator"] = std::move(e);
  return j;
}

// ----------------------------------------------------------------- simulate

struct SimulateFlags {
  std::string config_path;
  int replications_override = 0;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
  int threads = 0;
  std::string output;
  std::string csv;
};

int run_simulate(const SimulateFlags& f) {
  const Timer timer;
  Scenario scenario = load_scenario(f.config_path);
  if (f.replications_override > 0) {
    scenario.replications = f.replications_override;
  }
  if (f.has_seed_override) scenario.config.seed = f.seed_override;

  const medvar::ScenarioSummary summary =
      medvar::run_scenario(scenario.config, scenario.replications,
                           scenario.settings,
                           medvar::resolve_threads(f.threads));

  if (!f.csv.empty()) {
    std::string csv = "replication,ok";
    for (const char* name : medvar::component_names()) {
      csv += ',';
      csv += name;
    }
    csv += ",error\n";
    char buffer[64];
    for (const medvar::ReplicationResult& r : summary.detail) {
      csv += std::to_string(r.replication);
      csv += r.ok ? ",1" : ",0";
      const medvar::Decomposition& d = r.estimate;
      for (double value : {d.total_variance, d.casemix, d.omega0, d.residual,
                           d.omega1, d.omega2, d.omega3}) {
        std::snprintf(buffer, sizeof buffer, ",%.17g", r.ok ? value : 0.0);
        csv += buffer;
      }
      csv += ',';
      csv += medvar::csv_escape(r.error);
      csv += '\n';
    }
    write_text(f.csv, csv);
  }

  ordered_json j;
  j["schema_version"] = medvar::kReportSchemaVersion;
  j["software_version"] = medvar::kVersion;
  j["seed"] = scenario.config.seed;
  j["scenario"] = scenario_to_json(scenario);
  j["replications"] = summary.replications;
  j["failures"] = summary.failures;
  ordered_json stats;
  for (std::size_t k = 0; k < medvar::component_names().size(); ++k) {
    const medvar::ComponentStats& cs = summary.stats[k];
    ordered_json row;
    row["mean"] = cs.mean;
    row["sd"] = cs.sd;
    row["se"] = cs.se;
    row["q025"] = cs.q025;
    row["q975"] = cs.q975;
    stats[medvar::component_names()[k]] = std::move(row);
  }
  j["components"] = std::move(stats);
  j["timing_seconds"] = timer.seconds();

  if (output_is_stdout(f.output)) {
    std::cout << json_text(j);
  } else {
    write_text(f.output, json_text(j));
  }
  return 0;
}

// ------------------------------------------------------------------- oracle

struct OracleFlags {
  std::string config_path;
  long draws = 1000000;
  int batches = 100;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
  std::string output;
  int threads = 0;
};

int run_oracle(const OracleFlags& f) {
  const Timer timer;
  Scenario scenario = load_scenario(f.config_path);
  if (f.has_seed_override) scenario.config.seed = f.seed_override;
  const medvar::ScenarioParameters params =
      medvar::draw_scenario_parameters(scenario.config);
  const medvar::OracleResult oracle =
      medvar::oracle_truth(scenario.config, params, f.draws, f.batches);

  ordered_json j;
  j["schema_version"] = medvar::kReportSchemaVersion;
  j["software_version"] = medvar::kVersion;
  j["seed"] = scenario.config.seed;
  j["scenario"] = scenario_to_json(scenario);
  j["draws"] = oracle.draws;
  j["batches"] = oracle.batches;
  auto components = [](const medvar::Decomposition& d) {
    ordered_json row;
    row["total_variance"] = d.total_variance;
    row["casemix"] = d.casemix;
    row["omega0"] = d.omega0;
    row["residual"] = d.residual;
    row["omega1"] = d.omega1;
    row["omega2"] = d.omega2;
    row["omega3"] = d.omega3;
    return row;
  };
  j["truth"] = components(oracle.truth);
  j["mc_se"] = components(oracle.se);
  j["timing_seconds"] = timer.seconds();

  if (output_is_stdout(f.output)) {
    std::cout << json_text(j);
  } else {
    write_text(f.output, json_text(j));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"between-hospital variance decomposition through a mediator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(medvar::kVersion));

  DecomposeFlags decompose_flags;
  CLI::App* decompose_cmd = app.add_subcommand(
      "decompose", "fit models and decompose between-hospital variance");
  attach_decompose(decompose_cmd, decompose_flags);

  DataFlags summarize_data;
  std::string summarize_output;
  int summarize_threads = 0;
  CLI::App* summarize_cmd =
      app.add_subcommand("summarize", "per-hospital outcome and mediator means");
  summarize_data.attach(summarize_cmd);
  summarize_cmd->add_option("--output", summarize_output,
                            "write the JSON summary here ('-' = stdout)");
  // Worker cap accepted on every subcommand; this one runs in a single pass.
  summarize_cmd->add_option("--threads", summarize_threads,
                            "worker threads (0 = all cores)");

  SimulateFlags simulate_flags;
  CLI::App* simulate_cmd = app.add_subcommand(
      "simulate", "run a replicated scenario from a JSON config");
  simulate_cmd
      ->add_option("--config", simulate_flags.config_path, "scenario JSON file")
      ->required();
  simulate_cmd->add_option("--replications", simulate_flags.replications_override,
                           "override the scenario replication count");
  CLI::Option* sim_seed = simulate_cmd->add_option(
      "--seed", simulate_flags.seed_override, "override the scenario seed");
  simulate_cmd->add_option("--threads", simulate_flags.threads,
                           "worker threads (0 = all cores)");
  simulate_cmd->add_option("--output", simulate_flags.output,
                           "write the JSON summary here ('-' = stdout)");
  simulate_cmd->add_option("--csv", simulate_flags.csv,
                           "write per-replication component estimates to this CSV");

  OracleFlags oracle_flags;
  CLI::App* oracle_cmd = app.add_subcommand(
      "oracle", "Monte Carlo truth for a scenario's variance components");
  oracle_cmd
      ->add_option("--config", oracle_flags.config_path, "scenario JSON file")
      ->required();
  oracle_cmd->add_option("--draws", oracle_flags.draws, "Monte Carlo draws")
      ->capture_default_str();
  oracle_cmd->add_option("--batches", oracle_flags.batches,
                         "batches for Monte Carlo standard errors")
      ->capture_default_str();
  CLI::Option* oracle_seed = oracle_cmd->add_option(
      "--seed", oracle_flags.seed_override, "override the scenario seed");
  oracle_cmd->add_option("--output", oracle_flags.output,
                         "write the JSON result here ('-' = stdout)");
  // Worker cap accepted on every subcommand; batches run sequentially so the
  // result is identical at any cap.
  oracle_cmd->add_option("--threads", oracle_flags.threads,
                         "worker threads (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  simulate_flags.has_seed_override = sim_seed->count() > 0;
  oracle_flags.has_seed_override = oracle_seed->count() > 0;

  try {
    if (decompose_cmd->parsed()) return run_decompose(decompose_flags);
    if (summarize_cmd->parsed()) {
      return run_summarize(summarize_data, summarize_output);
    }
    if (simulate_cmd->parsed()) return run_simulate(simulate_flags);
    if (oracle_cmd->parsed()) return run_oracle(oracle_flags);
  } catch (const medvar::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 1;
  } catch (const medvar::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const medvar::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

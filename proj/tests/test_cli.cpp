#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <medvar/medvar.hpp>

using namespace medvar;
using nlohmann::json;

namespace {

std::string cli_path() {
#ifdef MEDVAR_CLI_PATH
  return MEDVAR_CLI_PATH;
#else
  const char* path = std::getenv("MEDVAR_CLI_PATH");
  REQUIRE(path != nullptr);
  return path;
#endif
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

const std::string& work_dir() {
  static const std::string dir = [] {
    std::string d = "/tmp/medvar_cli_" + std::to_string(::getpid());
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

std::string work_path(const std::string& name) { return work_dir() + "/" + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const std::string base = work_path("io" + std::to_string(counter++));
  const std::string cmd =
      cli_path() + " " + args + " >" + base + ".out 2>" + base + ".err";
  const int status = std::system(cmd.c_str());
  CliResult result;
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(base + ".out");
  result.err = slurp(base + ".err");
  return result;
}

json parse_report(const std::string& path) {
  const std::string text = slurp(path);
  REQUIRE_FALSE(text.empty());
  return json::parse(text);
}

std::size_t count_lines(const std::string& text) {
  std::size_t lines = 0;
  for (char ch : text) {
    if (ch == '\n') ++lines;
  }
  return lines;
}

// Binary-outcome table for exit-code probes; written once per process.
const std::string& binary_csv() {
  static const std::string path = [] {
    SimulationConfig config;
    config.n = 150;
    config.q = 3;
    config.seed = 2;
    config.binary_outcome = true;
    config.mediator_effect = 1.0;
    config.hospital_variance = 0.5;
    const ScenarioParameters params = draw_scenario_parameters(config);
    const Dataset data = generate_dataset(config, params, 0);
    std::string csv = "hospital,m,y,x1,x2\n";
    char buffer[96];
    for (std::size_t i = 0; i < data.n(); ++i) {
      std::snprintf(buffer, sizeof buffer, "%s,%g,%g,%.17g,%g\n",
                    data.label(data.hospital(i)).c_str(), data.mediator(i),
                    data.outcome(i), data.covariate_row(i)(0),
                    data.covariate_row(i)(1));
      csv += buffer;
    }
    const std::string out = work_path("binary.csv");
    std::ofstream file(out, std::ios::binary);
    file << csv;
    return out;
  }();
  return path;
}

}  // namespace

TEST_CASE("decompose matches a direct library run bit for bit") {
  const std::string data_arg = fixture_path("two_hospital_linear.csv");
  const std::string report_path = work_path("fixture_report.json");
  const CliResult run = run_cli("decompose --data " + data_arg +
                                " --continuous-mediator --output " + report_path);
  INFO(run.err);
  REQUIRE(run.code == 0);
  REQUIRE(run.out.find("Source of variation") != std::string::npos);

  IngestOptions options;
  options.mediator_binary = false;
  const IngestResult loaded = ingest_csv(data_arg, options);
  ModelSpec outcome_spec;
  outcome_spec.family = Family::gaussian;
  ModelSpec mediator_spec;
  mediator_spec.family = Family::gaussian;
  const OutcomeModel outcome = fit_outcome_model(loaded.dataset, outcome_spec);
  const MediatorModel mediator = fit_mediator_model(loaded.dataset, mediator_spec);
  const AssignmentModel assignment = fit_assignment(loaded.dataset);
  const AssignmentMechanism mechanism =
      AssignmentMechanism::observed(loaded.dataset, assignment);
  const Decomposition direct =
      decompose(loaded.dataset, outcome, mediator, mechanism);

  const json report = parse_report(report_path);
  const json& d = report.at("decomposition");
  REQUIRE(d.at("omega0").get<double>() == direct.omega0);
  REQUIRE(d.at("omega1").get<double>() == direct.omega1);
  REQUIRE(d.at("omega2").get<double>() == direct.omega2);
  REQUIRE(d.at("omega3").get<double>() == direct.omega3);
  REQUIRE(d.at("casemix").get<double>() == direct.casemix);
  REQUIRE(d.at("residual").get<double>() == direct.residual);
  REQUIRE(d.at("total_variance").get<double>() == direct.total_variance);

  // Closed-form values for this fixture.
  REQUIRE(d.at("omega0").get<double>() == Catch::Approx(0.0625).margin(1e-8));
  REQUIRE(d.at("omega1").get<double>() == Catch::Approx(0.01).margin(1e-8));
  REQUIRE(d.at("omega2").get<double>() == Catch::Approx(0.0225).margin(1e-8));
  REQUIRE(d.at("omega3").get<double>() == Catch::Approx(0.03).margin(1e-8));
  REQUIRE(report.at("schema_version").get<std::string>() == "1");
  REQUIRE(report.at("patients").get<int>() == 10);
  REQUIRE(report.at("hospitals").get<int>() == 2);
  REQUIRE(report.at("mechanism").get<std::string>() == "observed");
  REQUIRE(report.at("model_summaries").size() == 3);
}

TEST_CASE("mechanism flavors run and differ where they should") {
  const std::string data_arg = fixture_path("two_hospital_linear.csv");
  const std::string uniform_path = work_path("uniform.json");
  const std::string custom_path = work_path("custom.json");

  CliResult run =
      run_cli("decompose --data " + data_arg +
              " --continuous-mediator --mechanism uniform --output " + uniform_path);
  INFO(run.err);
  REQUIRE(run.code == 0);
  const json uniform = parse_report(uniform_path);
  // Balanced hospitals with intercept-only scores: observed == uniform.
  REQUIRE(uniform.at("decomposition").at("omega0").get<double>() ==
          Catch::Approx(0.0625).margin(1e-8));
  // Uniform runs skip the assignment fit entirely.
  REQUIRE(uniform.at("model_summaries").size() == 2);

  run = run_cli("decompose --data " + data_arg +
                " --continuous-mediator --mechanism custom:" +
                fixture_path("two_hospital_custom.csv") + " --output " +
                custom_path);
  INFO(run.err);
  REQUIRE(run.code == 0);
  const json custom = parse_report(custom_path);
  REQUIRE(custom.at("mechanism").get<std::string>().rfind("custom:", 0) == 0);
  // Patient-varying weights move the casemix component off zero.
  REQUIRE(custom.at("decomposition").at("casemix").get<double>() > 1e-6);

  run = run_cli("decompose --data " + data_arg +
                " --continuous-mediator --mechanism nonsense");
  REQUIRE(run.code == 2);
  REQUIRE(run.err.find("mechanism") != std::string::npos);
}

TEST_CASE("configuration and data problems exit with code 2") {
  const std::string data_arg = fixture_path("two_hospital_linear.csv");

  CliResult run = run_cli("decompose --data " + data_arg +
                          " --continuous-mediator --mediator-column mm");
  REQUIRE(run.code == 2);
  REQUIRE(run.err.find("mm") != std::string::npos);

  run = run_cli("decompose --data /nonexistent/file.csv");
  REQUIRE(run.code == 2);

  run = run_cli("decompose");
  REQUIRE(run.code == 2);

  run = run_cli("decompose --data " + data_arg + " --no-such-flag");
  REQUIRE(run.code == 2);

  run = run_cli("decompose --data " + data_arg +
                " --continuous-mediator --outcome-family poisson");
  REQUIRE(run.code == 2);
}

TEST_CASE("numerical failures exit with code 1") {
  const CliResult run =
      run_cli("decompose --data " + binary_csv() +
              " --outcome-family binomial --max-iterations 1");
  REQUIRE(run.code == 1);
  REQUIRE(run.err.find("numerical error") != std::string::npos);
  REQUIRE(run.err.find("did not converge") != std::string::npos);

  // The same dataset converges under the default iteration budget.
  const CliResult healthy = run_cli("decompose --data " + binary_csv() +
                                    " --outcome-family binomial --output " +
                                    work_path("binary_report.json"));
  INFO(healthy.err);
  REQUIRE(healthy.code == 0);
}

TEST_CASE("bootstrap reports are thread-invariant modulo timing") {
  const std::string base = "decompose --data " + binary_csv() +
                           " --outcome-family binomial --bootstrap 24 --seed 11" +
                           " --keep-draws ";
  const CliResult one = run_cli(base + work_path("draws1.csv") +
                                " --threads 1 --output " + work_path("t1.json"));
  INFO(one.err);
  REQUIRE(one.code == 0);
  const CliResult four = run_cli(base + work_path("draws4.csv") +
                                 " --threads 4 --output " + work_path("t4.json"));
  INFO(four.err);
  REQUIRE(four.code == 0);

  json a = parse_report(work_path("t1.json"));
  json b = parse_report(work_path("t4.json"));
  REQUIRE(a.contains("timing_seconds"));
  a.erase("timing_seconds");
  b.erase("timing_seconds");
  REQUIRE(a.dump() == b.dump());

  // Retained draws are identical byte for byte.
  const std::string draws1 = slurp(work_path("draws1.csv"));
  const std::string draws4 = slurp(work_path("draws4.csv"));
  REQUIRE(draws1 == draws4);
  REQUIRE(draws1.rfind("draw,omega0,omega1,omega2,omega3\n", 0) == 0);
  REQUIRE(count_lines(draws1) == 25);

  const json& u = a.at("uncertainty");
  REQUIRE(u.at("draws_requested").get<int>() == 24);
  REQUIRE(u.at("level").get<double>() == 0.95);
  REQUIRE(u.at("credible_intervals").size() == 7);
}

TEST_CASE("the potential-outcome grid lands on disk") {
  const std::string grid_path = work_path("grid.csv");
  const CliResult run = run_cli(
      "decompose --data " + fixture_path("two_hospital_linear.csv") +
      " --continuous-mediator --emit-grid " + grid_path);
  INFO(run.err);
  REQUIRE(run.code == 0);
  const std::string grid = slurp(grid_path);
  REQUIRE(grid.rfind("patient,hospital,mediator_source,value\n", 0) == 0);
  REQUIRE(count_lines(grid) == 1 + 10 * 2 * 2);
}

TEST_CASE("json goes to stdout when asked") {
  const CliResult run =
      run_cli("decompose --data " + fixture_path("two_hospital_linear.csv") +
              " --continuous-mediator --output -");
  REQUIRE(run.code == 0);
  REQUIRE(run.out.find("Source of variation") == std::string::npos);
  const json report = json::parse(run.out);
  REQUIRE(report.at("decomposition").at("omega0").get<double>() ==
          Catch::Approx(0.0625).margin(1e-8));
}

TEST_CASE("summarize reports per-hospital means") {
  const CliResult run =
      run_cli("summarize --data " + fixture_path("two_hospital_linear.csv") +
              " --continuous-mediator --output -");
  INFO(run.err);
  REQUIRE(run.code == 0);
  const json j = json::parse(run.out);
  REQUIRE(j.at("patients").get<int>() == 10);
  REQUIRE(j.at("hospitals").get<int>() == 2);
  REQUIRE(j.at("rows_dropped").get<int>() == 0);
  const json& rows = j.at("hospitals_detail");
  REQUIRE(rows.size() == 3);
  REQUIRE(rows.at(0).at("hospital").get<std::string>() == "A");
  REQUIRE(rows.at(0).at("outcome_mean").get<double>() == Catch::Approx(0.36));
  REQUIRE(rows.at(0).at("mediator_mean").get<double>() == Catch::Approx(0.4));
  REQUIRE(rows.at(1).at("hospital").get<std::string>() == "B");
  REQUIRE(rows.at(1).at("outcome_mean").get<double>() == Catch::Approx(0.86));
  REQUIRE(rows.at(2).at("hospital").get<std::string>() == "(all)");
  REQUIRE(rows.at(2).at("patients").get<int>() == 10);
}

TEST_CASE("simulate runs a scenario file end to end") {
  const std::string out_path = work_path("sim.json");
  const std::string csv_path = work_path("sim.csv");
  const CliResult run =
      run_cli("simulate --config " + fixture_path("scenario_smoke.json") +
              " --threads 2 --output " + out_path + " --csv " + csv_path);
  INFO(run.err);
  REQUIRE(run.code == 0);

  const json j = parse_report(out_path);
  REQUIRE(j.at("schema_version").get<std::string>() == "1");
  REQUIRE(j.at("seed").get<int>() == 5);
  REQUIRE(j.at("scenario").at("n").get<int>() == 400);
  REQUIRE(j.at("scenario").at("q").get<int>() == 3);
  REQUIRE(j.at("replications").get<int>() == 4);
  REQUIRE(j.at("failures").get<int>() == 0);
  const json& components = j.at("components");
  REQUIRE(components.size() == 7);
  for (const char* name : {"total_variance", "casemix", "omega0", "residual",
                           "omega1", "omega2", "omega3"}) {
    REQUIRE(components.contains(name));
    REQUIRE(components.at(name).contains("mean"));
    REQUIRE(components.at(name).contains("sd"));
    REQUIRE(components.at(name).contains("se"));
    REQUIRE(components.at(name).contains("q025"));
    REQUIRE(components.at(name).contains("q975"));
  }

  const std::string csv = slurp(csv_path);
  REQUIRE(csv.rfind("replication,ok,total_variance,casemix,omega0,residual,"
                    "omega1,omega2,omega3,error\n",
                    0) == 0);
  REQUIRE(count_lines(csv) == 5);

  // Overrides rewrite the effective scenario.
  const CliResult redo =
      run_cli("simulate --config " + fixture_path("scenario_smoke.json") +
              " --replications 2 --seed 9 --output -");
  REQUIRE(redo.code == 0);
  const json j2 = json::parse(redo.out);
  REQUIRE(j2.at("seed").get<int>() == 9);
  REQUIRE(j2.at("replications").get<int>() == 2);
}

TEST_CASE("oracle reports scenario truth with batch errors") {
  const CliResult run =
      run_cli("oracle --config " + fixture_path("scenario_smoke.json") +
              " --draws 4000 --batches 10 --output -");
  INFO(run.err);
  REQUIRE(run.code == 0);
  const json j = json::parse(run.out);
  REQUIRE(j.at("draws").get<long>() == 4000);
  REQUIRE(j.at("batches").get<int>() == 10);
  for (const char* name : {"total_variance", "casemix", "omega0", "residual",
                           "omega1", "omega2", "omega3"}) {
    REQUIRE(j.at("truth").contains(name));
    REQUIRE(j.at("mc_se").contains(name));
  }
  const double omega0 = j.at("truth").at("omega0").get<double>();
  const double omega1 = j.at("truth").at("omega1").get<double>();
  const double omega2 = j.at("truth").at("omega2").get<double>();
  const double omega3 = j.at("truth").at("omega3").get<double>();
  REQUIRE(omega0 == Catch::Approx(omega1 + omega2 + omega3).margin(1e-10));
  REQUIRE(j.at("mc_se").at("omega0").get<double>() > 0.0);

  const CliResult bad = run_cli("oracle --config " +
                                fixture_path("scenario_smoke.json") +
                                " --draws 5 --batches 10");
  REQUIRE(bad.code == 2);
}

TEST_CASE("bad scenario files are configuration errors") {
  const std::string bad_path = work_path("bad_scenario.json");
  {
    std::ofstream out(bad_path, std::ios::binary);
    out << "{\"n\": 100, \"qq\": 3}\n";
  }
  CliResult run = run_cli("simulate --config " + bad_path);
  REQUIRE(run.code == 2);
  REQUIRE(run.err.find("qq") != std::string::npos);

  {
    std::ofstream out(bad_path, std::ios::binary);
    out << "not json at all\n";
  }
  run = run_cli("simulate --config " + bad_path);
  REQUIRE(run.code == 2);

  run = run_cli("simulate --config /nonexistent/scenario.json");
  REQUIRE(run.code == 2);
}

TEST_CASE("the version flag prints and exits cleanly") {
  const CliResult run = run_cli("--version");
  REQUIRE(run.code == 0);
  REQUIRE(run.out.find("0.1.0") != std::string::npos);
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ddpvf/ddpvf.hpp"

using Catch::Matchers::ContainsSubstring;
using namespace ddpvf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "ddpvf_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.is_open());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    return lines;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.is_open());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// capture what a command prints so tests can assert on it
struct CoutCapture {
    std::ostringstream stream;
    std::streambuf* previous;
    CoutCapture() : previous(std::cout.rdbuf(stream.rdbuf())) {}
    ~CoutCapture() { std::cout.rdbuf(previous); }
};

// a small synthetic study: one binary covariate shared by all three links
fs::path write_study_csv(const fs::path& dir, int n, std::uint64_t seed) {
    ScenarioCell cell;
    cell.params = cell_parameters(scenario_one_config(), 0.5);
    cell.covariate_bernoulli = 0.5;
    cell.tau = 150.0;
    Rng rng(seed, 0, 0);
    const std::vector<SurvivalRecord> data = generate_dataset(cell, n, rng);
    const fs::path path = dir / "study.csv";
    std::ofstream out(path);
    out << "time,event,exposed\n";
    out.precision(12);
    for (const auto& rec : data) {
        out << rec.time << ',' << rec.event << ',' << rec.w[1] << '\n';
    }
    return path;
}

fs::path write_study_schema(const fs::path& dir) {
    const fs::path path = dir / "schema.json";
    write_file(path, R"({
  "time": "time",
  "event": "event",
  "alpha_covariates": ["exposed"],
  "beta_covariates": ["exposed"],
  "cure_covariates": ["exposed"]
})");
    return path;
}

}  // namespace

TEST_CASE("csv ingestion applies the schema and reports rejected rows",
          "[io][ingest]") {
    const fs::path dir = fresh_dir("ingest");
    const fs::path csv = dir / "data.csv";
    write_file(csv,
               "time,event,dose,clinic\n"
               "12.5,1,0.5,A\n"
               "0,1,0.1,A\n"
               "7,0,0.4,B\n"
               "oops,1,0.2,B\n"
               "3,2,0.3,A\n"
               "5,1,NA,A\n"
               "8,1,0.9,B\n"
               ",0,0.1,A\n"
               "4,1,0.2\n");

    IngestSchema schema;
    schema.alpha_covariates = {"dose"};
    schema.beta_covariates = {"dose"};
    schema.cure_covariates = {"dose", "clinic"};
    schema.reference_levels["clinic"] = "A";
    schema.group_column = "clinic";

    const IngestResult result = ingest(csv.string(), schema);
    REQUIRE(result.rows_read == 9);
    REQUIRE(result.records.size() == 3);
    REQUIRE(result.alpha_names == std::vector<std::string>{"intercept", "dose"});
    REQUIRE(result.cure_names ==
            std::vector<std::string>{"intercept", "dose", "clinic=B"});
    REQUIRE(result.groups == std::vector<std::string>{"A", "B", "B"});

    REQUIRE(result.records[0].time == 12.5);
    REQUIRE(result.records[0].event == 1);
    REQUIRE(result.records[0].w == std::vector<double>{1.0, 0.5});
    REQUIRE(result.records[0].z == std::vector<double>{1.0, 0.5, 0.0});
    REQUIRE(result.records[1].z == std::vector<double>{1.0, 0.4, 1.0});
    REQUIRE(result.records[2].z == std::vector<double>{1.0, 0.9, 1.0});

    std::set<int> rejected_lines;
    for (const auto& rejection : result.rejections) {
        REQUIRE_FALSE(rejection.reason.empty());
        rejected_lines.insert(rejection.line);
    }
    REQUIRE(rejected_lines == std::set<int>{3, 5, 6, 7, 9, 10});
    REQUIRE_THAT(result.rejections[0].reason, ContainsSubstring("time"));
}

TEST_CASE("categorical expansion is deterministic and reference-aware",
          "[io][ingest]") {
    const fs::path dir = fresh_dir("levels");
    const fs::path csv = dir / "data.csv";
    write_file(csv,
               "time,event,site\n"
               "3,1,C\n"
               "5,0,A\n"
               "2,1,B\n"
               "9,1,C\n");
    IngestSchema schema;
    schema.cure_covariates = {"site"};
    schema.reference_levels["site"] = "B";
    const IngestResult result = ingest(csv.string(), schema);
    REQUIRE(result.cure_names ==
            std::vector<std::string>{"intercept", "site=A", "site=C"});
    REQUIRE(result.records[0].z == std::vector<double>{1.0, 0.0, 1.0});
    REQUIRE(result.records[2].z == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("structural ingestion problems throw with named columns", "[io][ingest]") {
    const fs::path dir = fresh_dir("ingest_errors");
    const fs::path csv = dir / "data.csv";
    write_file(csv, "time,event\n1,1\n");
    IngestSchema schema;
    schema.time_column = "when";
    REQUIRE_THROWS_WITH(ingest(csv.string(), schema), ContainsSubstring("when"));

    REQUIRE_THROWS_AS(ingest((dir / "missing.csv").string(), IngestSchema{}),
                      std::invalid_argument);

    const fs::path empty = dir / "empty.csv";
    write_file(empty, "");
    REQUIRE_THROWS_AS(ingest(empty.string(), IngestSchema{}), std::invalid_argument);
}

TEST_CASE("JSON reports survive a byte-identical round-trip", "[io][json]") {
    const fs::path dir = fresh_dir("json");
    nlohmann::json doc;
    doc["models"]["dd"]["log_likelihood"] = -6202.921;
    doc["models"]["dd"]["converged"] = true;
    doc["models"]["dd"]["gamma"] = nullptr;
    doc["ranking"] = {"dd", "dd-gamma"};
    doc["seed"] = 123456789;
    const fs::path first = dir / "a.json";
    const fs::path second = dir / "b.json";
    save_json(first.string(), doc);
    save_json(second.string(), load_json(first.string()));
    REQUIRE(read_file(first) == read_file(second));

    SECTION("parse failures identify the file") {
        const fs::path bad = dir / "bad.json";
        write_file(bad, "{ not json");
        REQUIRE_THROWS_AS(load_json(bad.string()), std::invalid_argument);
    }
}

TEST_CASE("schema files populate every field", "[io][schema]") {
    const fs::path dir = fresh_dir("schema");
    const fs::path path = dir / "schema.json";
    write_file(path, R"({
  "time": "followup",
  "event": "status",
  "alpha_covariates": ["age"],
  "beta_covariates": ["age", "stage"],
  "cure_covariates": ["stage"],
  "reference_levels": {"stage": "I"},
  "group": "site",
  "time_unit": "months",
  "delimiter": ";"
})");
    const IngestSchema schema = load_schema(path.string());
    REQUIRE(schema.time_column == "followup");
    REQUIRE(schema.event_column == "status");
    REQUIRE(schema.alpha_covariates == std::vector<std::string>{"age"});
    REQUIRE(schema.beta_covariates == std::vector<std::string>{"age", "stage"});
    REQUIRE(schema.cure_covariates == std::vector<std::string>{"stage"});
    REQUIRE(schema.reference_levels.at("stage") == "I");
    REQUIRE(schema.group_column == "site");
    REQUIRE(schema.time_unit == "months");
    REQUIRE(schema.delimiter == ';');

    SECTION("field diagnostics name the offending entry") {
        const fs::path bad = dir / "bad.json";
        write_file(bad, R"({"time": "t", "event": "e", "delimiter": "::"})");
        REQUIRE_THROWS_WITH(load_schema(bad.string()), ContainsSubstring("delimiter"));
        write_file(bad, R"({"time": "t", "event": "e", "reference_levels": [1, 2]})");
        REQUIRE_THROWS_WITH(load_schema(bad.string()),
                            ContainsSubstring("reference_levels"));
        write_file(bad, R"({"time": "t", "event": "e", "alpha_covariates": [1]})");
        REQUIRE_THROWS_WITH(load_schema(bad.string()),
                            ContainsSubstring("alpha_covariates"));
        write_file(bad, R"({"event": "e"})");
        REQUIRE_THROWS_WITH(load_schema(bad.string()), ContainsSubstring("time"));
    }
}

TEST_CASE("scenario configuration files override the presets", "[io][config]") {
    const fs::path dir = fresh_dir("scenario");
    const fs::path path = dir / "study.json";
    write_file(path, R"({
  "scenario": 2,
  "family": "gamma",
  "covariate_bernoulli": 0.2,
  "sample_sizes": [100, 200],
  "sigma2_values": [5],
  "replicates": 7,
  "seed": 99
})");
    const ScenarioConfig cfg = load_scenario_config(path.string());
    REQUIRE(cfg.scenario == Scenario::Two);
    REQUIRE(cfg.true_params.frailty.family == FrailtyFamily::Gamma);
    REQUIRE(cfg.covariate_bernoulli == 0.2);
    REQUIRE(cfg.sample_sizes == std::vector<int>{100, 200});
    REQUIRE(cfg.sigma2_values == std::vector<double>{5.0});
    REQUIRE(cfg.replicates == 7);
    REQUIRE(cfg.seed == 99);
    REQUIRE(cfg.target_censoring == 0.91);  // preset value kept

    SECTION("invalid scenario identifiers are rejected") {
        const fs::path bad = dir / "bad.json";
        write_file(bad, R"({"scenario": 3})");
        REQUIRE_THROWS_WITH(load_scenario_config(bad.string()),
                            ContainsSubstring("scenario"));
        write_file(bad, R"({})");
        REQUIRE_THROWS_WITH(load_scenario_config(bad.string()),
                            ContainsSubstring("scenario"));
    }
}

TEST_CASE("the km command writes per-group curves", "[cli][km]") {
    const fs::path dir = fresh_dir("cli_km");
    const fs::path csv = dir / "data.csv";
    write_file(csv,
               "time,event,clinic\n"
               "1,1,A\n"
               "2,1,A\n"
               "3,0,A\n"
               "4,1,B\n"
               "5,0,B\n"
               "6,0,C\n"
               "7,0,C\n");
    CoutCapture capture;
    const int rc = run_cli({"km", "--data", csv.string(), "--group-by", "clinic",
                            "--out-dir", dir.string()});
    REQUIRE(rc == 0);
    REQUIRE_THAT(capture.stream.str(), ContainsSubstring("group A"));

    const std::vector<std::string> a_lines = read_lines(dir / "km_A.csv");
    REQUIRE(a_lines.size() == 3);  // header plus one knot per event time
    REQUIRE(a_lines[0] == "time,survival");
    const std::vector<std::string> var_lines = read_lines(dir / "km_A_greenwood.csv");
    REQUIRE(var_lines.size() == 3);
    REQUIRE(var_lines[0] == "time,variance");
    REQUIRE(read_lines(dir / "km_B.csv").size() == 2);
    // a group without events yields an empty curve but still a file
    REQUIRE(read_lines(dir / "km_C.csv").size() == 1);
}

TEST_CASE("the hazard command writes smoothed curves", "[cli][hazard]") {
    const fs::path dir = fresh_dir("cli_hazard");
    const fs::path csv = write_study_csv(dir, 300, 41);
    CoutCapture capture;
    const int rc = run_cli({"hazard", "--data", csv.string(), "--out-dir",
                            dir.string(), "--bandwidth", "5"});
    REQUIRE(rc == 0);
    const std::vector<std::string> lines = read_lines(dir / "hazard_all.csv");
    REQUIRE(lines.size() == 202);
    REQUIRE(lines[0] == "time,hazard");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t comma = lines[i].find(',');
        REQUIRE(std::stod(lines[i].substr(comma + 1)) >= 0.0);
    }
    REQUIRE_THAT(capture.stream.str(), ContainsSubstring("bandwidth"));
}

TEST_CASE("the fit command produces a complete report", "[cli][fit][slow]") {
    const fs::path dir = fresh_dir("cli_fit");
    const fs::path csv = write_study_csv(dir, 400, 42);
    const fs::path schema = write_study_schema(dir);

    CoutCapture capture;
    const int rc = run_cli({"fit", "--data", csv.string(), "--schema", schema.string(),
                            "--out-dir", dir.string(), "--seed", "42", "--multistart",
                            "1", "--model", "dd,dd-gamma"});
    REQUIRE(rc == 0);
    REQUIRE_THAT(capture.stream.str(), ContainsSubstring("seed: 42"));
    REQUIRE_THAT(capture.stream.str(), ContainsSubstring("preferred"));

    const nlohmann::json report = load_json((dir / "fit_report.json").string());
    REQUIRE(report.at("schema_version") == 1);
    REQUIRE(report.at("seed") == 42);
    REQUIRE(report.at("data").at("rows_read") == 400);
    REQUIRE(report.at("data").at("records_used") == 400);
    REQUIRE(report.at("models").size() == 2);
    REQUIRE(report.at("ranking").size() == 2);
    const std::string preferred = report.at("preferred_model");
    REQUIRE(report.at("models").contains(preferred));

    const nlohmann::json& gamma_model = report.at("models").at("dd-gamma");
    REQUIRE(gamma_model.at("converged").is_boolean());
    REQUIRE(gamma_model.at("parameter_count") == 7);
    REQUIRE(gamma_model.at("criteria").at("aic").is_number());
    REQUIRE(gamma_model.at("parameters").size() == 7);
    for (const auto& param : gamma_model.at("parameters")) {
        REQUIRE(param.contains("name"));
        REQUIRE(param.contains("estimate"));
        REQUIRE(param.contains("standard_error"));
    }
    REQUIRE(gamma_model.at("cure_table").size() == 2);
    for (const auto& row : gamma_model.at("cure_table")) {
        REQUIRE(row.at("theta_ci_contains_one").is_boolean());
        REQUIRE(row.at("count").is_number());
    }
    REQUIRE(fs::exists(dir / gamma_model.at("survival_curve_file").get<std::string>()));
    REQUIRE(fs::exists(dir / "survival_dd.csv"));
    REQUIRE(fs::exists(dir / "fit_summary.txt"));
    REQUIRE_THAT(read_file(dir / "fit_summary.txt"), ContainsSubstring("AIC"));

    SECTION("the report feeds Kaplan-Meier overlays") {
        const int km_rc =
            run_cli({"km", "--data", csv.string(), "--schema", schema.string(),
                     "--out-dir", dir.string(), "--quiet", "--fit-report",
                     (dir / "fit_report.json").string()});
        REQUIRE(km_rc == 0);
        const std::vector<std::string> overlay = read_lines(dir / "km_overlay_dd.csv");
        const std::vector<std::string> km = read_lines(dir / "km_all.csv");
        REQUIRE(overlay.size() == km.size());
    }
    SECTION("overlays refuse a schema that no longer matches the report") {
        const int km_rc = run_cli({"km", "--data", csv.string(), "--out-dir",
                                   dir.string(), "--quiet", "--fit-report",
                                   (dir / "fit_report.json").string()});
        REQUIRE(km_rc != 0);
    }
}

TEST_CASE("the fit command exposes the gamma profile", "[cli][fit][slow]") {
    const fs::path dir = fresh_dir("cli_profile");
    const fs::path csv = write_study_csv(dir, 400, 43);
    const fs::path schema = write_study_schema(dir);

    CoutCapture capture;
    const int rc = run_cli({"fit", "--data", csv.string(), "--schema", schema.string(),
                            "--out-dir", dir.string(), "--seed", "7", "--multistart",
                            "1", "--model", "dd-pvf", "--profile", "--gamma-grid",
                            "0.4,0.6"});
    REQUIRE(rc == 0);
    const nlohmann::json report = load_json((dir / "fit_report.json").string());
    const nlohmann::json& profile =
        report.at("models").at("dd-pvf").at("gamma_profile");
    REQUIRE(profile.size() == 2);
    REQUIRE(profile[0][0] == 0.4);
    REQUIRE(profile[1][0] == 0.6);
    const double gamma_hat =
        report.at("models").at("dd-pvf").at("estimates").at("gamma");
    REQUIRE((gamma_hat == 0.4 || gamma_hat == 0.6));
}

TEST_CASE("the simulate command writes study summaries", "[cli][simulate][slow]") {
    const fs::path dir = fresh_dir("cli_simulate");
    const fs::path config = dir / "study.json";
    write_file(config, R"({
  "scenario": 1,
  "sample_sizes": [250],
  "sigma2_values": [0.5],
  "replicates": 2,
  "pilot_n": 4000,
  "seed": 77
})");
    CoutCapture capture;
    const int rc = run_cli({"simulate", "--config", config.string(), "--out-dir",
                            dir.string(), "--quiet"});
    REQUIRE(rc == 0);
    const nlohmann::json summary = load_json((dir / "mc_summary.json").string());
    REQUIRE(summary.at("cells").size() == 1);
    const nlohmann::json& cell = summary.at("cells")[0];
    REQUIRE(cell.at("n") == 250);
    REQUIRE(cell.at("replicates") == 2);
    REQUIRE(cell.at("parameters").size() == 7);
    for (const auto& param : cell.at("parameters")) {
        REQUIRE(param.contains("name"));
        REQUIRE(param.contains("truth"));
        REQUIRE(param.contains("bias"));
        REQUIRE(param.contains("rmse"));
        REQUIRE(param.contains("coverage"));
    }
    REQUIRE(cell.at("ic_prefers_frailty").size() == 5);
    REQUIRE(fs::exists(dir / "mc_summary.txt"));
}

TEST_CASE("command errors exit nonzero", "[cli][errors]") {
    const fs::path dir = fresh_dir("cli_errors");
    SECTION("missing required data flag") {
        REQUIRE(run_cli({"fit"}) != 0);
    }
    SECTION("unknown model name") {
        const fs::path csv = write_study_csv(dir, 50, 44);
        REQUIRE(run_cli({"fit", "--data", csv.string(), "--out-dir", dir.string(),
                         "--model", "weibull"}) != 0);
    }
    SECTION("missing data file") {
        REQUIRE(run_cli({"km", "--data", (dir / "nope.csv").string(), "--out-dir",
                         dir.string()}) != 0);
    }
    SECTION("simulate requires a preset or config") {
        REQUIRE(run_cli({"simulate", "--out-dir", dir.string()}) != 0);
    }
}

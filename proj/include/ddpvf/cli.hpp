#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddpvf/data_io.hpp"
#include "ddpvf/estimation.hpp"
#include "ddpvf/nonparametric.hpp"
#include "ddpvf/regression.hpp"
#include "ddpvf/simulation.hpp"

namespace ddpvf {
inline namespace cli {

namespace detail {

struct CliOptions {
    std::string data_path;
    std::string schema_path;
    std::string config_path;
    std::string out_dir = ".";
    std::string models = "all";
    std::string gamma_grid;
    std::string group_by;
    std::string fit_report;
    std::string delimiter;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int scenario = 0;
    int replicates = 0;
    int multistart = 0;
    int threads = 0;
    double confidence_level = 0.95;
    double bandwidth = 0.0;
    bool profile = false;
    bool quiet = false;
};

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream stream(text);
    while (std::getline(stream, item, ',')) {
        const std::string trimmed = data_io::detail::trim(item);
        if (!trimmed.empty()) {
            out.push_back(trimmed);
        }
    }
    return out;
}

inline std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    for (const std::string& item : split_list(text)) {
        double value = 0.0;
        if (!data_io::detail::parse_number(item, value)) {
            throw std::invalid_argument("cannot parse '" + item + "' in " + what);
        }
        out.push_back(value);
    }
    if (out.empty()) {
        throw std::invalid_argument(what + " must contain at least one value");
    }
    return out;
}

inline std::string sanitize_filename(const std::string& raw) {
    std::string out;
    for (const char c : raw) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '_';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? std::string("group") : out;
}

inline const std::vector<std::string>& known_models() {
    static const std::vector<std::string> names = {"dd", "dd-gamma", "dd-ig", "dd-pvf"};
    return names;
}

inline FrailtySpec model_spec(const std::string& name) {
    if (name == "dd") {
        return FrailtySpec::none();
    }
    if (name == "dd-gamma") {
        return FrailtySpec::gamma_frailty(0.5);
    }
    if (name == "dd-ig") {
        return FrailtySpec::inverse_gaussian(0.5);
    }
    if (name == "dd-pvf") {
        return FrailtySpec::pvf(0.5, 0.5);
    }
    throw std::invalid_argument("unknown model '" + name +
                                "' (expected dd, dd-gamma, dd-ig, dd-pvf or all)");
}

inline std::vector<std::string> resolve_models(const std::string& requested) {
    std::vector<std::string> names;
    for (const std::string& item : split_list(requested)) {
        if (item == "all") {
            return known_models();
        }
        model_spec(item);  // validates the name
        if (std::find(names.begin(), names.end(), item) == names.end()) {
            names.push_back(item);
        }
    }
    if (names.empty()) {
        throw std::invalid_argument("--model must name at least one model");
    }
    return names;
}

inline std::string family_name(FrailtyFamily family) {
    switch (family) {
        case FrailtyFamily::None:
            return "none";
        case FrailtyFamily::Gamma:
            return "gamma";
        case FrailtyFamily::InverseGaussian:
            return "inverse_gaussian";
        case FrailtyFamily::Pvf:
            return "pvf";
    }
    return "none";
}

inline std::uint64_t resolve_seed(CliOptions& opt) {
    if (!opt.seed_given) {
        std::random_device device;
        opt.seed = (static_cast<std::uint64_t>(device()) << 32) ^ device();
    }
    return opt.seed;
}

inline IngestSchema resolve_schema(const CliOptions& opt) {
    IngestSchema schema;
    if (!opt.schema_path.empty()) {
        schema = load_schema(opt.schema_path);
    }
    if (!opt.delimiter.empty()) {
        if (opt.delimiter.size() != 1) {
            throw std::invalid_argument("--delimiter must be a single character");
        }
        schema.delimiter = opt.delimiter[0];
    }
    if (!opt.group_by.empty()) {
        schema.group_column = opt.group_by;
    }
    return schema;
}

inline IngestResult load_records(const CliOptions& opt, const IngestSchema& schema,
                                 std::ostream& log) {
    if (opt.data_path.empty()) {
        throw std::invalid_argument("--data is required");
    }
    IngestResult ingested = ingest(opt.data_path, schema);
    if (!opt.quiet && !ingested.rejections.empty()) {
        log << "rejected " << ingested.rejections.size() << " of " << ingested.rows_read
            << " rows:\n";
        for (const auto& rejection : ingested.rejections) {
            log << "  line " << rejection.line << ": " << rejection.reason << '\n';
        }
    }
    if (ingested.records.empty()) {
        throw std::invalid_argument("no usable rows in '" + opt.data_path + "'");
    }
    return ingested;
}

// Distinct covariate rows ordered by descending frequency, ties broken
// lexicographically, so reports are stable across runs.
template <typename RowOf>
std::vector<std::pair<std::vector<double>, int>> distinct_rows(
    const std::vector<SurvivalRecord>& records, RowOf row_of, std::size_t cap) {
    std::map<std::vector<double>, int> counts;
    for (const auto& rec : records) {
        ++counts[row_of(rec)];
    }
    std::vector<std::pair<std::vector<double>, int>> rows(counts.begin(), counts.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    if (rows.size() > cap) {
        rows.resize(cap);
    }
    return rows;
}

inline nlohmann::json json_double(double value) {
    if (std::isfinite(value)) {
        return value;
    }
    return nullptr;  // JSON has no NaN/inf; reports use null
}

inline std::vector<std::string> display_parameter_names(const ParameterShape& shape,
                                                        const IngestResult& ingested) {
    std::vector<std::string> names;
    if (ingested.alpha_names.size() == shape.zeta_size &&
        ingested.beta_names.size() == shape.eta_size &&
        ingested.cure_names.size() == shape.nu_size) {
        for (const std::string& name : ingested.alpha_names) {
            names.push_back("alpha:" + name);
        }
        for (const std::string& name : ingested.beta_names) {
            names.push_back("beta:" + name);
        }
        for (const std::string& name : ingested.cure_names) {
            names.push_back("cure:" + name);
        }
        if (shape.family != FrailtyFamily::None) {
            names.emplace_back("sigma2");
        }
        if (shape.family == FrailtyFamily::Pvf) {
            names.emplace_back("gamma");
        }
        return names;
    }
    return shape.parameter_names();
}

inline void write_columns(const std::string& path, const std::vector<std::string>& names,
                          const std::vector<std::vector<double>>& columns) {
    std::ofstream out(path);
    if (!out) {
        throw std::invalid_argument("cannot write to '" + path + "'");
    }
    out.precision(12);
    for (std::size_t j = 0; j < names.size(); ++j) {
        out << (j == 0 ? "" : ",") << names[j];
    }
    out << '\n';
    const std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) {
            out << (j == 0 ? "" : ",") << columns[j][i];
        }
        out << '\n';
    }
}

inline std::string format_double(double value, int width, int precision) {
    std::ostringstream out;
    if (std::isfinite(value)) {
        out << std::fixed << std::setprecision(precision) << value;
    } else {
        out << "--";
    }
    std::string text = out.str();
    if (static_cast<int>(text.size()) < width) {
        text.insert(text.begin(), static_cast<std::size_t>(width) - text.size(), ' ');
    }
    return text;
}

inline ModelParameters parameters_from_report(const nlohmann::json& estimates) {
    ModelParameters params;
    params.zeta = data_io::detail::json_number_array(estimates, "zeta", "estimates.zeta");
    params.eta = data_io::detail::json_number_array(estimates, "eta", "estimates.eta");
    params.nu = data_io::detail::json_number_array(estimates, "nu", "estimates.nu");
    const std::string family =
        data_io::detail::json_string(estimates, "family", "estimates.family");
    if (family == "none") {
        params.frailty = FrailtySpec::none();
    } else {
        const double sigma2 =
            data_io::detail::json_number(estimates, "sigma2", "estimates.sigma2");
        if (family == "gamma") {
            params.frailty = FrailtySpec::gamma_frailty(sigma2);
        } else if (family == "inverse_gaussian") {
            params.frailty = FrailtySpec::inverse_gaussian(sigma2);
        } else if (family == "pvf") {
            params.frailty = FrailtySpec::pvf(
                data_io::detail::json_number(estimates, "gamma", "estimates.gamma"), sigma2);
        } else {
            throw std::invalid_argument("unknown family '" + family + "' in fit report");
        }
    }
    return params;
}

inline int cmd_fit(CliOptions& opt) {
    const std::uint64_t seed = resolve_seed(opt);
    if (!opt.quiet) {
        std::cout << "seed: " << seed << '\n';
    }
    const IngestSchema schema = resolve_schema(opt);
    const IngestResult ingested = load_records(opt, schema, std::cout);
    const std::vector<SurvivalRecord>& records = ingested.records;

    FitConfig config;
    config.seed = seed;
    config.confidence_level = opt.confidence_level;
    if (!opt.gamma_grid.empty()) {
        config.gamma_grid = parse_double_list(opt.gamma_grid, "--gamma-grid");
    }
    if (opt.multistart > 0) {
        config.multistart_count = opt.multistart;
    }

    const std::vector<std::string> model_names = resolve_models(opt.models);
    std::filesystem::create_directories(opt.out_dir);

    const FitResult dd_fit = fit_mle(records, FrailtySpec::none(), config);
    std::vector<std::string> fitted_names;
    std::vector<FitResult> fits;
    for (const std::string& name : model_names) {
        if (name == "dd") {
            fits.push_back(dd_fit);
        } else if (name == "dd-pvf" && opt.profile) {
            fits.push_back(profile_fit_gamma(records, config));
        } else {
            fits.push_back(fit_mle(records, model_spec(name), config, &dd_fit.estimates));
        }
        fitted_names.push_back(name);
    }

    double max_time = 0.0;
    for (const auto& rec : records) {
        max_time = std::max(max_time, rec.time);
    }
    const auto z_profiles = distinct_rows(
        records, [](const SurvivalRecord& rec) { return rec.z; }, 32);
    const auto full_profiles = distinct_rows(
        records,
        [](const SurvivalRecord& rec) {
            std::vector<double> row = rec.w;
            row.insert(row.end(), rec.x.begin(), rec.x.end());
            row.insert(row.end(), rec.z.begin(), rec.z.end());
            return row;
        },
        8);

    nlohmann::json report;
    report["schema_version"] = 1;
    report["command"] = "fit";
    report["seed"] = seed;
    report["confidence_level"] = opt.confidence_level;
    nlohmann::json data_info;
    data_info["path"] = opt.data_path;
    data_info["rows_read"] = ingested.rows_read;
    data_info["records_used"] = records.size();
    data_info["events"] = fits.front().event_count;
    data_info["time_unit"] = schema.time_unit;
    nlohmann::json rejections = nlohmann::json::array();
    for (const auto& rejection : ingested.rejections) {
        rejections.push_back({{"line", rejection.line}, {"reason", rejection.reason}});
    }
    data_info["rejections"] = rejections;
    report["data"] = data_info;

    nlohmann::json models_json;
    for (std::size_t m = 0; m < fits.size(); ++m) {
        const FitResult& fit = fits[m];
        nlohmann::json entry;
        entry["family"] = family_name(fit.shape.family);
        entry["log_likelihood"] = json_double(fit.log_likelihood);
        entry["converged"] = fit.converged;
        entry["singular_information"] = fit.singular_information;
        entry["iterations"] = fit.iterations;
        entry["parameter_count"] = fit.parameter_count;
        nlohmann::json criteria;
        criteria["aic"] = json_double(fit.criteria.aic);
        criteria["aicc"] =
            fit.criteria.aicc_defined ? json_double(fit.criteria.aicc) : nlohmann::json();
        criteria["bic"] = json_double(fit.criteria.bic);
        criteria["hqic"] = json_double(fit.criteria.hqic);
        criteria["caic"] = json_double(fit.criteria.caic);
        entry["criteria"] = criteria;

        const std::vector<double> natural =
            natural_parameter_vector(fit.estimates, fit.shape);
        const std::vector<std::string> names = display_parameter_names(fit.shape, ingested);
        nlohmann::json parameters = nlohmann::json::array();
        for (std::size_t j = 0; j < natural.size(); ++j) {
            nlohmann::json row;
            row["name"] = names[j];
            row["estimate"] = json_double(natural[j]);
            row["standard_error"] = json_double(fit.standard_errors[j]);
            row["ci_lower"] = json_double(fit.confidence_intervals[j].first);
            row["ci_upper"] = json_double(fit.confidence_intervals[j].second);
            parameters.push_back(row);
        }
        entry["parameters"] = parameters;

        nlohmann::json estimates;
        estimates["zeta"] = fit.estimates.zeta;
        estimates["eta"] = fit.estimates.eta;
        estimates["nu"] = fit.estimates.nu;
        estimates["family"] = family_name(fit.estimates.frailty.family);
        if (fit.estimates.frailty.family != FrailtyFamily::None) {
            estimates["sigma2"] = fit.estimates.frailty.sigma2;
        }
        if (fit.estimates.frailty.family == FrailtyFamily::Pvf) {
            estimates["gamma"] = fit.estimates.frailty.gamma;
        }
        entry["estimates"] = estimates;

        nlohmann::json cure_table = nlohmann::json::array();
        for (const auto& [z, count] : z_profiles) {
            const DeltaResult p0 =
                delta_method_transform(fit, cure_fraction_at, z, opt.confidence_level);
            const DeltaResult theta =
                delta_method_transform(fit, theta_at, z, opt.confidence_level);
            nlohmann::json row;
            row["z"] = z;
            row["count"] = count;
            row["cure_fraction"] = json_double(p0.estimate);
            row["cure_fraction_se"] = json_double(p0.standard_error);
            row["cure_fraction_ci"] = {json_double(p0.confidence_interval.first),
                                       json_double(p0.confidence_interval.second)};
            row["theta"] = json_double(theta.estimate);
            row["theta_se"] = json_double(theta.standard_error);
            row["theta_ci"] = {json_double(theta.confidence_interval.first),
                               json_double(theta.confidence_interval.second)};
            row["theta_ci_contains_one"] = theta.confidence_interval.first <= 1.0 &&
                                           1.0 <= theta.confidence_interval.second;
            cure_table.push_back(row);
        }
        entry["cure_table"] = cure_table;
        entry["theta_note"] =
            "theta confidence intervals are reported unclipped and may extend beyond (0, 1]";

        if (fit.gamma_profile) {
            nlohmann::json profile = nlohmann::json::array();
            for (const auto& [g, value] : *fit.gamma_profile) {
                profile.push_back({json_double(g), json_double(value)});
            }
            entry["gamma_profile"] = profile;
        }

        // Population survival curves at the most frequent covariate rows.
        std::vector<std::string> column_names = {"time"};
        std::vector<std::vector<double>> columns(1);
        for (int k = 1; k <= 201; ++k) {
            columns[0].push_back(max_time * static_cast<double>(k) / 201.0);
        }
        nlohmann::json curve_profiles = nlohmann::json::array();
        for (std::size_t p = 0; p < full_profiles.size(); ++p) {
            const auto& [row, count] = full_profiles[p];
            SurvivalRecord probe;
            probe.time = 1.0;
            probe.event = 0;
            const std::size_t wn = fit.estimates.zeta.size();
            const std::size_t xn = fit.estimates.eta.size();
            probe.w.assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(wn));
            probe.x.assign(row.begin() + static_cast<std::ptrdiff_t>(wn),
                           row.begin() + static_cast<std::ptrdiff_t>(wn + xn));
            probe.z.assign(row.begin() + static_cast<std::ptrdiff_t>(wn + xn), row.end());
            const DDPVFModel model = subject_model(probe, fit.estimates);
            std::vector<double> survival;
            survival.reserve(columns[0].size());
            for (const double t : columns[0]) {
                survival.push_back(std::exp(ddpvf_log_survival(t, model)));
            }
            columns.push_back(std::move(survival));
            column_names.push_back("profile_" + std::to_string(p + 1));
            curve_profiles.push_back({{"w", probe.w},
                                      {"x", probe.x},
                                      {"z", probe.z},
                                      {"count", count},
                                      {"column", column_names.back()}});
        }
        const std::string curve_file = "survival_" + sanitize_filename(fitted_names[m]) + ".csv";
        write_columns((std::filesystem::path(opt.out_dir) / curve_file).string(),
                      column_names, columns);
        entry["survival_curve_file"] = curve_file;
        entry["curve_profiles"] = curve_profiles;

        models_json[fitted_names[m]] = entry;
    }
    report["models"] = models_json;

    const std::vector<std::size_t> order = compare_models(fits);
    nlohmann::json ranking = nlohmann::json::array();
    for (const std::size_t idx : order) {
        ranking.push_back(fitted_names[idx]);
    }
    report["ranking"] = ranking;
    report["preferred_model"] = fitted_names[order.front()];

    const std::string report_path =
        opt.fit_report.empty()
            ? (std::filesystem::path(opt.out_dir) / "fit_report.json").string()
            : opt.fit_report;
    save_json(report_path, report);

    std::ostringstream table;
    table << "model      k  converged  log-likelihood        AIC       AICc        BIC"
          << "       HQIC       CAIC\n";
    for (std::size_t m = 0; m < fits.size(); ++m) {
        const FitResult& fit = fits[m];
        table << std::left << std::setw(9) << fitted_names[m] << std::right << std::setw(3)
              << fit.parameter_count << std::setw(11) << (fit.converged ? "yes" : "no")
              << format_double(fit.log_likelihood, 16, 3)
              << format_double(fit.criteria.aic, 11, 2)
              << format_double(fit.criteria.aicc_defined ? fit.criteria.aicc : kNaN, 11, 2)
              << format_double(fit.criteria.bic, 11, 2)
              << format_double(fit.criteria.hqic, 11, 2)
              << format_double(fit.criteria.caic, 11, 2) << '\n';
    }
    table << "preferred by AIC: " << fitted_names[order.front()] << "\n\n";
    for (std::size_t m = 0; m < fits.size(); ++m) {
        const FitResult& fit = fits[m];
        const std::vector<double> natural =
            natural_parameter_vector(fit.estimates, fit.shape);
        const std::vector<std::string> names = display_parameter_names(fit.shape, ingested);
        table << '[' << fitted_names[m] << "] estimates with "
              << static_cast<int>(opt.confidence_level * 100.0 + 0.5) << "% intervals\n";
        for (std::size_t j = 0; j < natural.size(); ++j) {
            table << "  " << std::left << std::setw(24) << names[j] << std::right
                  << format_double(natural[j], 12, 4)
                  << "  se" << format_double(fit.standard_errors[j], 11, 4) << "  ["
                  << format_double(fit.confidence_intervals[j].first, 11, 4) << ","
                  << format_double(fit.confidence_intervals[j].second, 11, 4) << "]\n";
        }
        if (fit.singular_information) {
            table << "  warning: information matrix numerically singular\n";
        }
        table << '\n';
    }
    std::ofstream summary((std::filesystem::path(opt.out_dir) / "fit_summary.txt").string());
    summary << table.str();
    if (!opt.quiet) {
        std::cout << table.str();
        std::cout << "report written to " << report_path << '\n';
    }
    return 0;
}

inline int cmd_simulate(CliOptions& opt) {
    ScenarioConfig cfg;
    if (!opt.config_path.empty()) {
        cfg = load_scenario_config(opt.config_path);
    } else if (opt.scenario == 1) {
        cfg = scenario_one_config();
    } else if (opt.scenario == 2) {
        cfg = scenario_two_config();
    } else {
        throw std::invalid_argument("simulate requires --scenario 1|2 or --config FILE");
    }
    if (opt.seed_given) {
        cfg.seed = opt.seed;
    }
    if (opt.replicates > 0) {
        cfg.replicates = opt.replicates;
    }
    if (opt.threads > 0) {
        cfg.threads = opt.threads;
    }
    if (opt.multistart > 0) {
        cfg.fit_config.multistart_count = opt.multistart;
    }
    if (!opt.quiet) {
        std::cout << "seed: " << cfg.seed << '\n';
    }
    std::filesystem::create_directories(opt.out_dir);

    const MonteCarloSummary summary = run_monte_carlo(cfg);

    nlohmann::json report;
    report["schema_version"] = 1;
    report["command"] = "simulate";
    report["seed"] = cfg.seed;
    report["scenario"] = cfg.scenario == Scenario::One ? 1 : 2;
    report["replicates"] = cfg.replicates;
    report["target_censoring"] = cfg.target_censoring;
    report["frailty_family"] = family_name(cfg.true_params.frailty.family);
    nlohmann::json cells = nlohmann::json::array();
    for (const CellSummary& cell : summary.cells) {
        nlohmann::json entry;
        entry["n"] = cell.n;
        entry["sigma2"] = cell.sigma2;
        entry["tau"] = cell.tau;
        entry["replicates"] = cell.replicates;
        entry["failures"] = cell.failures;
        entry["failure_rate"] = cell.failure_rate;
        entry["flagged"] = cell.flagged;
        nlohmann::json params = nlohmann::json::array();
        for (std::size_t j = 0; j < cell.parameter_names.size(); ++j) {
            params.push_back({{"name", cell.parameter_names[j]},
                              {"truth", json_double(cell.truth[j])},
                              {"bias", json_double(cell.bias[j])},
                              {"rmse", json_double(cell.rmse[j])},
                              {"coverage", json_double(cell.coverage[j])}});
        }
        entry["parameters"] = params;
        entry["theta_contains_one_frailty"] = {
            json_double(cell.theta_contains_one_frailty[0]),
            json_double(cell.theta_contains_one_frailty[1])};
        entry["theta_contains_one_dd"] = {json_double(cell.theta_contains_one_dd[0]),
                                          json_double(cell.theta_contains_one_dd[1])};
        nlohmann::json prefers;
        for (const auto& [name, value] : cell.ic_prefers_frailty) {
            prefers[name] = json_double(value);
        }
        entry["ic_prefers_frailty"] = prefers;
        cells.push_back(entry);
    }
    report["cells"] = cells;
    save_json((std::filesystem::path(opt.out_dir) / "mc_summary.json").string(), report);

    std::ostringstream table;
    table << "    n    sigma2          tau  fail  parameter        truth        bias"
          << "        rmse   coverage\n";
    for (const CellSummary& cell : summary.cells) {
        for (std::size_t j = 0; j < cell.parameter_names.size(); ++j) {
            table << std::right << std::setw(5) << cell.n
                  << format_double(cell.sigma2, 10, 2) << format_double(cell.tau, 13, 4)
                  << std::setw(6) << cell.failures << "  " << std::left << std::setw(9)
                  << cell.parameter_names[j] << std::right
                  << format_double(cell.truth[j], 12, 4)
                  << format_double(cell.bias[j], 12, 4)
                  << format_double(cell.rmse[j], 12, 4)
                  << format_double(cell.coverage[j], 11, 3) << '\n';
        }
        table << "      selection (frailty preferred):";
        for (const auto& [name, value] : cell.ic_prefers_frailty) {
            table << ' ' << name << '=' << format_double(value, 0, 3);
        }
        table << "  theta-contains-1 frailty=["
              << format_double(cell.theta_contains_one_frailty[0], 0, 3) << ","
              << format_double(cell.theta_contains_one_frailty[1], 0, 3) << "] dd=["
              << format_double(cell.theta_contains_one_dd[0], 0, 3) << ","
              << format_double(cell.theta_contains_one_dd[1], 0, 3) << "]";
        if (cell.flagged) {
            table << "  FLAGGED (fit failure rate above 5%)";
        }
        table << "\n\n";
    }
    std::ofstream text((std::filesystem::path(opt.out_dir) / "mc_summary.txt").string());
    text << table.str();
    if (!opt.quiet) {
        std::cout << table.str();
    }
    return 0;
}

struct GroupedRecords {
    std::vector<std::string> names;
    std::vector<std::vector<SurvivalRecord>> groups;
};

inline GroupedRecords group_records(const IngestResult& ingested) {
    GroupedRecords grouped;
    if (ingested.groups.empty()) {
        grouped.names.emplace_back("all");
        grouped.groups.push_back(ingested.records);
        return grouped;
    }
    std::map<std::string, std::vector<SurvivalRecord>> by_group;
    for (std::size_t i = 0; i < ingested.records.size(); ++i) {
        by_group[ingested.groups[i]].push_back(ingested.records[i]);
    }
    for (auto& [name, records] : by_group) {
        grouped.names.push_back(name);
        grouped.groups.push_back(std::move(records));
    }
    return grouped;
}

inline int cmd_km(CliOptions& opt) {
    const IngestSchema schema = resolve_schema(opt);
    const IngestResult ingested = load_records(opt, schema, std::cout);
    const GroupedRecords grouped = group_records(ingested);
    std::filesystem::create_directories(opt.out_dir);

    for (std::size_t g = 0; g < grouped.groups.size(); ++g) {
        const std::vector<SurvivalRecord>& records = grouped.groups[g];
        const StepFunction km = kaplan_meier(records);
        const std::string stem = "km_" + sanitize_filename(grouped.names[g]);
        write_curve((std::filesystem::path(opt.out_dir) / (stem + ".csv")).string(), "time",
                    "survival", km.knots, km.values);
        write_curve(
            (std::filesystem::path(opt.out_dir) / (stem + "_greenwood.csv")).string(),
            "time", "variance", km.knots, km.variance);
        std::size_t events = 0;
        for (const auto& rec : records) {
            events += rec.event == 1 ? 1 : 0;
        }
        if (!opt.quiet) {
            const double plateau = km.values.empty() ? 1.0 : km.values.back();
            std::cout << "group " << grouped.names[g] << ": n=" << records.size()
                      << " events=" << events << " final-survival="
                      << format_double(plateau, 0, 4) << '\n';
        }
    }

    if (!opt.fit_report.empty()) {
        const nlohmann::json report = load_json(opt.fit_report);
        if (!report.contains("models") || !report.at("models").is_object()) {
            throw std::invalid_argument("fit report lacks a 'models' object");
        }
        const StepFunction km = kaplan_meier(ingested.records);
        const auto full_profiles = distinct_rows(
            ingested.records,
            [](const SurvivalRecord& rec) {
                std::vector<double> row = rec.w;
                row.insert(row.end(), rec.x.begin(), rec.x.end());
                row.insert(row.end(), rec.z.begin(), rec.z.end());
                return row;
            },
            1);
        for (const auto& [name, entry] : report.at("models").items()) {
            const ModelParameters params = parameters_from_report(entry.at("estimates"));
            const std::size_t wn = params.zeta.size();
            const std::size_t xn = params.eta.size();
            const std::size_t zn = params.nu.size();
            const std::vector<double>& row = full_profiles.front().first;
            if (row.size() != wn + xn + zn) {
                throw std::invalid_argument(
                    "fit report covariate dimensions do not match the current schema");
            }
            SurvivalRecord probe;
            probe.time = 1.0;
            probe.event = 0;
            probe.w.assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(wn));
            probe.x.assign(row.begin() + static_cast<std::ptrdiff_t>(wn),
                           row.begin() + static_cast<std::ptrdiff_t>(wn + xn));
            probe.z.assign(row.begin() + static_cast<std::ptrdiff_t>(wn + xn), row.end());
            const DDPVFModel model = subject_model(probe, params);
            std::vector<double> survival;
            survival.reserve(km.knots.size());
            for (const double t : km.knots) {
                survival.push_back(std::exp(ddpvf_log_survival(t, model)));
            }
            write_curve((std::filesystem::path(opt.out_dir) /
                         ("km_overlay_" + sanitize_filename(name) + ".csv"))
                            .string(),
                        "time", "survival", km.knots, survival);
        }
    }
    return 0;
}

inline int cmd_hazard(CliOptions& opt) {
    const IngestSchema schema = resolve_schema(opt);
    const IngestResult ingested = load_records(opt, schema, std::cout);
    const GroupedRecords grouped = group_records(ingested);
    std::filesystem::create_directories(opt.out_dir);

    for (std::size_t g = 0; g < grouped.groups.size(); ++g) {
        const HazardCurve curve = kernel_hazard(grouped.groups[g], opt.bandwidth);
        const std::string stem = "hazard_" + sanitize_filename(grouped.names[g]);
        write_curve((std::filesystem::path(opt.out_dir) / (stem + ".csv")).string(), "time",
                    "hazard", curve.times, curve.values);
        if (!opt.quiet) {
            std::cout << "group " << grouped.names[g]
                      << ": bandwidth=" << format_double(curve.bandwidth, 0, 4) << '\n';
        }
    }
    return 0;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv) {
    detail::CliOptions opt;
    CLI::App app{"Defective Dagum survival models with frailty"};
    app.require_subcommand(1);

    std::vector<CLI::Option*> seed_options;
    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out-dir", opt.out_dir, "Directory for output files");
        seed_options.push_back(
            cmd->add_option("--seed", opt.seed, "Random seed (omitted: drawn from entropy)"));
        cmd->add_flag("--quiet", opt.quiet, "Suppress progress output");
    };
    const auto add_data = [&](CLI::App* cmd) {
        cmd->add_option("--data", opt.data_path, "Delimited data file")->required();
        cmd->add_option("--schema", opt.schema_path, "JSON column mapping");
        cmd->add_option("--delimiter", opt.delimiter, "Field delimiter override");
    };

    CLI::App* fit = app.add_subcommand("fit", "Fit long-term survival models");
    add_common(fit);
    add_data(fit);
    fit->add_option("--model", opt.models,
                    "Comma-separated models: dd, dd-gamma, dd-ig, dd-pvf or all");
    fit->add_option("--confidence-level", opt.confidence_level, "Interval coverage level")
        ->check(CLI::Range(0.5, 0.9999));
    fit->add_option("--gamma-grid", opt.gamma_grid, "Comma-separated profile grid for gamma");
    fit->add_option("--multistart", opt.multistart, "Number of optimizer starts");
    fit->add_flag("--profile", opt.profile, "Fit dd-pvf by profiling gamma over the grid");
    fit->add_option("--fit-report", opt.fit_report, "Path for the JSON report");

    CLI::App* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study");
    add_common(simulate);
    simulate->add_option("--scenario", opt.scenario, "Built-in scenario preset (1 or 2)");
    simulate->add_option("--config", opt.config_path, "Scenario configuration JSON");
    simulate->add_option("--replicates", opt.replicates, "Replicates per cell");
    simulate->add_option("--threads", opt.threads, "Worker threads");
    simulate->add_option("--multistart", opt.multistart, "Number of optimizer starts");

    CLI::App* km = app.add_subcommand("km", "Kaplan-Meier survival estimates");
    add_common(km);
    add_data(km);
    km->add_option("--group-by", opt.group_by, "Column defining groups");
    km->add_option("--fit-report", opt.fit_report,
                   "Fit report JSON used to write model overlays");

    CLI::App* hazard = app.add_subcommand("hazard", "Kernel-smoothed hazard estimates");
    add_common(hazard);
    add_data(hazard);
    hazard->add_option("--group-by", opt.group_by, "Column defining groups");
    hazard->add_option("--bandwidth", opt.bandwidth, "Kernel bandwidth (0: automatic)")
        ->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }
    for (const CLI::Option* option : seed_options) {
        if (option->count() > 0) {
            opt.seed_given = true;
        }
    }

    try {
        if (*fit) {
            return detail::cmd_fit(opt);
        }
        if (*simulate) {
            return detail::cmd_simulate(opt);
        }
        if (*km) {
            return detail::cmd_km(opt);
        }
        if (*hazard) {
            return detail::cmd_hazard(opt);
        }
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return 0;
}

inline int run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.emplace_back("ddpvf");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(full.size());
    for (const std::string& arg : full) {
        argv.push_back(arg.c_str());
    }
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace cli
}  // namespace ddpvf

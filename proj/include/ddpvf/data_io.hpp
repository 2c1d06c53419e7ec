#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ddpvf/regression.hpp"
#include "ddpvf/simulation.hpp"

namespace ddpvf {
inline namespace data_io {

// Column mapping for CSV ingestion. Columns listed in reference_levels are
// treated as categorical and dummy-encoded against the given reference level;
// every other covariate column must parse as a number.
struct IngestSchema {
    std::string time_column = "time";
    std::string event_column = "event";
    std::vector<std::string> alpha_covariates;
    std::vector<std::string> beta_covariates;
    std::vector<std::string> cure_covariates;
    std::map<std::string, std::string> reference_levels;
    std::string group_column;
    std::string time_unit = "days";
    char delimiter = ',';
};

struct RowRejection {
    int line = 0;  // 1-based line number in the file
    std::string reason;
};

struct IngestResult {
    std::vector<SurvivalRecord> records;
    std::vector<std::string> groups;  // raw group-column values, parallel to records
    std::vector<RowRejection> rejections;
    std::vector<std::string> alpha_names;
    std::vector<std::string> beta_names;
    std::vector<std::string> cure_names;
    int rows_read = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && (s[begin] == ' ' || s[begin] == '\t' || s[begin] == '\r')) {
        ++begin;
    }
    while (end > begin && (s[end - 1] == ' ' || s[end - 1] == '\t' || s[end - 1] == '\r')) {
        --end;
    }
    return s.substr(begin, end - begin);
}

inline std::vector<std::string> split_fields(const std::string& line, char delimiter) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream stream(line);
    while (std::getline(stream, field, delimiter)) {
        fields.push_back(trim(field));
    }
    if (!line.empty() && line.back() == delimiter) {
        fields.emplace_back();
    }
    return fields;
}

inline bool is_missing(const std::string& value) {
    return value.empty() || value == "NA" || value == "na" || value == "NaN" ||
           value == "nan" || value == ".";
}

inline bool parse_number(const std::string& value, double& out) {
    if (is_missing(value)) {
        return false;
    }
    std::size_t consumed = 0;
    try {
        out = std::stod(value, &consumed);
    } catch (const std::exception&) {
        return false;
    }
    return consumed == value.size() && std::isfinite(out);
}

inline std::size_t column_index(const std::vector<std::string>& header,
                                const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw std::invalid_argument("column '" + name + "' not found in header");
    }
    return static_cast<std::size_t>(it - header.begin());
}

// Expanded design block: per source column, either one numeric slot or one
// indicator slot per non-reference level (levels sorted for determinism).
struct DesignBlock {
    struct Column {
        std::string name;
        std::size_t index = 0;
        bool categorical = false;
        std::string reference;
        std::vector<std::string> levels;  // non-reference levels, sorted
    };
    std::vector<Column> columns;
    std::vector<std::string> names;  // "intercept" followed by expanded slots
};

inline DesignBlock make_block(const std::vector<std::string>& covariates,
                              const IngestSchema& schema,
                              const std::vector<std::string>& header,
                              const std::map<std::string, std::set<std::string>>& levels) {
    DesignBlock block;
    block.names.emplace_back("intercept");
    for (const std::string& name : covariates) {
        DesignBlock::Column col;
        col.name = name;
        col.index = column_index(header, name);
        const auto ref = schema.reference_levels.find(name);
        if (ref != schema.reference_levels.end()) {
            col.categorical = true;
            col.reference = ref->second;
            const auto found = levels.find(name);
            if (found != levels.end()) {
                for (const std::string& level : found->second) {
                    if (level != col.reference) {
                        col.levels.push_back(level);
                    }
                }
            }
            for (const std::string& level : col.levels) {
                block.names.push_back(name + "=" + level);
            }
        } else {
            block.names.push_back(name);
        }
        block.columns.push_back(std::move(col));
    }
    return block;
}

inline bool encode_row(const DesignBlock& block, const std::vector<std::string>& fields,
                       std::vector<double>& out, std::string& reason) {
    out.clear();
    out.push_back(1.0);
    for (const auto& col : block.columns) {
        const std::string& value = fields[col.index];
        if (col.categorical) {
            if (is_missing(value)) {
                reason = "missing value in column '" + col.name + "'";
                return false;
            }
            for (const std::string& level : col.levels) {
                out.push_back(value == level ? 1.0 : 0.0);
            }
        } else {
            double parsed = 0.0;
            if (!parse_number(value, parsed)) {
                reason = is_missing(value)
                             ? "missing value in column '" + col.name + "'"
                             : "unparseable value '" + value + "' in column '" + col.name + "'";
                return false;
            }
            out.push_back(parsed);
        }
    }
    return true;
}

}  // namespace detail

// Read a delimited text file into survival records. Structural problems
// (missing file, missing columns) throw; defective rows are skipped and
// reported with line numbers so the caller can surface them.
inline IngestResult ingest(const std::string& path, const IngestSchema& schema) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open data file '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("data file '" + path + "' is empty");
    }
    const std::vector<std::string> header = detail::split_fields(line, schema.delimiter);
    const std::size_t time_idx = detail::column_index(header, schema.time_column);
    const std::size_t event_idx = detail::column_index(header, schema.event_column);
    std::size_t group_idx = 0;
    if (!schema.group_column.empty()) {
        group_idx = detail::column_index(header, schema.group_column);
    }

    std::vector<std::pair<int, std::vector<std::string>>> rows;
    std::map<std::string, std::set<std::string>> levels;
    int line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (detail::trim(line).empty()) {
            continue;
        }
        rows.emplace_back(line_number, detail::split_fields(line, schema.delimiter));
    }

    IngestResult result;
    result.rows_read = static_cast<int>(rows.size());

    // First pass collects the observed levels of every categorical column so
    // the dummy encoding is a deterministic function of schema plus data.
    for (const auto& [mapped, reference] : schema.reference_levels) {
        const std::size_t idx = detail::column_index(header, mapped);
        for (const auto& [row_line, fields] : rows) {
            if (idx < fields.size() && !detail::is_missing(fields[idx])) {
                levels[mapped].insert(fields[idx]);
            }
        }
        (void)reference;
    }

    const detail::DesignBlock alpha_block =
        detail::make_block(schema.alpha_covariates, schema, header, levels);
    const detail::DesignBlock beta_block =
        detail::make_block(schema.beta_covariates, schema, header, levels);
    const detail::DesignBlock cure_block =
        detail::make_block(schema.cure_covariates, schema, header, levels);
    result.alpha_names = alpha_block.names;
    result.beta_names = beta_block.names;
    result.cure_names = cure_block.names;

    for (const auto& [row_line, fields] : rows) {
        if (fields.size() != header.size()) {
            result.rejections.push_back(
                {row_line, "expected " + std::to_string(header.size()) + " fields, found " +
                               std::to_string(fields.size())});
            continue;
        }
        SurvivalRecord rec;
        std::string reason;
        if (!detail::parse_number(fields[time_idx], rec.time)) {
            result.rejections.push_back(
                {row_line, "missing or unparseable value in column '" + schema.time_column +
                               "'"});
            continue;
        }
        if (!(rec.time > 0.0)) {
            result.rejections.push_back({row_line, "nonpositive time"});
            continue;
        }
        double event_value = 0.0;
        if (!detail::parse_number(fields[event_idx], event_value) ||
            (event_value != 0.0 && event_value != 1.0)) {
            result.rejections.push_back(
                {row_line,
                 "event indicator in column '" + schema.event_column + "' must be 0 or 1"});
            continue;
        }
        rec.event = static_cast<int>(event_value);
        if (!detail::encode_row(alpha_block, fields, rec.w, reason) ||
            !detail::encode_row(beta_block, fields, rec.x, reason) ||
            !detail::encode_row(cure_block, fields, rec.z, reason)) {
            result.rejections.push_back({row_line, reason});
            continue;
        }
        if (!schema.group_column.empty()) {
            result.groups.push_back(fields[group_idx]);
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

namespace detail {

inline std::string json_type_name(const nlohmann::json& j) {
    return std::string(j.type_name());
}

inline const nlohmann::json& json_at(const nlohmann::json& j, const std::string& key,
                                     const std::string& path) {
    if (!j.is_object() || !j.contains(key)) {
        throw std::invalid_argument("missing field '" + path + "'");
    }
    return j.at(key);
}

inline double json_number(const nlohmann::json& j, const std::string& key,
                          const std::string& path) {
    const nlohmann::json& v = json_at(j, key, path);
    if (!v.is_number()) {
        throw std::invalid_argument("field '" + path + "' must be a number, got " +
                                    json_type_name(v));
    }
    return v.get<double>();
}

inline std::string json_string(const nlohmann::json& j, const std::string& key,
                               const std::string& path) {
    const nlohmann::json& v = json_at(j, key, path);
    if (!v.is_string()) {
        throw std::invalid_argument("field '" + path + "' must be a string, got " +
                                    json_type_name(v));
    }
    return v.get<std::string>();
}

inline std::vector<double> json_number_array(const nlohmann::json& j, const std::string& key,
                                             const std::string& path) {
    const nlohmann::json& v = json_at(j, key, path);
    if (!v.is_array()) {
        throw std::invalid_argument("field '" + path + "' must be an array, got " +
                                    json_type_name(v));
    }
    std::vector<double> out;
    for (const auto& item : v) {
        if (!item.is_number()) {
            throw std::invalid_argument("field '" + path + "' must contain only numbers");
        }
        out.push_back(item.get<double>());
    }
    return out;
}

inline std::vector<std::string> json_string_array(const nlohmann::json& j,
                                                  const std::string& key,
                                                  const std::string& path) {
    const nlohmann::json& v = json_at(j, key, path);
    if (!v.is_array()) {
        throw std::invalid_argument("field '" + path + "' must be an array, got " +
                                    json_type_name(v));
    }
    std::vector<std::string> out;
    for (const auto& item : v) {
        if (!item.is_string()) {
            throw std::invalid_argument("field '" + path + "' must contain only strings");
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace detail

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open JSON file '" + path + "'");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& err) {
        throw std::invalid_argument("cannot parse '" + path + "': " + err.what());
    }
}

// Reports use nlohmann's default object ordering (keys sorted), so a
// load/save cycle reproduces the file byte for byte.
inline void save_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) {
        throw std::invalid_argument("cannot write to '" + path + "'");
    }
    out << j.dump(2) << '\n';
}

inline IngestSchema load_schema(const std::string& path) {
    const nlohmann::json j = load_json(path);
    IngestSchema schema;
    schema.time_column = detail::json_string(j, "time", "time");
    schema.event_column = detail::json_string(j, "event", "event");
    if (j.contains("alpha_covariates")) {
        schema.alpha_covariates =
            detail::json_string_array(j, "alpha_covariates", "alpha_covariates");
    }
    if (j.contains("beta_covariates")) {
        schema.beta_covariates =
            detail::json_string_array(j, "beta_covariates", "beta_covariates");
    }
    if (j.contains("cure_covariates")) {
        schema.cure_covariates =
            detail::json_string_array(j, "cure_covariates", "cure_covariates");
    }
    if (j.contains("reference_levels")) {
        const nlohmann::json& refs = j.at("reference_levels");
        if (!refs.is_object()) {
            throw std::invalid_argument("field 'reference_levels' must be an object");
        }
        for (const auto& [key, value] : refs.items()) {
            if (!value.is_string()) {
                throw std::invalid_argument("field 'reference_levels." + key +
                                            "' must be a string");
            }
            schema.reference_levels[key] = value.get<std::string>();
        }
    }
    if (j.contains("group")) {
        schema.group_column = detail::json_string(j, "group", "group");
    }
    if (j.contains("time_unit")) {
        schema.time_unit = detail::json_string(j, "time_unit", "time_unit");
    }
    if (j.contains("delimiter")) {
        const std::string d = detail::json_string(j, "delimiter", "delimiter");
        if (d.size() != 1) {
            throw std::invalid_argument("field 'delimiter' must be a single character");
        }
        schema.delimiter = d[0];
    }
    return schema;
}

// Scenario overrides on top of the built-in presets; every diagnostic names
// the offending field.
inline ScenarioConfig load_scenario_config(const std::string& path) {
    const nlohmann::json j = load_json(path);
    const double which = detail::json_number(j, "scenario", "scenario");
    if (which != 1.0 && which != 2.0) {
        throw std::invalid_argument("field 'scenario' must be 1 or 2");
    }
    ScenarioConfig cfg = which == 1.0 ? scenario_one_config() : scenario_two_config();
    if (j.contains("zeta")) {
        cfg.true_params.zeta = detail::json_number_array(j, "zeta", "zeta");
    }
    if (j.contains("eta")) {
        cfg.true_params.eta = detail::json_number_array(j, "eta", "eta");
    }
    if (j.contains("nu")) {
        cfg.true_params.nu = detail::json_number_array(j, "nu", "nu");
    }
    if (j.contains("family")) {
        const std::string family = detail::json_string(j, "family", "family");
        if (family == "gamma") {
            cfg.true_params.frailty.family = FrailtyFamily::Gamma;
        } else if (family == "inverse_gaussian") {
            cfg.true_params.frailty.family = FrailtyFamily::InverseGaussian;
        } else if (family == "pvf") {
            cfg.true_params.frailty.family = FrailtyFamily::Pvf;
        } else {
            throw std::invalid_argument(
                "field 'family' must be gamma, inverse_gaussian or pvf");
        }
    }
    if (j.contains("gamma")) {
        cfg.true_params.frailty.gamma = detail::json_number(j, "gamma", "gamma");
    }
    if (j.contains("covariate_bernoulli")) {
        cfg.covariate_bernoulli =
            detail::json_number(j, "covariate_bernoulli", "covariate_bernoulli");
    }
    if (j.contains("sample_sizes")) {
        cfg.sample_sizes.clear();
        for (const double n : detail::json_number_array(j, "sample_sizes", "sample_sizes")) {
            cfg.sample_sizes.push_back(static_cast<int>(n));
        }
    }
    if (j.contains("sigma2_values")) {
        cfg.sigma2_values = detail::json_number_array(j, "sigma2_values", "sigma2_values");
    }
    if (j.contains("replicates")) {
        cfg.replicates = static_cast<int>(detail::json_number(j, "replicates", "replicates"));
    }
    if (j.contains("target_censoring")) {
        cfg.target_censoring =
            detail::json_number(j, "target_censoring", "target_censoring");
    }
    if (j.contains("seed")) {
        cfg.seed =
            static_cast<std::uint64_t>(detail::json_number(j, "seed", "seed"));
    }
    if (j.contains("pilot_n")) {
        cfg.pilot_n = static_cast<int>(detail::json_number(j, "pilot_n", "pilot_n"));
    }
    if (j.contains("threads")) {
        cfg.threads = static_cast<int>(detail::json_number(j, "threads", "threads"));
    }
    return cfg;
}

// Two-column text writer shared by the survival/hazard curve outputs.
inline void write_curve(const std::string& path, const std::string& x_name,
                        const std::string& y_name, const std::vector<double>& xs,
                        const std::vector<double>& ys) {
    if (xs.size() != ys.size()) {
        throw std::invalid_argument("curve columns must have equal length");
    }
    std::ofstream out(path);
    if (!out) {
        throw std::invalid_argument("cannot write to '" + path + "'");
    }
    out << x_name << ',' << y_name << '\n';
    out.precision(12);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out << xs[i] << ',' << ys[i] << '\n';
    }
}

}  // namespace data_io
}  // namespace ddpvf

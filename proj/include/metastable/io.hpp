#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "metastable/errors.hpp"
#include "metastable/process_library.hpp"
#include "metastable/verifier.hpp"

// Serialization: versioned JSON schemas (strict - unknown fields are rejected
// so config typos surface immediately), RFC-4180 CSV with '.' decimals and
// 17-significant-digit doubles for lossless round-trips, and atomic file
// writes (temp + rename).

namespace metastable {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kProcessSchema = "metastable/process/v1";
inline constexpr const char* kSpecSchema = "metastable/spec/v1";
inline constexpr const char* kVerifySchema = "metastable/verify/v1";
inline constexpr const char* kReportSchema = "metastable/report/v1";

// ---------------------------------------------------------------------------
// small helpers
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string format_double17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out << contents;
        if (!out) throw IoError("failed writing '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("failed to move '" + tmp + "' to '" + path + "'");
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace detail {

inline void reject_unknown_fields(const json& j, std::initializer_list<const char*> allowed,
                                  const char* what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* name : allowed)
            if (it.key() == name) {
                ok = true;
                break;
            }
        if (!ok)
            throw SchemaError(std::string("unknown field '") + it.key() + "' in " + what);
    }
}

inline void require_schema(const json& j, const char* schema, const char* what) {
    if (!j.is_object()) throw SchemaError(std::string(what) + " must be a JSON object");
    if (!j.contains("schema") || !j["schema"].is_string() ||
        j["schema"].get<std::string>() != schema)
        throw SchemaError(std::string(what) + " must declare \"schema\": \"" + schema + "\"");
}

inline double require_number(const json& j, const char* field, const char* what) {
    if (!j.contains(field) || !j[field].is_number())
        throw SchemaError(std::string(what) + " needs numeric field '" + field + "'");
    return j[field].get<double>();
}

inline std::uint64_t require_index(const json& j, const char* field, const char* what) {
    if (!j.contains(field) ||
        !(j[field].is_number_unsigned() ||
          (j[field].is_number_integer() && j[field].get<std::int64_t>() >= 0)))
        throw SchemaError(std::string(what) + " needs nonnegative integer field '" +
                          field + "'");
    return j[field].get<std::uint64_t>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// AtomicProcess <-> JSON (bit-exact doubles via shortest-round-trip encoding)
// ---------------------------------------------------------------------------

inline json process_to_json(const AtomicProcess& process) {
    json j;
    j["schema"] = kProcessSchema;
    j["weights"] = process.space.weights;
    j["horizon"] = process.horizon;
    j["paths"] = process.paths;
    return j;
}

inline AtomicProcess process_from_json(const json& j) {
    detail::require_schema(j, kProcessSchema, "process");
    detail::reject_unknown_fields(j, {"schema", "weights", "horizon", "paths"}, "process");
    if (!j.contains("weights") || !j["weights"].is_array())
        throw SchemaError("process needs array field 'weights'");
    if (!j.contains("paths") || !j["paths"].is_array())
        throw SchemaError("process needs array field 'paths'");
    auto weights = j["weights"].get<std::vector<double>>();
    auto paths = j["paths"].get<std::vector<std::vector<double>>>();
    const auto horizon = detail::require_index(j, "horizon", "process");
    return AtomicProcess(AtomicSpace(std::move(weights)), std::move(paths), horizon);
}

// ---------------------------------------------------------------------------
// ProcessSpec <-> JSON
// ---------------------------------------------------------------------------

inline json spec_to_json(const ProcessSpec& spec) {
    json params = json::object();
    for (const auto& [k, v] : spec.params) params[k] = v;
    for (const auto& [k, v] : spec.vec_params) params[k] = v;
    json j;
    j["schema"] = kSpecSchema;
    j["kind"] = spec.kind;
    j["horizon"] = spec.horizon;
    j["params"] = params;
    if (spec.seed) j["seed"] = *spec.seed;
    return j;
}

inline ProcessSpec spec_from_json(const json& j) {
    detail::require_schema(j, kSpecSchema, "process spec");
    detail::reject_unknown_fields(j, {"schema", "kind", "horizon", "params", "seed"},
                                  "process spec");
    ProcessSpec spec;
    if (!j.contains("kind") || !j["kind"].is_string())
        throw SchemaError("process spec needs string field 'kind'");
    spec.kind = j["kind"].get<std::string>();
    spec.horizon = detail::require_index(j, "horizon", "process spec");
    if (spec.horizon < 1) throw SchemaError("process spec horizon must be >= 1");
    if (j.contains("seed")) spec.seed = detail::require_index(j, "seed", "process spec");
    if (j.contains("params")) {
        if (!j["params"].is_object()) throw SchemaError("'params' must be an object");
        for (auto it = j["params"].begin(); it != j["params"].end(); ++it) {
            if (it.value().is_number())
                spec.params[it.key()] = it.value().get<double>();
            else if (it.value().is_array())
                spec.vec_params[it.key()] = it.value().get<std::vector<double>>();
            else
                throw SchemaError("param '" + it.key() + "' must be a number or array");
        }
    }
    return spec;
}

// ---------------------------------------------------------------------------
// rate / modulus formula factories for config-driven checks
// ---------------------------------------------------------------------------

// {"constant": v} | {"c_over_lambda": c} | {"k_over_lambda": K} |
// {"theorem": "...", "K": .., "p": .., "a_err": .., "variant": ".."}
inline RateFunction rate_from_json(const json& j, std::string& desc) {
    if (!j.is_object()) throw SchemaError("rate must be a JSON object");
    desc = j.dump();
    if (j.contains("constant")) {
        detail::reject_unknown_fields(j, {"constant"}, "rate");
        const double v = detail::require_number(j, "constant", "rate");
        return [v](double, double) { return v; };
    }
    if (j.contains("c_over_lambda")) {
        detail::reject_unknown_fields(j, {"c_over_lambda"}, "rate");
        const double c = detail::require_number(j, "c_over_lambda", "rate");
        return [c](double lambda, double) { return c / lambda; };
    }
    if (j.contains("k_over_lambda")) {
        detail::reject_unknown_fields(j, {"k_over_lambda"}, "rate");
        const double K = detail::require_number(j, "k_over_lambda", "rate");
        return [K](double lambda, double) { return std::ceil(K / lambda); };
    }
    if (!j.contains("theorem") || !j["theorem"].is_string())
        throw SchemaError("rate needs 'theorem' (or a direct formula field)");
    const std::string thm = j["theorem"].get<std::string>();
    auto read_p = [&]() -> double {
        if (!j.contains("p")) return std::numeric_limits<double>::infinity();
        if (j["p"].is_string()) {
            if (j["p"].get<std::string>() == "inf")
                return std::numeric_limits<double>::infinity();
            throw SchemaError("p must be a number or \"inf\"");
        }
        return detail::require_number(j, "p", "rate");
    };
    if (thm == "monotone_det") {
        detail::reject_unknown_fields(j, {"theorem", "K"}, "rate");
        const double K = detail::require_number(j, "K", "rate");
        return [K](double, double eps) { return K / eps; };
    }
    if (thm == "thm7.1") {
        detail::reject_unknown_fields(j, {"theorem", "K"}, "rate");
        const double K = detail::require_number(j, "K", "rate");
        return [K](double lambda, double eps) {
            return monotone_uniform_rate_bounded(K, lambda, eps);
        };
    }
    if (thm == "thm7.2") {
        detail::reject_unknown_fields(j, {"theorem", "K", "p"}, "rate");
        const double K = detail::require_number(j, "K", "rate");
        const double p = read_p();
        return [K, p](double lambda, double eps) {
            return submartingale_rate(K, p, lambda, eps);
        };
    }
    if (thm == "thm7.4") {
        detail::reject_unknown_fields(j, {"theorem", "K"}, "rate");
        const double K = detail::require_number(j, "K", "rate");
        return [K](double lambda, double eps) { return doob_rate(K, lambda, eps); };
    }
    if (thm == "thm7.6") {
        detail::reject_unknown_fields(j, {"theorem", "K", "p"}, "rate");
        const double K = detail::require_number(j, "K", "rate");
        const double p = read_p();
        return [K, p](double lambda, double eps) { return ergodic_rate(K, p, lambda, eps); };
    }
    if (thm == "thm7.7" || thm == "rem7.8") {
        detail::reject_unknown_fields(j, {"theorem", "K", "a_err", "variant"}, "rate");
        const double K = detail::require_number(j, "K", "rate");
        const double a = detail::require_number(j, "a_err", "rate");
        AlmostSuperVariant variant = thm == "rem7.8" ? AlmostSuperVariant::downcrossing
                                                     : AlmostSuperVariant::standard;
        if (j.contains("variant")) {
            const std::string v = j["variant"].get<std::string>();
            if (v == "downcrossing")
                variant = AlmostSuperVariant::downcrossing;
            else if (v == "standard")
                variant = AlmostSuperVariant::standard;
            else
                throw SchemaError("variant must be 'standard' or 'downcrossing'");
        }
        return [K, a, variant](double lambda, double eps) {
            return almost_supermartingale_rate(K, a, lambda, eps, variant);
        };
    }
    throw SchemaError("unknown theorem id '" + thm + "'");
}

// {"affine_inv_lambda": {"scale": c, "offset": o}} -> o + c/lambda,
// {"markov_M": M} -> M/lambda, {"constant": v}.
inline LambdaModulus lambda_modulus_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("threshold must be a JSON object");
    if (j.contains("constant")) {
        const double v = detail::require_number(j, "constant", "threshold");
        return [v](double) { return v; };
    }
    if (j.contains("markov_M")) {
        const double M = detail::require_number(j, "markov_M", "threshold");
        return [M](double lambda) { return M / lambda; };
    }
    if (j.contains("affine_inv_lambda")) {
        const json& a = j["affine_inv_lambda"];
        const double scale = detail::require_number(a, "scale", "threshold");
        const double offset = detail::require_number(a, "offset", "threshold");
        return [scale, offset](double lambda) { return offset + scale / lambda; };
    }
    throw SchemaError("unsupported threshold formula");
}

// ---------------------------------------------------------------------------
// VerificationReport -> JSON
// ---------------------------------------------------------------------------

inline json schedule_to_json(const Schedule& s) {
    json j;
    j["a"] = s.a;
    j["b"] = s.b;
    return j;
}

// Deterministic by construction: alphabetical keys, no timing data, seeds and
// hashes embedded, so identical (config, seed) runs serialize byte-identically.
inline json report_to_json(const VerificationReport& report,
                           const std::string& config_hash) {
    json j;
    j["schema"] = kReportSchema;
    j["tool_version"] = kToolVersion;
    j["config_hash"] = config_hash;
    j["seed"] = report.seed;
    j["battery_version"] = report.battery_version;
    j["mode"] = report.mode;
    j["horizon"] = report.horizon;
    j["claim"] = {{"check", report.claim.check},
                  {"rate", report.claim.rate_desc},
                  {"lambda", report.claim.lambda},
                  {"epsilon", report.claim.epsilon}};
    j["verdict"] = to_string(report.verdict);
    if (report.witness) {
        json w;
        w["schedule_id"] = report.witness->schedule_id;
        w["window_index"] = report.witness->window_index;
        w["probability"] = report.witness->probability;
        w["note"] = report.witness->note;
        if (report.witness->schedule) w["schedule"] = schedule_to_json(*report.witness->schedule);
        j["witness"] = w;
    } else {
        j["witness"] = nullptr;
    }
    json outcomes = json::array();
    for (const auto& o : report.outcomes) {
        outcomes.push_back({{"id", o.schedule_id},
                            {"outcome", to_string(o.kind)},
                            {"window_index", o.window_index},
                            {"probability", o.probability},
                            {"windows_checked", o.windows_checked}});
    }
    j["schedules"] = outcomes;
    if (report.mode == "mc") {
        j["samples"] = report.samples;
        j["confidence"] = report.confidence;
    }
    j["diagnostic"] = report.diagnostic;
    return j;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // row index 0 = first data line
};

// RFC-4180 reader (quoted fields, embedded quotes doubled). Keeps 1-based
// line numbers for error reporting.
inline CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool line_has_data = false;
    std::size_t line = 1;
    auto end_field = [&]() {
        row.push_back(field);
        field.clear();
    };
    auto end_row = [&]() {
        if (!line_has_data && row.size() == 1 && row[0].empty()) {
            row.clear();
            return;  // blank line
        }
        if (table.header.empty())
            table.header = row;
        else
            table.rows.push_back(row);
        row.clear();
        line_has_data = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
                if (c == '\n') ++line;
            }
        } else if (c == '"') {
            in_quotes = true;
            line_has_data = true;
        } else if (c == ',') {
            end_field();
            line_has_data = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_field();
            end_row();
            ++line;
        } else {
            field.push_back(c);
            line_has_data = true;
        }
    }
    if (in_quotes) throw InputError("unterminated quoted CSV field at line " +
                                    std::to_string(line));
    if (line_has_data || !field.empty()) {
        end_field();
        end_row();
    }
    return table;
}

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline std::string csv_line(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out.push_back(',');
        out += csv_escape(fields[i]);
    }
    out.push_back('\n');
    return out;
}

inline double parse_csv_number(const std::string& field, std::size_t line,
                               const std::string& column) {
    if (field.empty())
        throw InputError("line " + std::to_string(line) + ": empty value in column '" +
                         column + "'");
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &pos);
    } catch (const std::exception&) {
        throw InputError("line " + std::to_string(line) + ": cannot parse '" + field +
                         "' in column '" + column + "'");
    }
    if (pos != field.size())
        throw InputError("line " + std::to_string(line) + ": trailing junk in '" + field +
                         "' (column '" + column + "')");
    if (!std::isfinite(v))
        throw InputError("line " + std::to_string(line) + ": non-finite value in column '" +
                         column + "'");
    return v;
}

}  // namespace metastable

#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metastable/io.hpp"

// Subcommand implementations for the `metastable` tool. The CLI front end in
// tools/ only parses flags and forwards here, so everything below is testable
// in-process.
//
// Exit-code contract:
//   0 validated / success, 1 violated, 2 inconclusive,
//   3 config or schema error, 4 runtime error.

namespace metastable::cli {

inline constexpr int kExitValidated = 0;
inline constexpr int kExitViolated = 1;
inline constexpr int kExitInconclusive = 2;
inline constexpr int kExitConfigError = 3;
inline constexpr int kExitRuntimeError = 4;

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

struct StatsOptions {
    std::string input;
    std::string output;  // empty = stdout
    std::vector<double> epsilons;
    std::vector<std::pair<double, double>> intervals;
    std::optional<double> partition_M;
    std::optional<std::int64_t> partition_l;
};

// One numeric column per path, header row names the paths. Emits long-format
// CSV: path,metric,param,value.
inline std::string run_stats_to_csv(const StatsOptions& opt) {
    const CsvTable table = parse_csv(read_file(opt.input));
    if (table.header.empty()) throw InputError("stats input has no header row");
    const std::size_t n_cols = table.header.size();
    std::vector<std::vector<double>> columns(n_cols);
    std::vector<bool> column_closed(n_cols, false);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() > n_cols)
            throw InputError("line " + std::to_string(r + 2) + ": more fields than headers");
        for (std::size_t c = 0; c < n_cols; ++c) {
            const std::string field = c < row.size() ? row[c] : "";
            if (field.empty()) {
                column_closed[c] = true;
                continue;
            }
            if (column_closed[c])
                throw InputError("line " + std::to_string(r + 2) + ": ragged column '" +
                                 table.header[c] + "'");
            columns[c].push_back(parse_csv_number(field, r + 2, table.header[c]));
        }
    }

    std::string out = csv_line({"path", "metric", "param", "value"});
    for (std::size_t c = 0; c < n_cols; ++c) {
        const auto& name = table.header[c];
        const std::span<const double> path(columns[c]);
        for (double eps : opt.epsilons) {
            out += csv_line({name, "fluctuations", format_double17(eps),
                             std::to_string(count_fluctuations(path, eps))});
        }
        for (const auto& [lo, hi] : opt.intervals) {
            const Interval iv(lo, hi);
            const std::string param = format_double17(lo) + ":" + format_double17(hi);
            out += csv_line({name, "crossings", param,
                             std::to_string(count_crossings(path, iv))});
            out += csv_line({name, "upcrossings", param,
                             std::to_string(count_upcrossings(path, iv))});
            out += csv_line({name, "downcrossings", param,
                             std::to_string(count_downcrossings(path, iv))});
        }
        if (opt.partition_M && opt.partition_l) {
            const auto cells = make_partition(*opt.partition_M, *opt.partition_l);
            std::size_t best = 0;
            for (const auto& cell : cells)
                best = std::max(best, count_crossings(path, cell));
            out += csv_line({name, "partition_max_crossings",
                             "M=" + format_double17(*opt.partition_M) +
                                 ";l=" + std::to_string(*opt.partition_l),
                             std::to_string(best)});
        }
    }
    return out;
}

inline int run_stats(const StatsOptions& opt) {
    const std::string csv = run_stats_to_csv(opt);
    if (opt.output.empty())
        std::cout << csv;
    else
        write_file_atomic(opt.output, csv);
    return kExitValidated;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateOptions {
    std::string spec_path;
    std::string output;
    std::optional<Index> horizon_override;
    std::optional<std::uint64_t> seed_override;
};

inline std::string run_simulate_to_string(const SimulateOptions& opt) {
    json sj = json::parse(read_file(opt.spec_path), nullptr, true, true);
    ProcessSpec spec = spec_from_json(sj);
    if (opt.horizon_override) spec.horizon = *opt.horizon_override;
    if (opt.seed_override) spec.seed = *opt.seed_override;

    if (spec.kind == "sampled_random_walk") {
        // sampler spec: emits a CSV of seeded replicate paths instead of an
        // exact atomization
        if (!spec.seed) throw SchemaError("sampler specs require a seed");
        double step = 1.0, start = 0.0, samples = 100.0;
        for (const auto& [k, v] : spec.params) {
            if (k == "step") step = v;
            else if (k == "start") start = v;
            else if (k == "samples") samples = v;
            else throw SchemaError("unknown param '" + k + "' for sampled_random_walk");
        }
        const auto n = static_cast<std::size_t>(samples);
        if (n < 1) throw SchemaError("samples must be >= 1");
        std::vector<std::vector<double>> paths(n);
        for (std::size_t i = 0; i < n; ++i)
            paths[i] = sample_random_walk(spec.horizon, step, start,
                                          derive_seed(*spec.seed, i));
        std::vector<std::string> header;
        for (std::size_t i = 0; i < n; ++i) header.push_back("path_" + std::to_string(i));
        std::string out = csv_line(header);
        for (Index t = 0; t < spec.horizon; ++t) {
            std::vector<std::string> row;
            row.reserve(n);
            for (std::size_t i = 0; i < n; ++i)
                row.push_back(format_double17(paths[i][static_cast<std::size_t>(t)]));
            out += csv_line(row);
        }
        return out;
    }

    const AtomicProcess process = make_process(spec);
    return process_to_json(process).dump(2) + "\n";
}

inline int run_simulate(const SimulateOptions& opt) {
    const std::string payload = run_simulate_to_string(opt);
    if (opt.output.empty())
        std::cout << payload;
    else
        write_file_atomic(opt.output, payload);
    return kExitValidated;
}

// ---------------------------------------------------------------------------
// rates
// ---------------------------------------------------------------------------

struct RatesOptions {
    std::string input;
    std::string output;
};

// Input columns: theorem_id,K,p,lambda,epsilon,a_err. Appends a `rate` column.
inline std::string run_rates_to_csv(const RatesOptions& opt) {
    const CsvTable table = parse_csv(read_file(opt.input));
    const std::vector<std::string> expected = {"theorem_id", "K", "p",
                                               "lambda", "epsilon", "a_err"};
    if (table.header != expected)
        throw SchemaError("rates input must have header theorem_id,K,p,lambda,epsilon,a_err");
    std::string out = csv_line({"theorem_id", "K", "p", "lambda", "epsilon", "a_err", "rate"});
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = r + 2;
        if (row.size() != 6)
            throw InputError("line " + std::to_string(line) + ": expected 6 fields");
        const std::string& id = row[0];
        const double K = parse_csv_number(row[1], line, "K");
        const bool p_inf = row[2].empty() || row[2] == "inf";
        const double p = p_inf ? std::numeric_limits<double>::infinity()
                               : parse_csv_number(row[2], line, "p");
        const double lambda = parse_csv_number(row[3], line, "lambda");
        const double eps = parse_csv_number(row[4], line, "epsilon");
        const double a_err = row[5].empty() ? 0.0 : parse_csv_number(row[5], line, "a_err");
        double rate = 0.0;
        try {
            if (id == "monotone_det") rate = K / eps;
            else if (id == "thm7.1") rate = monotone_uniform_rate_bounded(K, lambda, eps);
            else if (id == "thm7.2") rate = submartingale_rate(K, p, lambda, eps);
            else if (id == "thm7.4") rate = doob_rate(K, lambda, eps);
            else if (id == "thm7.6") rate = ergodic_rate(K, p, lambda, eps);
            else if (id == "thm7.7")
                rate = almost_supermartingale_rate(K, a_err, lambda, eps,
                                                   AlmostSuperVariant::standard);
            else if (id == "rem7.8")
                rate = almost_supermartingale_rate(K, a_err, lambda, eps,
                                                   AlmostSuperVariant::downcrossing);
            else
                throw SchemaError("unknown theorem_id '" + id + "'");
        } catch (const DomainError& e) {
            throw InputError("line " + std::to_string(line) + ": " + e.what());
        } catch (const SchemaError& e) {
            throw InputError("line " + std::to_string(line) + ": " + e.what());
        }
        out += csv_line({row[0], row[1], row[2], row[3], row[4], row[5],
                         format_double17(rate)});
    }
    return out;
}

inline int run_rates(const RatesOptions& opt) {
    const std::string csv = run_rates_to_csv(opt);
    if (opt.output.empty())
        std::cout << csv;
    else
        write_file_atomic(opt.output, csv);
    return kExitValidated;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyOptions {
    std::string config_path;
    std::string output;  // overrides config "output"; empty + no config output = stdout
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> mode_override;     // "exact" | "mc"
    std::optional<std::uint64_t> samples_override;
    std::optional<double> lambda_override;
    std::optional<double> epsilon_override;
    std::optional<std::uint64_t> horizon_override;   // process spec horizon
    std::optional<std::string> battery_override;     // "consecutive,dyadic,random:40"
    unsigned threads = 1;
};

namespace detail {

inline BatteryOptions battery_from_json(const json& j, std::uint64_t seed) {
    BatteryOptions opt;
    opt.seed = seed;
    if (j.is_null()) return opt;
    if (!j.is_object()) throw SchemaError("'battery' must be an object");
    metastable::detail::reject_unknown_fields(
        j, {"consecutive", "dyadic", "greedy", "random_count", "max_windows",
            "max_window_length"},
        "battery");
    if (j.contains("consecutive")) opt.consecutive = j["consecutive"].get<bool>();
    if (j.contains("dyadic")) opt.dyadic = j["dyadic"].get<bool>();
    if (j.contains("greedy")) opt.greedy = j["greedy"].get<bool>();
    if (j.contains("random_count")) opt.random_count = j["random_count"].get<std::uint32_t>();
    if (j.contains("max_windows")) opt.max_windows = j["max_windows"].get<Index>();
    if (j.contains("max_window_length"))
        opt.max_window_length = j["max_window_length"].get<Index>();
    return opt;
}

// "consecutive,dyadic,greedy,random:100" -> battery object; anything not
// named is disabled
inline json battery_flag_to_json(const std::string& flag) {
    json battery;
    battery["consecutive"] = false;
    battery["dyadic"] = false;
    battery["greedy"] = false;
    battery["random_count"] = 0;
    std::size_t pos = 0;
    while (pos <= flag.size()) {
        const auto comma = flag.find(',', pos);
        const std::string item =
            flag.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (item == "consecutive") battery["consecutive"] = true;
        else if (item == "dyadic") battery["dyadic"] = true;
        else if (item == "greedy") battery["greedy"] = true;
        else if (item.rfind("random:", 0) == 0)
            battery["random_count"] = static_cast<std::uint32_t>(std::stoul(item.substr(7)));
        else if (!item.empty())
            throw SchemaError("unknown battery component '" + item + "'");
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return battery;
}

inline std::vector<Interval> intervals_from_json(const json& j) {
    if (!j.is_array()) throw SchemaError("'intervals' must be an array of [lo, hi] pairs");
    std::vector<Interval> out;
    for (const auto& e : j) {
        if (!e.is_array() || e.size() != 2)
            throw SchemaError("each interval must be a [lo, hi] pair");
        out.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    return out;
}

// Battery without exact probabilities (no greedy), for sampler-backed checks.
inline std::vector<ScheduleSource> sampler_battery(Index horizon,
                                                   const BatteryOptions& opt) {
    std::vector<ScheduleSource> sources;
    if (opt.consecutive) sources.push_back(ScheduleSource::consecutive(horizon));
    if (opt.dyadic) sources.push_back(ScheduleSource::dyadic(horizon));
    for (std::uint32_t r = 0; r < opt.random_count; ++r) {
        SplitMix64 rng(derive_seed(opt.seed, 0xBA77E4 + r));
        Schedule s;
        Index cur = 0;
        while (static_cast<Index>(s.size()) < opt.max_windows) {
            const Index a = cur + rng.below(5);
            const Index b = a + 1 + rng.below(opt.max_window_length);
            if (b >= horizon) break;
            s.a.push_back(a);
            s.b.push_back(b);
            cur = b;
        }
        if (!s.empty())
            sources.push_back(ScheduleSource::from_schedule("random_" + std::to_string(r), s));
    }
    return sources;
}

inline VerificationReport verify_mc_learnable_uniform(
    const ProcessSpec& spec, const RateFunction& rate, double lambda, double eps,
    std::uint64_t samples, const BatteryOptions& battery) {
    if (spec.kind != "sampled_random_walk")
        throw SchemaError("mc mode currently supports the 'sampled_random_walk' kind");
    if (!spec.seed) throw SchemaError("sampler specs require a seed");
    double step = 1.0, start = 0.0;
    for (const auto& [k, v] : spec.params) {
        if (k == "step") step = v;
        else if (k == "start") start = v;
        else throw SchemaError("unknown param '" + k + "' for sampled_random_walk");
    }
    const std::uint64_t seed = *spec.seed;
    auto sampler = [&](std::uint64_t replicate_seed) {
        return sample_random_walk(spec.horizon, step, start, replicate_seed);
    };

    const Index bound = rate_floor_index(rate(lambda, eps));
    const Index scan_cap = 512;  // windows per schedule before giving up
    VerificationReport report;
    report.claim = {"learnable_uniform", "", lambda, eps};
    report.horizon = spec.horizon;
    report.mode = "mc";
    report.samples = samples;
    report.confidence = 0.95;
    for (const auto& src : sampler_battery(spec.horizon, battery)) {
        ScheduleOutcome out;
        out.schedule_id = src.id;
        out.kind = OutcomeKind::exhausted;
        bool decided = false;
        bool all_bad = true;
        for (Index i = 0; i <= std::min(bound, scan_cap); ++i) {
            auto w = src.window(i);
            if (!w) break;
            if (w->second >= spec.horizon)
                throw InputError("schedule window exceeds horizon");
            const auto est = mc_estimate_window_probability(
                sampler, w->first, w->second, eps, samples, derive_seed(seed, i));
            if (est.estimate + est.half_width < lambda) {
                out.kind = OutcomeKind::good_window;
                out.window_index = i;
                out.probability = est.estimate;
                out.windows_checked = i + 1;
                decided = true;
                break;
            }
            if (!(est.estimate - est.half_width >= lambda)) all_bad = false;
            out.windows_checked = i + 1;
            out.probability = est.estimate;
        }
        if (!decided && all_bad && out.windows_checked == bound + 1)
            out.kind = OutcomeKind::defeated;
        report.outcomes.push_back(out);
    }
    report.verdict = metastable::detail::combine_outcomes(report.outcomes,
                                                          report.diagnostic);
    if (report.verdict == Verdict::inconclusive && report.diagnostic.empty())
        report.diagnostic = "mc confidence bounds did not separate from lambda";
    return report;
}

}  // namespace detail

inline int run_verify(const VerifyOptions& opt, std::string* report_out = nullptr) {
    json config = json::parse(read_file(opt.config_path), nullptr, true, true);
    metastable::detail::require_schema(config, kVerifySchema, "verify config");
    metastable::detail::reject_unknown_fields(
        config,
        {"schema", "check", "process", "process_file", "lambda", "epsilon", "rate",
         "modulus", "inequality", "battery", "seed", "mode", "samples", "output"},
        "verify config");

    // apply CLI overrides so the embedded config hash reflects the run
    if (opt.seed_override) config["seed"] = *opt.seed_override;
    if (opt.mode_override) config["mode"] = *opt.mode_override;
    if (opt.samples_override) config["samples"] = *opt.samples_override;
    if (opt.lambda_override) config["lambda"] = *opt.lambda_override;
    if (opt.epsilon_override) config["epsilon"] = *opt.epsilon_override;
    if (opt.horizon_override) {
        if (!config.contains("process"))
            throw SchemaError("--horizon needs an inline process spec");
        config["process"]["horizon"] = *opt.horizon_override;
    }
    if (opt.battery_override)
        config["battery"] = detail::battery_flag_to_json(*opt.battery_override);
    const std::string config_hash = "fnv1a64:" + hex64(fnv1a64(config.dump()));

    if (!config.contains("check") || !config["check"].is_string())
        throw SchemaError("verify config needs string field 'check'");
    const std::string check = config["check"].get<std::string>();
    const std::uint64_t seed = config.contains("seed") ? config["seed"].get<std::uint64_t>() : 1;
    const std::string mode =
        config.contains("mode") ? config["mode"].get<std::string>() : "exact";
    if (mode != "exact" && mode != "mc")
        throw SchemaError("mode must be 'exact' or 'mc'");

    std::optional<ProcessSpec> spec;
    std::optional<AtomicProcess> process;
    if (config.contains("process")) {
        spec = spec_from_json(config["process"]);
    } else if (config.contains("process_file")) {
        process = process_from_json(
            json::parse(read_file(config["process_file"].get<std::string>())));
    } else {
        throw SchemaError("verify config needs 'process' or 'process_file'");
    }

    const bool needs_lambda = check != "crossing_inequality";
    double lambda = 0.5, eps = 0.5;
    if (needs_lambda) {
        lambda = metastable::detail::require_number(config, "lambda", "verify config");
        eps = metastable::detail::require_number(config, "epsilon", "verify config");
    }

    CheckOptions check_opts;
    check_opts.threads = opt.threads;

    VerificationReport report;
    if (mode == "mc") {
        if (check != "learnable_uniform")
            throw SchemaError("mc mode supports only the learnable_uniform check");
        if (!spec) throw SchemaError("mc mode needs an inline process spec");
        std::string rate_desc;
        const RateFunction rate = rate_from_json(config.at("rate"), rate_desc);
        const std::uint64_t samples =
            config.contains("samples") ? config["samples"].get<std::uint64_t>() : 10000;
        const auto battery = detail::battery_from_json(
            config.contains("battery") ? config["battery"] : json(), seed);
        report = detail::verify_mc_learnable_uniform(*spec, rate, lambda, eps, samples,
                                                     battery);
        report.claim.rate_desc = rate_desc;
        report.battery_version = battery.version;
    } else {
        if (!process) process = make_process(*spec);
        if (check == "learnable_uniform" || check == "learnable_pointwise" ||
            check == "metastable_uniform" || check == "metastable_pointwise") {
            std::string rate_desc;
            const RateFunction rate = rate_from_json(config.at("rate"), rate_desc);
            auto battery_opts = detail::battery_from_json(
                config.contains("battery") ? config["battery"] : json(), seed);
            const auto battery = build_battery(*process, lambda, eps, battery_opts);
            if (check == "learnable_uniform") {
                report = check_learnable_uniform(*process, rate, lambda, eps, battery,
                                                 check_opts);
            } else if (check == "learnable_pointwise") {
                report = check_learnable_pointwise(*process, rate, lambda, eps, battery,
                                                   check_opts);
            } else {
                const auto gs = battery_g_functions(battery);
                const auto mode_kind = check == "metastable_uniform"
                                           ? MetastableMode::uniform
                                           : MetastableMode::pointwise;
                report = check_metastable(*process, induced_metastable_bound(rate), lambda,
                                          eps, gs, mode_kind, check_opts);
            }
            report.claim.rate_desc = rate_desc;
            report.battery_version = battery_opts.version;
        } else if (check == "modulus") {
            const json& mj = config.at("modulus");
            metastable::detail::reject_unknown_fields(
                mj, {"kind", "threshold", "partitions"}, "modulus");
            ModulusClaim claim;
            claim.lambda = lambda;
            claim.epsilon = eps;
            const std::string kind = mj.at("kind").get<std::string>();
            if (kind == "tightness") claim.kind = ModulusKind::tightness;
            else if (kind == "boundedness") claim.kind = ModulusKind::boundedness;
            else if (kind == "fluctuation") claim.kind = ModulusKind::fluctuation;
            else if (kind == "crossing") claim.kind = ModulusKind::crossing;
            else throw SchemaError("unknown modulus kind '" + kind + "'");
            if (claim.kind == ModulusKind::fluctuation) {
                const auto th = lambda_modulus_from_json(mj.at("threshold"));
                claim.fluc_threshold = [th](double l, double) { return th(l); };
            } else if (claim.kind == ModulusKind::crossing) {
                const auto th = lambda_modulus_from_json(mj.at("threshold"));
                claim.crossing_threshold = [th](double l, double, Index) { return th(l); };
                if (!mj.contains("partitions"))
                    throw SchemaError("crossing modulus needs 'partitions': [[M, l], ...]");
                for (const auto& e : mj["partitions"])
                    claim.partitions.emplace_back(e.at(0).get<double>(),
                                                  e.at(1).get<Index>());
            } else {
                claim.threshold = lambda_modulus_from_json(mj.at("threshold"));
            }
            report = check_modulus(*process, claim);
            report.claim.rate_desc = mj.dump();
        } else if (check == "crossing_inequality") {
            const json& ij = config.at("inequality");
            metastable::detail::reject_unknown_fields(ij, {"kind", "intervals"},
                                                      "inequality");
            const std::string kind = ij.at("kind").get<std::string>();
            CrossingInequality ck;
            if (kind == "doob_up") ck = CrossingInequality::doob_up;
            else if (kind == "bishop_up") ck = CrossingInequality::bishop_up;
            else if (kind == "ivanov_down") ck = CrossingInequality::ivanov_down;
            else if (kind == "crossing_vs_up") ck = CrossingInequality::crossing_vs_up;
            else throw SchemaError("unknown inequality kind '" + kind + "'");
            report = check_crossing_inequalities(
                *process, detail::intervals_from_json(ij.at("intervals")), ck);
            report.claim.rate_desc = ij.dump();
        } else {
            throw SchemaError("unknown check '" + check + "'");
        }
    }

    report.seed = seed;
    const std::string payload = report_to_json(report, config_hash).dump(2) + "\n";
    if (report_out) *report_out = payload;
    std::string out_path = opt.output;
    if (out_path.empty() && config.contains("output"))
        out_path = config["output"].get<std::string>();
    if (out_path.empty())
        std::cout << payload;
    else
        write_file_atomic(out_path, payload);

    switch (report.verdict) {
        case Verdict::validated: return kExitValidated;
        case Verdict::violated: return kExitViolated;
        default: return kExitInconclusive;
    }
}

}  // namespace metastable::cli

// metastable — time-series crossing/fluctuation statistics, exact stochastic
// process generation, convergence-rate tables, and rate-claim verification
// with machine-readable reports.
//
// Subcommands:
//   stats     per-path fluctuation/crossing counts from a CSV of paths
//   simulate  materialize a process spec (exact atomization or sampled CSV)
//   rates     append theorem rates to a CSV of parameter rows
//   verify    run a verification config; exit code encodes the verdict
//
// Exit codes: 0 validated/success, 1 violated, 2 inconclusive,
//             3 config/schema error, 4 runtime error.
//
// METASTABLE_THREADS caps the verifier's worker count (default 1).

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "metastable/cli_commands.hpp"

namespace {

unsigned thread_cap_from_env() {
    const char* env = std::getenv("METASTABLE_THREADS");
    if (!env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    if (v < 1) return 1;
    return static_cast<unsigned>(v);
}

std::pair<double, double> parse_interval_flag(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw metastable::SchemaError("interval must look like lo:hi, got '" + text + "'");
    try {
        return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
    } catch (const std::exception&) {
        throw metastable::SchemaError("cannot parse interval '" + text + "'");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quantitative convergence toolkit for stochastic processes"};
    app.require_subcommand(1);

    // --- stats ---
    metastable::cli::StatsOptions stats;
    std::vector<std::string> interval_flags;
    auto* cmd_stats = app.add_subcommand("stats", "count fluctuations/crossings per path");
    cmd_stats->add_option("--input", stats.input, "CSV: one numeric column per path")
        ->required();
    cmd_stats->add_option("--output", stats.output, "output CSV (default stdout)");
    cmd_stats->add_option("--epsilon", stats.epsilons, "fluctuation threshold (repeatable)");
    cmd_stats->add_option("--interval", interval_flags, "crossing interval lo:hi (repeatable)");
    double partition_M = 0.0;
    std::int64_t partition_l = 0;
    auto* opt_m = cmd_stats->add_option("--partition-m", partition_M, "partition bound M");
    auto* opt_l = cmd_stats->add_option("--partition-l", partition_l, "partition cell count l");

    // --- simulate ---
    metastable::cli::SimulateOptions sim;
    std::uint64_t sim_horizon = 0, sim_seed = 0;
    auto* cmd_sim = app.add_subcommand("simulate", "materialize a process spec");
    cmd_sim->add_option("--input", sim.spec_path, "process spec JSON")->required();
    cmd_sim->add_option("--output", sim.output, "output file (default stdout)");
    auto* opt_sim_h = cmd_sim->add_option("--horizon", sim_horizon, "override spec horizon");
    auto* opt_sim_s = cmd_sim->add_option("--seed", sim_seed, "override spec seed");

    // --- rates ---
    metastable::cli::RatesOptions rates;
    auto* cmd_rates = app.add_subcommand("rates", "append theorem rates to a parameter CSV");
    cmd_rates->add_option("--input", rates.input, "CSV: theorem_id,K,p,lambda,epsilon,a_err")
        ->required();
    cmd_rates->add_option("--output", rates.output, "output CSV (default stdout)");

    // --- verify ---
    metastable::cli::VerifyOptions verify;
    std::uint64_t verify_seed = 0, verify_samples = 0, verify_horizon = 0;
    double verify_lambda = 0.0, verify_epsilon = 0.0;
    std::string verify_mode, battery_flag;
    auto* cmd_verify = app.add_subcommand("verify", "check a rate claim, emit a report");
    cmd_verify->add_option("--input", verify.config_path, "verification config JSON")
        ->required();
    cmd_verify->add_option("--output", verify.output, "report path (default: config/stdout)");
    auto* opt_v_seed = cmd_verify->add_option("--seed", verify_seed, "override config seed");
    auto* opt_v_lambda =
        cmd_verify->add_option("--lambda", verify_lambda, "override config lambda");
    auto* opt_v_eps =
        cmd_verify->add_option("--epsilon", verify_epsilon, "override config epsilon");
    auto* opt_v_horizon =
        cmd_verify->add_option("--horizon", verify_horizon, "override process horizon");
    auto* opt_v_mode =
        cmd_verify->add_option("--mode", verify_mode, "exact|mc")->check(CLI::IsMember({"exact", "mc"}));
    auto* opt_v_samples =
        cmd_verify->add_option("--samples", verify_samples, "mc sample count");
    auto* opt_v_battery = cmd_verify->add_option(
        "--schedule-battery", battery_flag, "e.g. consecutive,dyadic,greedy,random:100");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_stats->parsed()) {
            for (const auto& f : interval_flags)
                stats.intervals.push_back(parse_interval_flag(f));
            if (opt_m->count() != opt_l->count())
                throw metastable::SchemaError(
                    "--partition-m and --partition-l must be given together");
            if (opt_m->count() > 0) {
                stats.partition_M = partition_M;
                stats.partition_l = partition_l;
            }
            return metastable::cli::run_stats(stats);
        }
        if (cmd_sim->parsed()) {
            if (*opt_sim_h) sim.horizon_override = sim_horizon;
            if (*opt_sim_s) sim.seed_override = sim_seed;
            return metastable::cli::run_simulate(sim);
        }
        if (cmd_rates->parsed()) return metastable::cli::run_rates(rates);
        if (cmd_verify->parsed()) {
            verify.threads = thread_cap_from_env();
            if (*opt_v_seed) verify.seed_override = verify_seed;
            if (*opt_v_lambda) verify.lambda_override = verify_lambda;
            if (*opt_v_eps) verify.epsilon_override = verify_epsilon;
            if (*opt_v_horizon) verify.horizon_override = verify_horizon;
            if (*opt_v_mode) verify.mode_override = verify_mode;
            if (*opt_v_samples) verify.samples_override = verify_samples;
            if (*opt_v_battery) verify.battery_override = battery_flag;
            const auto t0 = std::chrono::steady_clock::now();
            const int code = metastable::cli::run_verify(verify);
            const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
            std::cerr << "verify finished in " << dt.count() << "s (exit " << code << ")\n";
            return code;
        }
    } catch (const metastable::SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return metastable::cli::kExitConfigError;
    } catch (const metastable::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return metastable::cli::kExitRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return metastable::cli::kExitRuntimeError;
    }
    return metastable::cli::kExitRuntimeError;
}

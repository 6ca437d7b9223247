#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "metastable/cli_commands.hpp"
#include "metastable/io.hpp"

using namespace metastable;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "metastable_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

std::string temp_file(const char* name) { return (temp_dir() / name).string(); }

const std::string kConfigs = std::string(METASTABLE_SOURCE_DIR) + "/configs/";

}  // namespace

TEST_CASE("process JSON round-trips doubles bit-exactly") {
    SplitMix64 rng(61);
    std::vector<std::vector<double>> paths(3);
    for (auto& path : paths) {
        for (int t = 0; t < 9; ++t) {
            // awkward values on purpose: thirds, tiny magnitudes, long mantissas
            const double v = (static_cast<double>(rng.below(2000)) - 1000.0) / 3.0 +
                             rng.unit() * 1e-13;
            path.push_back(v);
        }
    }
    AtomicProcess original(AtomicSpace({0.25, 1.0 / 3.0, 1.0 - 0.25 - 1.0 / 3.0}),
                           std::move(paths), 40);
    const json j = process_to_json(original);
    const auto text = j.dump();
    const AtomicProcess back = process_from_json(json::parse(text));
    REQUIRE(back.atoms() == original.atoms());
    CHECK(back.horizon == original.horizon);
    for (std::size_t atom = 0; atom < back.atoms(); ++atom) {
        CHECK(std::memcmp(back.paths[atom].data(), original.paths[atom].data(),
                          back.paths[atom].size() * sizeof(double)) == 0);
        CHECK(std::memcmp(&back.space.weights[atom], &original.space.weights[atom],
                          sizeof(double)) == 0);
    }
}

TEST_CASE("schemas are strict") {
    json j = process_to_json(gen_staircase_adversarial(2, 2));
    j["surprise"] = 1;
    CHECK_THROWS_AS(process_from_json(j), SchemaError);
    j.erase("surprise");
    j["schema"] = "metastable/process/v999";
    CHECK_THROWS_AS(process_from_json(j), SchemaError);

    json spec = {{"schema", kSpecSchema},
                 {"kind", "staircase_adversarial"},
                 {"horizon", 6},
                 {"params", {{"M", 2}, {"N", 2}}}};
    CHECK_NOTHROW(spec_from_json(spec));
    spec["extra"] = true;
    CHECK_THROWS_AS(spec_from_json(spec), SchemaError);
    spec.erase("extra");
    spec["horizon"] = 0;
    CHECK_THROWS_AS(spec_from_json(spec), SchemaError);
}

TEST_CASE("csv parsing") {
    const auto table = parse_csv("a,b\n1,\"2,5\"\n3,\"he said \"\"hi\"\"\"\n");
    REQUIRE(table.header == std::vector<std::string>{"a", "b"});
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0][1] == "2,5");
    CHECK(table.rows[1][1] == "he said \"hi\"");
    CHECK_THROWS_AS(parse_csv("a\n\"unterminated\n"), InputError);
    CHECK_THROWS_AS(parse_csv_number("nan", 3, "x"), InputError);
    CHECK_THROWS_AS(parse_csv_number("1.5abc", 3, "x"), InputError);

    // 17 significant digits survive a round trip
    const double v = 0.1 + 0.2;
    CHECK(parse_csv_number(format_double17(v), 1, "x") == v);
}

TEST_CASE("stats command") {
    const std::string in = temp_file("stats_in.csv");
    write_file_atomic(in, "flat,zigzag\n0,0\n0,1\n0,0\n0,1\n");
    cli::StatsOptions opt;
    opt.input = in;
    opt.epsilons = {0.5};
    opt.intervals = {{0.25, 0.75}};
    opt.partition_M = 1.0;
    opt.partition_l = 8;
    const auto csv = cli::run_stats_to_csv(opt);
    const auto table = parse_csv(csv);
    REQUIRE(table.header == std::vector<std::string>{"path", "metric", "param", "value"});
    auto value_of = [&](const std::string& path, const std::string& metric) {
        for (const auto& row : table.rows)
            if (row[0] == path && row[1] == metric) return row[3];
        return std::string("missing");
    };
    CHECK(value_of("flat", "fluctuations") == "0");
    CHECK(value_of("zigzag", "fluctuations") == "3");
    CHECK(value_of("zigzag", "crossings") == "3");
    CHECK(value_of("zigzag", "upcrossings") == "2");
    CHECK(value_of("zigzag", "downcrossings") == "1");
    CHECK(value_of("zigzag", "partition_max_crossings") == "3");

    SECTION("monotone columns cross any interval at most once") {
        write_file_atomic(in, "rising\n-1\n-0.5\n0\n0.5\n1\n");
        cli::StatsOptions mono;
        mono.input = in;
        mono.intervals = {{-0.75, -0.25}, {-0.5, 0.5}, {0.25, 0.75}};
        const auto t = parse_csv(cli::run_stats_to_csv(mono));
        for (const auto& row : t.rows)
            if (row[1] == "crossings") CHECK(std::stoul(row[3]) <= 1);
    }
    SECTION("non-finite input is rejected with its line number") {
        write_file_atomic(in, "a\n1\nnan\n");
        cli::StatsOptions bad;
        bad.input = in;
        bad.epsilons = {0.5};
        try {
            cli::run_stats_to_csv(bad);
            FAIL("expected InputError");
        } catch (const InputError& e) {
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
}

TEST_CASE("simulate command is deterministic and feeds the other commands") {
    const std::string spec_path = temp_file("spec.json");
    write_file_atomic(spec_path, json({{"schema", kSpecSchema},
                                       {"kind", "staircase_adversarial"},
                                       {"horizon", 6},
                                       {"params", {{"M", 2}, {"N", 2}}}})
                                     .dump());
    cli::SimulateOptions opt;
    opt.spec_path = spec_path;
    const auto first = cli::run_simulate_to_string(opt);
    const auto second = cli::run_simulate_to_string(opt);
    CHECK(first == second);
    const auto process = process_from_json(json::parse(first));
    CHECK(process.atoms() == 2);
    CHECK(process.horizon == 6);

    SECTION("the tightness example at level 2 is the two-cell refinement") {
        write_file_atomic(spec_path, json({{"schema", kSpecSchema},
                                           {"kind", "tightness_ex"},
                                           {"horizon", 3},
                                           {"params", json::object()}})
                                         .dump());
        const auto proc = process_from_json(json::parse(cli::run_simulate_to_string(opt)));
        CHECK(proc.atoms() == 2);
        for (Index n = 0; n < 3; ++n)
            CHECK(expectation(proc, n) == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("simulate output feeds verify via process_file untouched") {
        const std::string proc_path = temp_file("simulated_process.json");
        write_file_atomic(proc_path, first);
        const std::string config_path = temp_file("verify_on_file.json");
        write_file_atomic(config_path, json({{"schema", kVerifySchema},
                                             {"check", "learnable_uniform"},
                                             {"process_file", proc_path},
                                             {"lambda", 0.5},
                                             {"epsilon", 0.5},
                                             {"rate", {{"constant", 3.0}}},
                                             {"battery",
                                              {{"consecutive", true},
                                               {"dyadic", false},
                                               {"greedy", false},
                                               {"random_count", 0}}},
                                             {"seed", 1}})
                                           .dump());
        cli::VerifyOptions vopt;
        vopt.config_path = config_path;
        vopt.output = temp_file("verify_on_file_report.json");
        CHECK(cli::run_verify(vopt) == 1);  // the staircase defeats rate 3
    }

    SECTION("sampled specs emit seeded CSV that stats consumes untouched") {
        write_file_atomic(spec_path, json({{"schema", kSpecSchema},
                                           {"kind", "sampled_random_walk"},
                                           {"horizon", 8},
                                           {"seed", 42},
                                           {"params", {{"samples", 5}}}})
                                         .dump());
        const std::string csv_path = temp_file("sampled.csv");
        write_file_atomic(csv_path, cli::run_simulate_to_string(opt));
        cli::StatsOptions sopt;
        sopt.input = csv_path;
        sopt.epsilons = {1.0};
        const auto stats_table = parse_csv(cli::run_stats_to_csv(sopt));
        CHECK(stats_table.rows.size() == 5);  // one fluctuation row per path
    }

    SECTION("sampled specs emit seeded CSV, byte-identical per seed") {
        write_file_atomic(spec_path, json({{"schema", kSpecSchema},
                                           {"kind", "sampled_random_walk"},
                                           {"horizon", 8},
                                           {"seed", 42},
                                           {"params", {{"samples", 5}}}})
                                         .dump());
        const auto csv1 = cli::run_simulate_to_string(opt);
        const auto csv2 = cli::run_simulate_to_string(opt);
        CHECK(csv1 == csv2);
        const auto table = parse_csv(csv1);
        CHECK(table.header.size() == 5);
        CHECK(table.rows.size() == 8);
        cli::SimulateOptions reseeded = opt;
        reseeded.seed_override = 43;
        CHECK(cli::run_simulate_to_string(reseeded) != csv1);
    }
}

TEST_CASE("rates command reproduces the summary-table progression") {
    const std::string in = temp_file("rates_in.csv");
    write_file_atomic(in,
                      "theorem_id,K,p,lambda,epsilon,a_err\n"
                      "monotone_det,1,,0.5,0.5,\n"
                      "thm7.1,1,,0.5,0.5,\n"
                      "thm7.2,1,inf,0.5,0.5,\n"
                      "thm7.4,1,,0.5,0.5,\n");
    cli::RatesOptions opt;
    opt.input = in;
    const auto table = parse_csv(cli::run_rates_to_csv(opt));
    REQUIRE(table.rows.size() == 4);
    const double r0 = std::stod(table.rows[0][6]);
    const double r1 = std::stod(table.rows[1][6]);
    const double r2 = std::stod(table.rows[2][6]);
    const double r3 = std::stod(table.rows[3][6]);
    CHECK(r0 == 2.0);     // K/eps
    CHECK(r1 == 88.0);    // cK/(lambda eps)
    CHECK(r2 == 1760.0);  // cK^2/(lambda eps^2)
    CHECK(r3 == 4055040.0 * 16.0);  // cK^2/(lambda eps)^2
    CHECK(r0 < r1);
    CHECK(r1 < r2);
    CHECK(r2 < r3);

    SECTION("unknown theorem ids are rejected with their row") {
        write_file_atomic(in,
                          "theorem_id,K,p,lambda,epsilon,a_err\n"
                          "thm9.9,1,,0.5,0.5,\n");
        try {
            cli::run_rates_to_csv(opt);
            FAIL("expected InputError");
        } catch (const InputError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SECTION("domain violations are row-indexed") {
        write_file_atomic(in,
                          "theorem_id,K,p,lambda,epsilon,a_err\n"
                          "thm7.2,0.25,inf,0.5,0.5,\n");
        CHECK_THROWS_AS(cli::run_rates_to_csv(opt), InputError);
    }
}

TEST_CASE("verify command on the bundled configs") {
    SECTION("doob_on_random_walk validates with exit 0") {
        cli::VerifyOptions opt;
        opt.config_path = kConfigs + "doob_on_random_walk.json";
        opt.output = temp_file("report_doob.json");
        std::string payload;
        CHECK(cli::run_verify(opt, &payload) == 0);
        const json report = json::parse(payload);
        CHECK(report["verdict"] == "validated");
        CHECK(report["schema"] == kReportSchema);
    }
    SECTION("staircase_defeats_small_rate is violated with a schedule witness") {
        cli::VerifyOptions opt;
        opt.config_path = kConfigs + "staircase_defeats_small_rate.json";
        opt.output = temp_file("report_staircase.json");
        std::string payload;
        CHECK(cli::run_verify(opt, &payload) == 1);
        const json report = json::parse(payload);
        CHECK(report["verdict"] == "violated");
        REQUIRE(report["witness"].is_object());
        CHECK(report["witness"]["schedule"]["a"].size() == 4);
    }
    SECTION("reports are byte-identical across repeated runs") {
        cli::VerifyOptions opt;
        opt.config_path = kConfigs + "staircase_defeats_small_rate.json";
        opt.output = temp_file("report_a.json");
        std::string first, second;
        cli::run_verify(opt, &first);
        opt.output = temp_file("report_b.json");
        cli::run_verify(opt, &second);
        CHECK(first == second);
        CHECK(read_file(temp_file("report_a.json")) == read_file(temp_file("report_b.json")));
    }
    SECTION("malformed configs raise schema errors") {
        const std::string bad = temp_file("bad_config.json");
        write_file_atomic(bad, "{\"schema\": \"metastable/verify/v1\", \"oops\": 1}");
        cli::VerifyOptions opt;
        opt.config_path = bad;
        CHECK_THROWS_AS(cli::run_verify(opt), SchemaError);
    }
}

TEST_CASE("verify in monte-carlo mode reports confidence") {
    const std::string config = temp_file("mc_config.json");
    write_file_atomic(config, json({{"schema", kVerifySchema},
                                    {"check", "learnable_uniform"},
                                    {"process",
                                     {{"schema", kSpecSchema},
                                      {"kind", "sampled_random_walk"},
                                      {"horizon", 64},
                                      {"seed", 7},
                                      {"params", json::object()}}},
                                    {"lambda", 0.5},
                                    {"epsilon", 0.5},
                                    {"rate", {{"constant", 3.0}}},
                                    {"mode", "mc"},
                                    {"samples", 400},
                                    {"battery",
                                     {{"consecutive", true},
                                      {"dyadic", false},
                                      {"greedy", false},
                                      {"random_count", 2}}},
                                    {"seed", 7}})
                                  .dump());
    cli::VerifyOptions opt;
    opt.config_path = config;
    opt.output = temp_file("mc_report.json");
    std::string payload;
    const int code = cli::run_verify(opt, &payload);
    const json report = json::parse(payload);
    CHECK(report["mode"] == "mc");
    CHECK(report["samples"] == 400);
    CHECK(report["confidence"] == 0.95);
    // a unit-step walk oscillates every step: the claim is decisively violated
    CHECK(code == 1);
}

TEST_CASE("the built binary answers --help") {
    const std::string cmd = std::string(METASTABLE_CLI_BIN) + " --help > /dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "metastable/path_stats.hpp"
#include "metastable/prob_space.hpp"
#include "metastable/process_library.hpp"

using namespace metastable;

TEST_CASE("every exact generator yields a normalized space and its advertised class") {
    struct Case {
        const char* name;
        AtomicProcess process;
        MartingaleKind expected;
    };
    const auto almost = gen_almost_supermartingale(5, {0.1, 0.05, 0.025, 0.0125, 0.00625}, 0.25);
    std::vector<Case> cases;
    cases.push_back({"random_walk", gen_random_walk(6), MartingaleKind::martingale});
    cases.push_back({"binary_tree", gen_binary_martingale_tree(6), MartingaleKind::martingale});
    cases.push_back(
        {"submartingale", gen_submartingale_tree(6, 0, 0.5, 0.25, 5), MartingaleKind::submartingale});
    cases.push_back({"supermartingale", gen_submartingale_tree(6, 0, 0.5, 0.25, 5, true),
                     MartingaleKind::supermartingale});
    for (auto& c : cases) {
        StableSum w;
        for (double v : c.process.space.weights) w.add(v);
        CHECK(w.value() == Catch::Approx(1.0).margin(1e-12));
        CHECK(classify_martingale(c.process, natural_filtration(c.process)).kind == c.expected);
    }
    // the almost-supermartingale satisfies its defining inequality cellwise
    const auto& proc = almost.process;
    const auto filt = natural_filtration(proc);
    for (Index n = 0; n + 1 < proc.stored_length(); ++n) {
        const auto ce = conditional_expectation(proc, n + 1, filt, n);
        for (std::size_t atom = 0; atom < proc.atoms(); ++atom)
            CHECK(ce[atom] <=
                  proc.value(atom, n) + almost.error_seq[static_cast<std::size_t>(n)] + 1e-12);
    }
}

TEST_CASE("tightness example fields") {
    const auto p = gen_tightness_example(6);  // levels 1..3
    for (Index n = 0; n < 6; ++n)
        CHECK(expectation(p, n) == Catch::Approx(1.0).margin(1e-12));
    double max_value = 0.0;
    for (std::size_t atom = 0; atom < p.atoms(); ++atom)
        for (double v : p.paths[atom]) max_value = std::max(max_value, v);
    CHECK(max_value == 3.0);  // level count when six variables are generated
}

TEST_CASE("vanishing indicator example") {
    // odd horizon: every visit to 1 is followed by a return to 0 within range,
    // so each contributes exactly two fluctuations
    const Index horizon = 41;
    const auto p = gen_vanishing_indicator(horizon);
    SECTION("even indices vanish") {
        for (Index t = 0; t < horizon; t += 2)
            for (std::size_t atom = 0; atom < p.atoms(); ++atom)
                CHECK(p.value(atom, t) == 0.0);
    }
    SECTION("window probabilities") {
        for (Index n = 0; 2 * n + 1 < horizon; ++n)
            CHECK(window_probability(p, 2 * n, 2 * n + 1, 0.5) ==
                  Catch::Approx(0.5 / (static_cast<double>(n) + 1.0)).margin(1e-12));
    }
    SECTION("expected fluctuations are the partial harmonic sums") {
        // two fluctuations per visit: E[Fluc] = sum_{n<m} 1/(n+1)
        const Index m = horizon / 2;
        double harmonic = 0.0;
        for (Index n = 0; n < m; ++n) harmonic += 1.0 / (static_cast<double>(n) + 1.0);
        const double expected = expected_over_atoms(p, [&](std::size_t atom) {
            return static_cast<double>(count_fluctuations(p.stored_path(atom), 0.5));
        });
        CHECK(expected == Catch::Approx(harmonic).margin(1e-9));
    }
}

TEST_CASE("adversarial staircase example") {
    for (std::int64_t M : {1, 2, 3}) {
        for (std::int64_t N : {1, 2, 3}) {
            const auto p = gen_staircase_adversarial(M, N);
            const double eps = 1.0 / static_cast<double>(M);
            const Index mn = static_cast<Index>(M * N);
            REQUIRE(p.atoms() == static_cast<std::size_t>(N));
            for (Index j = 0; j < mn; ++j) {
                // exactly one atom jumps by 1/M between j and j+1
                std::size_t jumpers = 0;
                for (std::size_t atom = 0; atom < p.atoms(); ++atom)
                    if (std::abs(p.value(atom, j + 1) - p.value(atom, j)) >= eps) ++jumpers;
                CHECK(jumpers == 1);
                CHECK(window_probability(p, j, j + 1, eps) ==
                      1.0 / static_cast<double>(N));
            }
            CHECK(window_probability(p, mn, mn + 1, eps) == 0.0);
            for (std::size_t atom = 0; atom < p.atoms(); ++atom) {
                const auto& path = p.paths[atom];
                for (std::size_t t = 0; t + 1 < path.size(); ++t)
                    CHECK(path[t] <= path[t + 1]);  // monotone
                CHECK(path.front() >= 0.0);
                CHECK(path.back() <= 1.0);
            }
        }
    }
}

TEST_CASE("slow fluctuation example") {
    const std::vector<double> a_seq = {1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125};
    const auto p = gen_slow_fluc(a_seq, 6);
    SECTION("each path crosses any interval at most twice") {
        for (std::size_t atom = 0; atom < p.atoms(); ++atom) {
            for (double lo : {0.25, 0.75, 1.5, 2.5}) {
                const Interval iv(lo, lo + 0.5);
                CHECK(count_crossings(p.stored_path(atom), iv) <= 2);
            }
        }
    }
    SECTION("the exact Fluc_1 tail follows the a-sequence") {
        // a path that climbs to n0 - 1 and falls back to 0 carries n0
        // fluctuations (the fall is one more), so the exact tail is
        // P(Fluc_1 >= N) = a_{max(N-1, 1)}, squeezed between a_N and a_{N-1}
        for (Index N = 1; N < 6; ++N) {
            StableSum tail;
            for (std::size_t atom = 0; atom < p.atoms(); ++atom)
                if (static_cast<double>(count_fluctuations(p.stored_path(atom), 1.0)) >=
                    static_cast<double>(N))
                    tail.add(p.space.weights[atom]);
            const std::size_t idx = static_cast<std::size_t>(N >= 2 ? N - 1 : 1);
            CHECK(tail.value() == Catch::Approx(a_seq[idx]).margin(1e-12));
            CHECK(tail.value() >= a_seq[static_cast<std::size_t>(N)] - 1e-12);
        }
    }
    SECTION("all-zero sequence gives the zero process") {
        const auto zero = gen_slow_fluc({0.0}, 4);
        for (std::size_t atom = 0; atom < zero.atoms(); ++atom)
            for (double v : zero.paths[atom]) CHECK(v == 0.0);
    }
}

TEST_CASE("random walk tree expectations and padding") {
    const auto walk = gen_random_walk(8, 20, 0.5, 1.0);
    CHECK(walk.horizon == 20);
    CHECK(walk.stored_length() == 9);
    for (Index n = 0; n < 20; ++n)
        CHECK(expectation(walk, n) == Catch::Approx(1.0).margin(1e-12));
    // the constant extension keeps the martingale property trivially
    CHECK(classify_martingale(walk, natural_filtration(walk)).kind ==
          MartingaleKind::martingale);
}

TEST_CASE("submartingale tree drift is recovered by the decomposition") {
    const auto sub = gen_submartingale_tree(7, 0, 0.5, 0.25, 11);
    const auto filt = natural_filtration(sub);
    const auto decomp = doob_decompose(sub, filt);
    // the predictable part must be exactly the injected cumulative drift,
    // i.e. X minus the pure walk; reconstruct the walk by subtracting A
    const auto walk = gen_random_walk(7, 0, 0.5);
    for (std::size_t atom = 0; atom < sub.atoms(); ++atom)
        for (Index n = 0; n < sub.stored_length(); ++n)
            CHECK(std::abs(decomp.martingale_part.value(atom, n) - walk.value(atom, n)) <=
                  1e-12);
    SECTION("zero drift is a martingale") {
        const auto nodrift = gen_submartingale_tree(6, 0, 0.5, 0.0, 11);
        CHECK(classify_martingale(nodrift, natural_filtration(nodrift)).kind ==
              MartingaleKind::martingale);
    }
    SECTION("seeded generation replays bit-exactly") {
        const auto again = gen_submartingale_tree(7, 0, 0.5, 0.25, 11);
        CHECK(again.paths == sub.paths);
        const auto other = gen_submartingale_tree(7, 0, 0.5, 0.25, 12);
        CHECK(other.paths != sub.paths);
    }
}

TEST_CASE("almost-supermartingale certificates") {
    std::vector<double> errors;
    double a = 0.5;
    for (int t = 0; t < 8; ++t) errors.push_back(a / std::pow(2.0, t + 2));
    const auto fixture = gen_almost_supermartingale(8, errors, a);
    const auto& X = fixture.process;
    const auto filt = natural_filtration(X);
    CHECK(fixture.K > expectation(X, 0));
    CHECK(fixture.K >= 1.0);

    // Y_n = X_n - sum_{i<n} E_i is a supermartingale with sup E|Y_n| < K + 2a
    std::vector<std::vector<double>> y_paths = X.paths;
    for (std::size_t atom = 0; atom < X.atoms(); ++atom) {
        double cum = 0.0;
        for (Index n = 0; n < X.stored_length(); ++n) {
            y_paths[atom][static_cast<std::size_t>(n)] -= cum;
            if (n < static_cast<Index>(errors.size())) cum += errors[static_cast<std::size_t>(n)];
        }
    }
    AtomicProcess Y(X.space, std::move(y_paths), X.horizon);
    const auto cls = classify_martingale(Y, filt);
    CHECK(cls.max_super_violation <= 1e-9);
    CHECK(sup_expectation_abs(Y) < fixture.K + 2.0 * a);

    CHECK_THROWS_AS(gen_almost_supermartingale(4, {1.0, 1.0}, 0.5), DomainError);
}

TEST_CASE("ergodic rotation averages") {
    SECTION("constant functions average to themselves") {
        StepFunction f{std::vector<double>(4, 0.75)};
        const auto p = gen_ergodic_averages(3, 8, f, 16);
        for (std::size_t atom = 0; atom < p.atoms(); ++atom)
            for (double v : p.paths[atom]) CHECK(v == Catch::Approx(0.75).margin(1e-12));
    }
    SECTION("averaging preserves the L1 norm bound") {
        StepFunction f{{0.0, 0.25, 1.0, 0.5, 0.125, 0.75, 0.375, 0.875}};
        const auto p = gen_ergodic_averages(5, 8, f, 64);
        StableSum norm_f;
        for (std::size_t atom = 0; atom < p.atoms(); ++atom)
            norm_f.add(p.space.weights[atom] * std::abs(p.value(atom, 0)));
        for (Index n = 0; n < 64; ++n) {
            StableSum norm_n;
            for (std::size_t atom = 0; atom < p.atoms(); ++atom)
                norm_n.add(p.space.weights[atom] * std::abs(p.value(atom, n)));
            CHECK(norm_n.value() <= norm_f.value() + 1e-12);
        }
    }
    SECTION("Bishop upcrossing inequality at the horizon") {
        StepFunction f{{0.0, 0.5, 1.0, 0.25, 0.75, 0.125, 0.875, 0.375}};
        const auto p = gen_ergodic_averages(13, 21, f, 128);
        for (const auto& iv : {Interval(0.25, 0.5), Interval(0.375, 0.625)}) {
            StableSum up, bound;
            for (std::size_t atom = 0; atom < p.atoms(); ++atom) {
                const double w = p.space.weights[atom];
                up.add(w * static_cast<double>(count_upcrossings(p.stored_path(atom), iv)));
                bound.add(w * std::max(0.0, p.value(atom, 0) - iv.lo));
            }
            CHECK(up.value() <= bound.value() / iv.width() + 1e-12);
        }
    }
    SECTION("refinement cells permute under the rotation") {
        // f on a grid coarser than the rotation denominator still atomizes
        StepFunction f{{0.0, 1.0}};
        const auto p = gen_ergodic_averages(1, 3, f, 9);
        CHECK(p.atoms() == 6);  // lcm(2, 3)
    }
}

TEST_CASE("specker-style monotone sequences") {
    const auto p = gen_specker_monotone({0.0, 0.5, 0.75, 0.875, 0.9375}, 16);
    const auto cls = classify_martingale(p, natural_filtration(p));
    CHECK(cls.max_sub_violation <= 1e-12);  // qualifies as a submartingale
    // a single-atom deterministic process is never a martingale unless constant
    CHECK(cls.kind == MartingaleKind::submartingale);

    std::vector<double> full(static_cast<std::size_t>(p.horizon));
    for (Index t = 0; t < p.horizon; ++t)
        full[static_cast<std::size_t>(t)] = p.value(0, t);

    const double K = 1.0;
    const GFunction g = [](Index n) { return (n % 3) + 1; };
    for (double eps : {0.25, 0.5}) {
        const Index bound = monotone_metastable_bound(K, eps, g);
        const auto stable = find_stability_window(
            full, eps, [&](std::size_t n) { return static_cast<std::size_t>(g(n)); },
            static_cast<std::size_t>(bound));
        CHECK(stable.has_value());
        CHECK(count_fluctuations(full, eps) <=
              static_cast<std::size_t>(std::ceil(2.0 * K / eps)));
    }
    CHECK_THROWS_AS(gen_specker_monotone({1.0, 0.5}), DomainError);
}

TEST_CASE("process spec dispatch") {
    ProcessSpec spec;
    spec.kind = "staircase_adversarial";
    spec.params = {{"M", 2.0}, {"N", 2.0}};
    spec.horizon = 6;
    const auto p = make_process(spec);
    CHECK(p.atoms() == 2);
    CHECK(p.horizon == 6);

    spec.params["bogus"] = 1.0;
    CHECK_THROWS_AS(make_process(spec), SchemaError);
    spec.params.erase("bogus");
    spec.kind = "unheard_of";
    CHECK_THROWS_AS(make_process(spec), SchemaError);
}

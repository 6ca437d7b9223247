#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "metastable/path_stats.hpp"
#include "metastable/prob_space.hpp"
#include "metastable/process_library.hpp"
#include "metastable/rng.hpp"

using namespace metastable;

TEST_CASE("atomic space validation") {
    CHECK_NOTHROW(AtomicSpace({0.5, 0.5}));
    CHECK_NOTHROW(AtomicSpace::uniform(3));
    CHECK_THROWS_AS(AtomicSpace({0.5, 0.4}), DomainError);
    CHECK_THROWS_AS(AtomicSpace({1.5, -0.5}), DomainError);
    CHECK_THROWS_AS(AtomicSpace(std::vector<double>{}), DomainError);
}

TEST_CASE("probability of events") {
    const AtomicSpace space({0.25, 0.25, 0.5});
    CHECK(probability(space, full_event(3)) == 1.0);
    CHECK(probability(space, empty_event(3)) == 0.0);
    Event e(3, false);
    e[2] = true;
    CHECK(probability(space, e) == 0.5);
    CHECK_THROWS_AS(probability(space, Event(2, true)), InputError);
}

TEST_CASE("expectations") {
    SECTION("two-atom mean") {
        AtomicProcess p(AtomicSpace({0.5, 0.5}), {{0.0, 0.0}, {2.0, 2.0}});
        CHECK(expectation(p, 0) == 1.0);
    }
    SECTION("constant process") {
        AtomicProcess p(AtomicSpace::uniform(4), std::vector<std::vector<double>>(
                                                     4, std::vector<double>(3, 7.0)));
        for (Index n = 0; n < 3; ++n) CHECK(expectation(p, n) == 7.0);
    }
    SECTION("index bounds") {
        AtomicProcess p(AtomicSpace::uniform(1), {{1.0, 2.0}});
        CHECK_THROWS_AS(expectation(p, 2), InputError);
    }
}

TEST_CASE("the tightness example is tight but almost surely unbounded") {
    const auto process = gen_tightness_example(10);  // covers levels 1..4
    for (Index n = 0; n < 10; ++n)
        CHECK(expectation(process, n) == Catch::Approx(1.0).margin(1e-12));
    // P(sup X_n >= N) = 1 for every N up to the deepest generated level
    for (double level = 1.0; level <= 4.0; ++level) {
        StableSum mass;
        for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
            double sup = 0.0;
            for (double v : process.paths[atom]) sup = std::max(sup, v);
            if (sup >= level) mass.add(process.space.weights[atom]);
        }
        CHECK(mass.value() == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("conditional expectations") {
    const auto walk = gen_random_walk(5);
    const auto filt = natural_filtration(walk);

    SECTION("trivial filtration averages everything") {
        Filtration trivial;
        trivial.cells.assign(6, std::vector<std::uint32_t>(walk.atoms(), 0));
        const auto ce = conditional_expectation(walk, 3, trivial, 0);
        for (double v : ce) CHECK(v == Catch::Approx(expectation(walk, 3)).margin(1e-12));
    }
    SECTION("discrete filtration reproduces the variable") {
        Filtration discrete;
        std::vector<std::uint32_t> ids(walk.atoms());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::uint32_t>(i);
        discrete.cells.assign(6, ids);
        const auto ce = conditional_expectation(walk, 4, discrete, 4);
        for (std::size_t atom = 0; atom < walk.atoms(); ++atom)
            CHECK(ce[atom] == walk.value(atom, 4));
    }
    SECTION("walk increments are centered: E[X_{n+1} | F_n] = X_n exactly") {
        for (Index n = 0; n + 1 < 6; ++n) {
            const auto ce = conditional_expectation(walk, n + 1, filt, n);
            for (std::size_t atom = 0; atom < walk.atoms(); ++atom)
                CHECK(ce[atom] == walk.value(atom, n));
        }
    }
    SECTION("non-refining filtrations are rejected") {
        Filtration broken;
        broken.cells.push_back({0, 0, 1, 1});
        broken.cells.push_back({0, 1, 0, 1});  // splits across old cells
        AtomicProcess p(AtomicSpace::uniform(4),
                        std::vector<std::vector<double>>(4, std::vector<double>(2, 0.0)));
        CHECK_THROWS_AS(conditional_expectation(p, 1, broken, 1), ContractError);
    }
}

TEST_CASE("martingale classification") {
    SECTION("random walk is a martingale") {
        const auto walk = gen_random_walk(6);
        const auto cls = classify_martingale(walk, natural_filtration(walk));
        CHECK(cls.kind == MartingaleKind::martingale);
        CHECK(cls.max_equality_violation <= 1e-12);
    }
    SECTION("drifted tree is a submartingale, negated a supermartingale") {
        const auto sub = gen_submartingale_tree(6, 0, 1.0, 0.25, 99);
        CHECK(classify_martingale(sub, natural_filtration(sub)).kind ==
              MartingaleKind::submartingale);
        const auto super = gen_submartingale_tree(6, 0, 1.0, 0.25, 99, true);
        CHECK(classify_martingale(super, natural_filtration(super)).kind ==
              MartingaleKind::supermartingale);
    }
    SECTION("the predictable part of a submartingale is itself a submartingale") {
        const auto sub = gen_submartingale_tree(6, 0, 1.0, 0.25, 7);
        const auto filt = natural_filtration(sub);
        const auto decomp = doob_decompose(sub, filt);
        const auto cls = classify_martingale(decomp.predictable_part, filt);
        CHECK((cls.kind == MartingaleKind::martingale ||
               cls.kind == MartingaleKind::submartingale));
        CHECK(cls.max_sub_violation <= 1e-12);
    }
    SECTION("zero-error almost-supermartingale degenerates to a supermartingale") {
        const auto fixture = gen_almost_supermartingale(6, std::vector<double>(6, 0.0), 0.5);
        const auto cls =
            classify_martingale(fixture.process, natural_filtration(fixture.process));
        CHECK(cls.max_super_violation <= 1e-9);  // qualifies as a supermartingale
    }
}

TEST_CASE("Doob decomposition") {
    SECTION("martingale input has vanishing predictable part") {
        const auto walk = gen_random_walk(6);
        const auto decomp = doob_decompose(walk, natural_filtration(walk));
        for (std::size_t atom = 0; atom < walk.atoms(); ++atom)
            for (double v : decomp.predictable_part.paths[atom])
                CHECK(std::abs(v) <= 1e-12);
    }
    SECTION("deterministic increasing path is all drift") {
        const auto stairs = gen_specker_monotone({0.0, 0.5, 1.0, 1.5});
        const auto decomp = doob_decompose(stairs, natural_filtration(stairs));
        for (Index n = 0; n < 4; ++n) {
            CHECK(decomp.martingale_part.value(0, n) == 0.0);
            CHECK(decomp.predictable_part.value(0, n) == stairs.value(0, n));
        }
    }
    SECTION("reconstruction and monotone drift on random submartingale trees") {
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
            const auto sub = gen_submartingale_tree(8, 0, 0.5, 0.125, seed);
            const auto filt = natural_filtration(sub);
            const auto decomp = doob_decompose(sub, filt);
            CHECK(classify_martingale(decomp.martingale_part, filt).kind ==
                  MartingaleKind::martingale);
            for (std::size_t atom = 0; atom < sub.atoms(); ++atom) {
                double prev = 0.0;
                for (Index n = 0; n < sub.stored_length(); ++n) {
                    const double m = decomp.martingale_part.value(atom, n);
                    const double a = decomp.predictable_part.value(atom, n);
                    CHECK(std::abs(m + a - sub.value(atom, n)) <= 1e-12);
                    CHECK(a >= prev - 1e-12);
                    prev = a;
                }
                CHECK(decomp.predictable_part.value(atom, 0) == 0.0);
            }
        }
    }
}

TEST_CASE("oscillation events") {
    const auto vanish = gen_vanishing_indicator(12);
    SECTION("empty when the window is a single index") {
        const auto e = event_oscillation(vanish, 3, 3, 0.5);
        CHECK(probability(vanish.space, e) == 0.0);
    }
    SECTION("window [2n; 2n+1] has probability 1/(2(n+1))") {
        for (Index n = 0; 2 * n + 1 < 12; ++n) {
            const auto e = event_oscillation(vanish, 2 * n, 2 * n + 1, 0.5);
            CHECK(probability(vanish.space, e) ==
                  Catch::Approx(1.0 / (2.0 * (static_cast<double>(n) + 1.0))).margin(1e-12));
        }
    }
    SECTION("constant processes never oscillate") {
        AtomicProcess constant(AtomicSpace::uniform(3),
                               std::vector<std::vector<double>>(3, std::vector<double>(8, 2.0)));
        for (Index a = 0; a < 8; ++a)
            for (Index b = a; b < 8; ++b)
                CHECK(probability(constant.space, event_oscillation(constant, a, b, 0.1)) ==
                      0.0);
    }
}

TEST_CASE("quantifier exchange on monotone event chains") {
    // decreasing chains: P(intersection) = min P(phi_n); increasing chains:
    // P(union) = max P(phi_n). Exact at any finite horizon.
    SplitMix64 rng(43);
    const AtomicSpace space = AtomicSpace::uniform(16);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Event> chain;
        Event cur(16, true);
        for (int step = 0; step < 6; ++step) {
            if (rng.coin() && chain.size() > 0) cur[rng.below(16)] = false;
            chain.push_back(cur);
        }
        // decreasing by construction
        Event intersection(16, true);
        double min_p = 1.0;
        for (const auto& e : chain) {
            for (std::size_t i = 0; i < 16; ++i)
                intersection[i] = intersection[i] && e[i];
            min_p = std::min(min_p, probability(space, e));
        }
        CHECK(probability(space, intersection) == Catch::Approx(min_p).margin(1e-15));

        // reverse it for the increasing case
        Event uni(16, false);
        double max_p = 0.0;
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
            for (std::size_t i = 0; i < 16; ++i) uni[i] = uni[i] || (*it)[i];
            max_p = std::max(max_p, probability(space, *it));
        }
        CHECK(probability(space, uni) == Catch::Approx(max_p).margin(1e-15));
    }
}

TEST_CASE("Markov tightness bound holds exactly") {
    for (std::uint64_t seed : {1ULL, 9ULL}) {
        const auto sub = gen_submartingale_tree(8, 0, 0.5, 0.25, seed);
        const double M = sup_expectation_abs(sub) + 1e-9;
        for (double lambda : {0.1, 0.25, 0.5}) {
            const double threshold = M / lambda;
            for (Index n = 0; n < sub.stored_length(); ++n) {
                StableSum tail;
                for (std::size_t atom = 0; atom < sub.atoms(); ++atom)
                    if (std::abs(sub.value(atom, n)) >= threshold)
                        tail.add(sub.space.weights[atom]);
                CHECK(tail.value() < lambda);
            }
        }
    }
}

TEST_CASE("Doob maximal inequality on nonnegative submartingale trees") {
    const auto sub = gen_random_walk(10, 0, 0.25, 0.0, true);  // |walk|
    const double M = sup_expectation_abs(sub) + 1e-9;
    for (double level : {0.5, 1.0, 1.5, 2.0}) {
        StableSum mass;
        for (std::size_t atom = 0; atom < sub.atoms(); ++atom) {
            double mx = 0.0;
            for (double v : sub.paths[atom]) mx = std::max(mx, v);
            if (mx >= level) mass.add(sub.space.weights[atom]);
        }
        CHECK(mass.value() <= M / level + 1e-12);
    }
}

TEST_CASE("Doob upcrossing inequality on exact trees") {
    SplitMix64 rng(47);
    for (std::uint64_t seed : {1ULL, 2ULL}) {
        const auto sub = gen_submartingale_tree(10, 0, 0.25, 0.125, seed);
        const Index last = sub.stored_length() - 1;
        for (int trial = 0; trial < 25; ++trial) {
            const double lo = -1.0 + 0.125 * static_cast<double>(rng.below(16));
            const double hi = lo + 0.125 * (1.0 + static_cast<double>(rng.below(8)));
            const Interval iv(lo, hi);
            StableSum up, bound;
            for (std::size_t atom = 0; atom < sub.atoms(); ++atom) {
                const double w = sub.space.weights[atom];
                up.add(w * static_cast<double>(count_upcrossings(sub.stored_path(atom), iv)));
                bound.add(w * std::max(0.0, sub.value(atom, last) - iv.lo));
            }
            CHECK(up.value() <= bound.value() / iv.width() + 1e-12);
        }
    }
}

TEST_CASE("natural filtrations are refining and adapted") {
    const auto sub = gen_submartingale_tree(7, 0, 1.0, 0.5, 3);
    const auto filt = natural_filtration(sub);
    CHECK_NOTHROW(filt.validate(sub.atoms()));
    CHECK(is_adapted(sub, filt));
    CHECK(filt.length() == sub.stored_length());
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "metastable/errors.hpp"
#include "metastable/prob_space.hpp"
#include "metastable/rng.hpp"

// Generators for the named example processes and for standard martingale test
// fixtures, all realized as exact AtomicProcess values (or seeded samplers).
// The continuum examples live on [0,1] with Borel measure; up to any finite
// horizon they are step functions in omega, so atomizing on their constancy
// cells reproduces every probability and expectation exactly. Boundary points
// shared by two closed indicator cells carry measure zero and are assigned by
// cell midpoint.

namespace metastable {

namespace detail {

// Cells of [0,1] cut at the given breakpoints; returns (weights, midpoints).
inline std::pair<std::vector<double>, std::vector<double>> cells_from_breakpoints(
    std::set<double> points) {
    points.insert(0.0);
    points.insert(1.0);
    std::vector<double> cuts(points.begin(), points.end());
    if (cuts.front() < 0.0 || cuts.back() > 1.0)
        throw DomainError("breakpoints must lie in [0,1]");
    std::vector<double> weights;
    std::vector<double> mids;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double w = cuts[i + 1] - cuts[i];
        if (w <= 0.0) continue;  // zero-width slivers contribute nothing
        weights.push_back(w);
        mids.push_back(0.5 * (cuts[i] + cuts[i + 1]));
    }
    return {std::move(weights), std::move(mids)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// continuum examples
// ---------------------------------------------------------------------------

// The tight-but-unbounded staircase of indicators: X_0 = 1, then level l
// consists of l variables l * I_[i/l, (i+1)/l]. E(X_n) = 1 for every n while
// sup_n X_n exceeds every level that fits below the horizon almost surely.
inline AtomicProcess gen_tightness_example(Index horizon) {
    if (horizon < 1) throw DomainError("horizon must be >= 1");
    // level l occupies time indices [l(l-1)/2, l(l+1)/2)
    std::vector<std::pair<std::int64_t, std::int64_t>> slot;  // time -> (level, i)
    for (std::int64_t level = 1; static_cast<Index>(slot.size()) < horizon; ++level)
        for (std::int64_t i = 0; i < level && static_cast<Index>(slot.size()) < horizon; ++i)
            slot.emplace_back(level, i);
    const std::int64_t max_level = slot.back().first;

    std::set<double> cuts;
    for (std::int64_t level = 1; level <= max_level; ++level)
        for (std::int64_t i = 0; i <= level; ++i)
            cuts.insert(static_cast<double>(i) / static_cast<double>(level));
    auto [weights, mids] = detail::cells_from_breakpoints(std::move(cuts));

    std::vector<std::vector<double>> paths(weights.size(),
                                           std::vector<double>(horizon, 0.0));
    for (Index t = 0; t < horizon; ++t) {
        const auto [level, i] = slot[static_cast<std::size_t>(t)];
        const double lo = static_cast<double>(i) / static_cast<double>(level);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(level);
        for (std::size_t cell = 0; cell < mids.size(); ++cell)
            if (mids[cell] > lo && mids[cell] < hi)
                paths[cell][t] = static_cast<double>(level);
    }
    return AtomicProcess(AtomicSpace(std::move(weights)), std::move(paths));
}

// Vanishing indicators: X_{2n} = 0, X_{2n+1} = I_{(1/(2(n+1)), 1/(n+1))}.
// Almost surely convergent to 0 with infinite expected fluctuations, yet the
// learnable uniform rate 2/lambda holds.
inline AtomicProcess gen_vanishing_indicator(Index horizon) {
    if (horizon < 1) throw DomainError("horizon must be >= 1");
    std::set<double> cuts;
    for (Index t = 1; t < horizon; t += 2) {
        const double n = static_cast<double>((t - 1) / 2);
        cuts.insert(1.0 / (2.0 * (n + 1.0)));
        cuts.insert(1.0 / (n + 1.0));
    }
    auto [weights, mids] = detail::cells_from_breakpoints(std::move(cuts));
    std::vector<std::vector<double>> paths(weights.size(),
                                           std::vector<double>(horizon, 0.0));
    for (Index t = 1; t < horizon; t += 2) {
        const double n = static_cast<double>((t - 1) / 2);
        const double lo = 1.0 / (2.0 * (n + 1.0));
        const double hi = 1.0 / (n + 1.0);
        for (std::size_t cell = 0; cell < mids.size(); ++cell)
            if (mids[cell] > lo && mids[cell] < hi) paths[cell][t] = 1.0;
    }
    return AtomicProcess(AtomicSpace(std::move(weights)), std::move(paths));
}

// The adversarial staircase witnessing the 1/(lambda*eps) lower bound at
// lambda = 1/N, eps = 1/M: N uniform atoms, atom k runs the deterministic
// staircase delayed by k steps. For every j <= MN-1 exactly one atom jumps by
// 1/M between j and j+1.
inline AtomicProcess gen_staircase_adversarial(std::int64_t M, std::int64_t N,
                                               Index horizon = 0) {
    if (M < 1 || N < 1) throw DomainError("staircase requires M, N >= 1");
    const Index mn = static_cast<Index>(M) * static_cast<Index>(N);
    if (horizon == 0) horizon = mn + 2;
    auto stair = [&](Index j) -> double {
        if (j == 0) return 0.0;
        if (j > mn) return 1.0;
        const Index i = (j + static_cast<Index>(N) - 1) / static_cast<Index>(N);
        return static_cast<double>(i) / static_cast<double>(M);
    };
    std::vector<std::vector<double>> paths;
    paths.reserve(static_cast<std::size_t>(N));
    for (std::int64_t k = 0; k < N; ++k) {
        std::vector<double> path(horizon, 0.0);
        for (Index t = static_cast<Index>(k); t < horizon; ++t)
            path[t] = stair(t - static_cast<Index>(k));
        paths.push_back(std::move(path));
    }
    return AtomicProcess(AtomicSpace::uniform(static_cast<std::size_t>(N)),
                         std::move(paths));
}

// Slow fluctuations from bounded crossings: X_n = n * I_[0, a_n) for a given
// nonincreasing sequence a_n in [0,1]. Crossings of any interval stay <= 2 per
// path while P(Fluc_1 >= N) = a_N decays arbitrarily slowly.
inline AtomicProcess gen_slow_fluc(std::vector<double> a_seq, Index horizon) {
    if (horizon < 1) throw DomainError("horizon must be >= 1");
    if (a_seq.empty()) throw DomainError("a_seq must be nonempty");
    for (std::size_t i = 0; i < a_seq.size(); ++i) {
        if (!(a_seq[i] >= 0.0 && a_seq[i] <= 1.0))
            throw DomainError("a_seq values must lie in [0,1]");
        if (i > 0 && a_seq[i] > a_seq[i - 1])
            throw DomainError("a_seq must be nonincreasing");
    }
    while (static_cast<Index>(a_seq.size()) < horizon) a_seq.push_back(a_seq.back());

    std::set<double> cuts(a_seq.begin(), a_seq.end());
    auto [weights, mids] = detail::cells_from_breakpoints(std::move(cuts));
    std::vector<std::vector<double>> paths(weights.size(),
                                           std::vector<double>(horizon, 0.0));
    for (Index t = 0; t < horizon; ++t)
        for (std::size_t cell = 0; cell < mids.size(); ++cell)
            if (mids[cell] < a_seq[static_cast<std::size_t>(t)])
                paths[cell][t] = static_cast<double>(t);
    return AtomicProcess(AtomicSpace(std::move(weights)), std::move(paths));
}

// ---------------------------------------------------------------------------
// martingale fixtures (exact binary trees)
// ---------------------------------------------------------------------------

// The full +-step/-step binary tree of the given depth: 2^depth uniform atoms,
// paths of stored length depth+1, optionally padded (constant) to a longer
// logical horizon. Atom id bit t decides step t+1.
inline AtomicProcess gen_random_walk(std::int64_t depth, Index horizon = 0,
                                     double step = 1.0, double start = 0.0,
                                     bool absolute_value = false) {
    if (depth < 0 || depth > 24) throw DomainError("walk depth must lie in [0, 24]");
    if (!std::isfinite(step) || !(step > 0.0)) throw DomainError("step must be positive");
    const std::size_t atoms = static_cast<std::size_t>(1) << depth;
    const Index stored = static_cast<Index>(depth) + 1;
    if (horizon == 0) horizon = stored;
    if (horizon < stored) throw DomainError("horizon must cover the tree depth");
    std::vector<std::vector<double>> paths(atoms);
    for (std::size_t atom = 0; atom < atoms; ++atom) {
        std::vector<double> path(static_cast<std::size_t>(stored));
        double x = start;
        path[0] = absolute_value ? std::abs(x) : x;
        for (std::int64_t t = 0; t < depth; ++t) {
            x += ((atom >> t) & 1U) ? step : -step;
            path[static_cast<std::size_t>(t) + 1] = absolute_value ? std::abs(x) : x;
        }
        paths[atom] = std::move(path);
    }
    return AtomicProcess(AtomicSpace::uniform(atoms), std::move(paths), horizon);
}

// Random walk plus a predictable per-node drift: the drift added between t and
// t+1 is a deterministic (seeded) function of the path prefix, so it is
// F_t-measurable. Nonnegative drift makes a submartingale; negated, a
// supermartingale.
inline AtomicProcess gen_submartingale_tree(std::int64_t depth, Index horizon = 0,
                                            double step = 1.0, double drift_max = 0.25,
                                            std::uint64_t seed = 1,
                                            bool supermartingale = false,
                                            double start = 0.0) {
    if (depth < 0 || depth > 24) throw DomainError("tree depth must lie in [0, 24]");
    if (!std::isfinite(drift_max) || drift_max < 0.0)
        throw DomainError("drift_max must be nonnegative");
    const std::size_t atoms = static_cast<std::size_t>(1) << depth;
    const Index stored = static_cast<Index>(depth) + 1;
    if (horizon == 0) horizon = stored;
    if (horizon < stored) throw DomainError("horizon must cover the tree depth");
    // node = (t, prefix bits) -> dyadic drift in [0, drift_max]
    auto drift_at = [&](std::int64_t t, std::size_t prefix) {
        const std::uint64_t h =
            derive_seed(seed, (static_cast<std::uint64_t>(t) << 32) ^ prefix);
        return drift_max * static_cast<double>(h & 1023ULL) / 1024.0;
    };
    std::vector<std::vector<double>> paths(atoms);
    for (std::size_t atom = 0; atom < atoms; ++atom) {
        std::vector<double> path(static_cast<std::size_t>(stored));
        double x = start;
        path[0] = x;
        for (std::int64_t t = 0; t < depth; ++t) {
            const std::size_t prefix = atom & ((static_cast<std::size_t>(1) << t) - 1);
            const double d = drift_at(t, prefix);
            x += (((atom >> t) & 1U) ? step : -step) + (supermartingale ? -d : d);
            path[static_cast<std::size_t>(t) + 1] = x;
        }
        paths[atom] = std::move(path);
    }
    return AtomicProcess(AtomicSpace::uniform(atoms), std::move(paths), horizon);
}

// Two-outcome multiplicative martingale tree: X_{t+1} = X_t * up or X_t * down
// with probabilities p, 1-p; requires p*up + (1-p)*down = 1. Stays positive,
// which the almost-supermartingale fixture relies on.
inline AtomicProcess gen_binary_martingale_tree(std::int64_t depth, Index horizon = 0,
                                                double up = 1.5, double down = 0.5,
                                                double p_up = 0.5, double x0 = 1.0) {
    if (depth < 0 || depth > 24) throw DomainError("tree depth must lie in [0, 24]");
    if (!(p_up > 0.0 && p_up < 1.0)) throw DomainError("p_up must lie in (0,1)");
    if (std::abs(p_up * up + (1.0 - p_up) * down - 1.0) > 1e-12)
        throw ContractError("factors must satisfy p*up + (1-p)*down = 1");
    const std::size_t atoms = static_cast<std::size_t>(1) << depth;
    const Index stored = static_cast<Index>(depth) + 1;
    if (horizon == 0) horizon = stored;
    if (horizon < stored) throw DomainError("horizon must cover the tree depth");
    std::vector<std::vector<double>> paths(atoms);
    std::vector<double> weights(atoms);
    for (std::size_t atom = 0; atom < atoms; ++atom) {
        std::vector<double> path(static_cast<std::size_t>(stored));
        double x = x0;
        double w = 1.0;
        path[0] = x;
        for (std::int64_t t = 0; t < depth; ++t) {
            const bool u = ((atom >> t) & 1U) != 0;
            x *= u ? up : down;
            w *= u ? p_up : (1.0 - p_up);
            path[static_cast<std::size_t>(t) + 1] = x;
        }
        paths[atom] = std::move(path);
        weights[atom] = w;
    }
    return AtomicProcess(AtomicSpace(std::move(weights)), std::move(paths), horizon);
}

struct AlmostSupermartingale {
    AtomicProcess process;
    std::vector<double> error_seq;  // deterministic E_n, one per step
    double K = 1.0;                 // certified K > E(X_0), K >= 1
    double a = 0.0;                 // certified error mass, sum E_n < a
};

// Positive multiplicative martingale with an additive error injected on up
// moves: X_{t+1} = X_t * U_{t+1} + E_t * B_{t+1} where (U, B) = (1.5, 1) or
// (0.5, 0) on a fair coin, so E[X_{t+1} | F_t] = X_t + E_t/2 <= X_t + E_t.
inline AlmostSupermartingale gen_almost_supermartingale(std::int64_t depth,
                                                        std::vector<double> error_seq,
                                                        double a, Index horizon = 0,
                                                        double x0 = 1.0) {
    if (depth < 0 || depth > 24) throw DomainError("tree depth must lie in [0, 24]");
    if (!(x0 >= 0.0)) throw DomainError("x0 must be nonnegative");
    while (static_cast<std::int64_t>(error_seq.size()) < depth) error_seq.push_back(0.0);
    StableSum total;
    for (double e : error_seq) {
        if (!std::isfinite(e) || e < 0.0) throw DomainError("errors must be nonnegative");
        total.add(e);
    }
    if (!(total.value() < a)) throw DomainError("error mass must satisfy sum E_n < a");

    const std::size_t atoms = static_cast<std::size_t>(1) << depth;
    const Index stored = static_cast<Index>(depth) + 1;
    if (horizon == 0) horizon = stored;
    if (horizon < stored) throw DomainError("horizon must cover the tree depth");
    std::vector<std::vector<double>> paths(atoms);
    for (std::size_t atom = 0; atom < atoms; ++atom) {
        std::vector<double> path(static_cast<std::size_t>(stored));
        double x = x0;
        path[0] = x;
        for (std::int64_t t = 0; t < depth; ++t) {
            const bool u = ((atom >> t) & 1U) != 0;
            x = x * (u ? 1.5 : 0.5) + (u ? error_seq[static_cast<std::size_t>(t)] : 0.0);
            path[static_cast<std::size_t>(t) + 1] = x;
        }
        paths[atom] = std::move(path);
    }
    AlmostSupermartingale out;
    out.process =
        AtomicProcess(AtomicSpace::uniform(atoms), std::move(paths), horizon);
    out.error_seq = std::move(error_seq);
    out.a = a;
    out.K = std::max(1.0, x0 + 0.25);
    return out;
}

// ---------------------------------------------------------------------------
// ergodic averages
// ---------------------------------------------------------------------------

struct StepFunction {
    // f is constant on [i/m, (i+1)/m) with value values[i]; m = values.size().
    std::vector<double> values;
};

// Birkhoff averages A_n f of a step function under the rotation by num/den
// (mod 1). Atoms are the cells of the common refinement of the 1/m and 1/den
// grids, which the rotation permutes, so every average is an exact finite sum.
// Path index k holds A_{k+1} f; in particular the time-0 slice is f itself.
inline AtomicProcess gen_ergodic_averages(std::int64_t num, std::int64_t den,
                                          const StepFunction& f, Index horizon) {
    if (den < 1 || num < 0 || num >= den) throw DomainError("rotation must be num/den in [0,1)");
    if (f.values.empty()) throw DomainError("step function needs at least one cell");
    if (horizon < 1) throw DomainError("horizon must be >= 1");
    for (double v : f.values)
        if (!std::isfinite(v)) throw InputError("step function values must be finite");
    const std::int64_t m = static_cast<std::int64_t>(f.values.size());
    const std::int64_t L = std::lcm(m, den);
    if (L > 100000) throw BudgetError("cell refinement too fine (> 1e5 cells)");
    if (static_cast<Index>(L) * horizon > (Index{1} << 25))
        throw BudgetError("ergodic average table would exceed the memory budget");
    const std::int64_t shift = (num * (L / den)) % L;

    std::vector<double> f_cell(static_cast<std::size_t>(L));
    for (std::int64_t j = 0; j < L; ++j)
        f_cell[static_cast<std::size_t>(j)] =
            f.values[static_cast<std::size_t>((j * m) / L)];

    std::vector<std::vector<double>> paths(static_cast<std::size_t>(L));
    for (std::int64_t c = 0; c < L; ++c) {
        std::vector<double> path(static_cast<std::size_t>(horizon));
        StableSum birkhoff;
        std::int64_t pos = c;
        for (Index k = 0; k < horizon; ++k) {
            birkhoff.add(f_cell[static_cast<std::size_t>(pos)]);
            path[static_cast<std::size_t>(k)] =
                birkhoff.value() / static_cast<double>(k + 1);
            pos += shift;
            if (pos >= L) pos -= L;
        }
        paths[static_cast<std::size_t>(c)] = std::move(path);
    }
    return AtomicProcess(AtomicSpace::uniform(static_cast<std::size_t>(L)),
                         std::move(paths));
}

// A monotone (deterministic) sequence encoded as a one-atom process; the
// classic source of uncomputable limits, and trivially both a sub- and a
// supermartingale.
inline AtomicProcess gen_specker_monotone(std::vector<double> values, Index horizon = 0) {
    if (values.empty()) throw DomainError("sequence must be nonempty");
    detail::require_finite(values);
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] < values[i - 1])
            throw DomainError("sequence must be nondecreasing");
    if (horizon == 0) horizon = static_cast<Index>(values.size());
    if (horizon < static_cast<Index>(values.size()))
        values.resize(static_cast<std::size_t>(horizon));
    std::vector<std::vector<double>> paths{std::move(values)};
    return AtomicProcess(AtomicSpace(std::vector<double>{1.0}), std::move(paths), horizon);
}

// ---------------------------------------------------------------------------
// sampled paths (Monte Carlo mode)
// ---------------------------------------------------------------------------

// Seeded +-step walk sampler: replicate i of a run is a pure function of
// (seed, i).
inline std::vector<double> sample_random_walk(Index horizon, double step, double start,
                                              std::uint64_t replicate_seed) {
    SplitMix64 rng(replicate_seed);
    std::vector<double> path(static_cast<std::size_t>(horizon));
    double x = start;
    for (Index t = 0; t < horizon; ++t) {
        if (t > 0) x += rng.coin() ? step : -step;
        path[static_cast<std::size_t>(t)] = x;
    }
    return path;
}

// ---------------------------------------------------------------------------
// spec-driven dispatch
// ---------------------------------------------------------------------------

struct ProcessSpec {
    std::string kind;
    std::map<std::string, double> params;
    std::map<std::string, std::vector<double>> vec_params;
    Index horizon = 0;
    std::optional<std::uint64_t> seed;
};

namespace detail {

struct ParamReader {
    const ProcessSpec& spec;
    std::set<std::string> used;

    double get(const std::string& name, std::optional<double> fallback = std::nullopt) {
        used.insert(name);
        auto it = spec.params.find(name);
        if (it != spec.params.end()) return it->second;
        if (fallback) return *fallback;
        throw SchemaError("process spec '" + spec.kind + "' needs param '" + name + "'");
    }

    std::vector<double> get_vec(const std::string& name) {
        used.insert(name);
        auto it = spec.vec_params.find(name);
        if (it == spec.vec_params.end())
            throw SchemaError("process spec '" + spec.kind + "' needs param '" + name + "'");
        return it->second;
    }

    void finish() const {
        for (const auto& [name, _] : spec.params)
            if (!used.count(name))
                throw SchemaError("unknown param '" + name + "' for kind '" + spec.kind + "'");
        for (const auto& [name, _] : spec.vec_params)
            if (!used.count(name))
                throw SchemaError("unknown param '" + name + "' for kind '" + spec.kind + "'");
    }
};

inline std::int64_t as_int(double v, const char* what) {
    if (!std::isfinite(v) || v != std::floor(v))
        throw SchemaError(std::string(what) + " must be an integer");
    return static_cast<std::int64_t>(v);
}

}  // namespace detail

inline AtomicProcess make_process(const ProcessSpec& spec) {
    detail::ParamReader p{spec, {}};
    AtomicProcess out;
    if (spec.kind == "tightness_ex") {
        out = gen_tightness_example(spec.horizon);
    } else if (spec.kind == "vanishing_indicator_ex") {
        out = gen_vanishing_indicator(spec.horizon);
    } else if (spec.kind == "staircase_adversarial") {
        const auto M = detail::as_int(p.get("M"), "M");
        const auto N = detail::as_int(p.get("N"), "N");
        out = gen_staircase_adversarial(M, N, spec.horizon);
    } else if (spec.kind == "slow_fluc") {
        out = gen_slow_fluc(p.get_vec("a_seq"), spec.horizon);
    } else if (spec.kind == "random_walk" || spec.kind == "binary_martingale_tree") {
        const auto depth = detail::as_int(p.get("depth"), "depth");
        if (spec.kind == "random_walk") {
            const double step = p.get("step", 1.0);
            const double start = p.get("start", 0.0);
            const bool abs_value = p.get("absolute", 0.0) != 0.0;
            out = gen_random_walk(depth, spec.horizon, step, start, abs_value);
        } else {
            out = gen_binary_martingale_tree(depth, spec.horizon, p.get("up", 1.5),
                                             p.get("down", 0.5), p.get("p_up", 0.5),
                                             p.get("x0", 1.0));
        }
    } else if (spec.kind == "submartingale_tree") {
        const auto depth = detail::as_int(p.get("depth"), "depth");
        out = gen_submartingale_tree(depth, spec.horizon, p.get("step", 1.0),
                                     p.get("drift_max", 0.25), spec.seed.value_or(1),
                                     p.get("supermartingale", 0.0) != 0.0,
                                     p.get("start", 0.0));
    } else if (spec.kind == "almost_supermartingale") {
        const auto depth = detail::as_int(p.get("depth"), "depth");
        std::vector<double> errors;
        if (spec.vec_params.count("error_seq")) {
            errors = p.get_vec("error_seq");
        } else {
            const double a = p.get("a", 0.5);
            for (std::int64_t t = 0; t < depth; ++t)
                errors.push_back(a * std::pow(2.0, -static_cast<double>(t + 2)));
        }
        out = gen_almost_supermartingale(depth, std::move(errors), p.get("a", 0.5),
                                         spec.horizon, p.get("x0", 1.0))
                  .process;
    } else if (spec.kind == "ergodic_rotation") {
        const auto num = detail::as_int(p.get("rot_num", 610.0), "rot_num");
        const auto den = detail::as_int(p.get("rot_den", 987.0), "rot_den");
        StepFunction f{p.get_vec("f_values")};
        out = gen_ergodic_averages(num, den, f, spec.horizon);
    } else if (spec.kind == "specker_monotone") {
        out = gen_specker_monotone(p.get_vec("values"), spec.horizon);
    } else {
        throw SchemaError("unknown process kind '" + spec.kind + "'");
    }
    p.finish();
    return out;
}

}  // namespace metastable

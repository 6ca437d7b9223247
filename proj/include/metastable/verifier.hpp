#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "metastable/errors.hpp"
#include "metastable/path_stats.hpp"
#include "metastable/prob_space.hpp"
#include "metastable/rate_calculus.hpp"
#include "metastable/rng.hpp"

// Exact validation of rate claims against atomic processes.
//
// Semantics at a finite horizon: a uniform learnable claim "exists n <= phi
// with P(oscillation on [a_n;b_n]) < lambda" is
//   * witnessed by a schedule once some window within range has probability
//     strictly below lambda (true for every extension of the schedule),
//   * defeated once the first floor(phi)+1 windows all carry probability
//     >= lambda (a violation that persists at every larger horizon),
//   * undecided ("exhausted") when a schedule runs out of windows with all of
//     them bad; that alone can neither confirm nor refute the claim.
// Pointwise claims work the same way on the intersection event.

namespace metastable {

enum class Verdict { validated, violated, inconclusive };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::validated: return "validated";
        case Verdict::violated: return "violated";
        default: return "inconclusive";
    }
}

// ---------------------------------------------------------------------------
// schedules as lazy window streams
// ---------------------------------------------------------------------------

// A schedule presented as a stream of windows so that procedurally defined
// batteries (consecutive windows up to a billion-index horizon) never get
// materialized. window(i) must be the i-th window of a valid interleaving, or
// nullopt once the stream ends.
struct ScheduleSource {
    std::string id;
    std::function<std::optional<std::pair<Index, Index>>(Index)> window;
    std::optional<Schedule> explicit_windows;

    static ScheduleSource from_schedule(std::string id, Schedule s) {
        auto shared = std::make_shared<Schedule>(std::move(s));
        ScheduleSource src;
        src.id = std::move(id);
        src.window = [shared](Index i) -> std::optional<std::pair<Index, Index>> {
            if (i >= shared->size()) return std::nullopt;
            return std::pair<Index, Index>{shared->a[static_cast<std::size_t>(i)],
                                           shared->b[static_cast<std::size_t>(i)]};
        };
        src.explicit_windows = *shared;
        return src;
    }

    // [i; i+1] for i = 0, 1, ... while the window fits below the horizon.
    static ScheduleSource consecutive(Index horizon) {
        ScheduleSource src;
        src.id = "consecutive";
        src.window = [horizon](Index i) -> std::optional<std::pair<Index, Index>> {
            if (i + 1 >= horizon) return std::nullopt;
            return std::pair<Index, Index>{i, i + 1};
        };
        return src;
    }

    // [0;1], [1;2], [2;4], [4;8], ...: geometrically widening lookahead.
    static ScheduleSource dyadic(Index horizon) {
        ScheduleSource src;
        src.id = "dyadic";
        src.window = [horizon](Index i) -> std::optional<std::pair<Index, Index>> {
            if (i >= 63) return std::nullopt;
            const Index a = (i == 0) ? 0 : (Index{1} << (i - 1));
            const Index b = Index{1} << i;
            if (b >= horizon) return std::nullopt;
            return std::pair<Index, Index>{a, b};
        };
        return src;
    }

    // Materialize the first `count` windows (for witness reporting).
    Schedule materialize(Index count) const {
        Schedule s;
        for (Index i = 0; i < count; ++i) {
            auto w = window(i);
            if (!w) break;
            s.a.push_back(w->first);
            s.b.push_back(w->second);
        }
        s.validate();
        return s;
    }
};

// ---------------------------------------------------------------------------
// report types
// ---------------------------------------------------------------------------

enum class OutcomeKind { good_window, defeated, exhausted, budget };

inline const char* to_string(OutcomeKind k) {
    switch (k) {
        case OutcomeKind::good_window: return "good_window";
        case OutcomeKind::defeated: return "defeated";
        case OutcomeKind::exhausted: return "exhausted";
        default: return "budget";
    }
}

struct ScheduleOutcome {
    std::string schedule_id;
    OutcomeKind kind = OutcomeKind::exhausted;
    Index window_index = 0;    // good window / last window inspected
    double probability = 0.0;  // probability at that window (or intersection mass)
    Index windows_checked = 0;
};

struct Witness {
    std::string schedule_id;
    std::optional<Schedule> schedule;  // defeating windows, when representable
    Index window_index = 0;
    double probability = 0.0;
    std::string note;
};

struct ClaimInfo {
    std::string check;      // "learnable_uniform", "modulus:tightness", ...
    std::string rate_desc;  // human-readable formula instantiation
    double lambda = 0.0;
    double epsilon = 0.0;
};

struct VerificationReport {
    ClaimInfo claim;
    Verdict verdict = Verdict::inconclusive;
    std::optional<Witness> witness;
    Index horizon = 0;
    std::string mode = "exact";
    std::uint64_t seed = 0;
    int battery_version = 0;
    std::vector<ScheduleOutcome> outcomes;
    std::uint64_t samples = 0;      // mc mode
    double confidence = 0.0;        // mc mode: two-sided coverage of the bound
    std::string diagnostic;
    double elapsed_seconds = 0.0;   // in-memory only; never serialized
};

struct CheckOptions {
    Index probe_budget_per_schedule = 5'000'000;  // window evaluations
    unsigned threads = 1;
};

// ---------------------------------------------------------------------------
// rate bound handling
// ---------------------------------------------------------------------------

// Natural numbers n satisfying "n <= phi" are 0..floor(phi).
inline Index rate_floor_index(double rate) {
    if (!std::isfinite(rate) || rate < 0.0)
        throw DomainError("rate must evaluate to a nonnegative real");
    const double f = std::floor(rate);
    return f > 9.0e15 ? static_cast<Index>(9.0e15) : static_cast<Index>(f);
}

// ---------------------------------------------------------------------------
// per-schedule engines
// ---------------------------------------------------------------------------

namespace detail {

// Checks accept the degenerate lambda = 1 (useful for lower-bound probes at
// lambda = 1/N with N = 1); the rate formulas themselves stay on (0,1).
inline void require_lambda_unit(double lambda) {
    if (!std::isfinite(lambda) || !(lambda > 0.0) || !(lambda <= 1.0))
        throw DomainError("lambda must lie in (0,1]");
}

inline void require_window(const AtomicProcess& process, Index a, Index b) {
    if (b >= process.horizon || b < a)
        throw InputError("schedule window exceeds the process horizon");
}

inline ScheduleOutcome run_uniform_schedule(const AtomicProcess& process,
                                            const ScheduleSource& src, Index bound,
                                            double lambda, double eps,
                                            Index probe_budget) {
    ScheduleOutcome out;
    out.schedule_id = src.id;
    double last_p = 0.0;
    for (Index i = 0; i <= bound; ++i) {
        auto w = src.window(i);
        if (!w) {
            out.kind = OutcomeKind::exhausted;
            out.window_index = (i == 0) ? 0 : i - 1;
            out.probability = last_p;
            out.windows_checked = i;
            return out;
        }
        require_window(process, w->first, w->second);
        if (i >= probe_budget) {
            out.kind = OutcomeKind::budget;
            out.windows_checked = i;
            return out;
        }
        const double p = window_probability(process, w->first, w->second, eps);
        if (p < lambda) {
            out.kind = OutcomeKind::good_window;
            out.window_index = i;
            out.probability = p;
            out.windows_checked = i + 1;
            return out;
        }
        last_p = p;
    }
    out.kind = OutcomeKind::defeated;
    out.window_index = bound;
    out.probability = last_p;
    out.windows_checked = bound + 1;
    return out;
}

inline ScheduleOutcome run_pointwise_schedule(const AtomicProcess& process,
                                              const ScheduleSource& src, Index bound,
                                              double lambda, double eps,
                                              Index probe_budget) {
    ScheduleOutcome out;
    out.schedule_id = src.id;
    std::vector<bool> alive(process.atoms(), true);
    double mass = 1.0;
    for (Index i = 0; i <= bound; ++i) {
        auto w = src.window(i);
        if (!w) {
            out.kind = OutcomeKind::exhausted;
            out.window_index = (i == 0) ? 0 : i - 1;
            out.probability = mass;
            out.windows_checked = i;
            return out;
        }
        require_window(process, w->first, w->second);
        if (i >= probe_budget) {
            out.kind = OutcomeKind::budget;
            out.windows_checked = i;
            return out;
        }
        StableSum remaining;
        for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
            if (!alive[atom]) continue;
            if (window_oscillates(process, atom, w->first, w->second, eps))
                remaining.add(process.space.weights[atom]);
            else
                alive[atom] = false;
        }
        mass = remaining.value();
        // the intersection event only shrinks from here on
        if (mass < lambda) {
            out.kind = OutcomeKind::good_window;
            out.window_index = i;
            out.probability = mass;
            out.windows_checked = i + 1;
            return out;
        }
    }
    out.kind = OutcomeKind::defeated;
    out.window_index = bound;
    out.probability = mass;
    out.windows_checked = bound + 1;
    return out;
}

template <typename F>
inline void run_indexed(std::size_t n, unsigned threads, F&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned workers = std::min<unsigned>(threads, static_cast<unsigned>(n));
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

inline Verdict combine_outcomes(const std::vector<ScheduleOutcome>& outcomes,
                                std::string& diagnostic) {
    bool undecided = false;
    for (const auto& o : outcomes) {
        if (o.kind == OutcomeKind::defeated) return Verdict::violated;
        if (o.kind == OutcomeKind::exhausted) {
            undecided = true;
            diagnostic = "schedule '" + o.schedule_id +
                         "' ran out of windows before deciding the claim";
        }
        if (o.kind == OutcomeKind::budget) {
            undecided = true;
            diagnostic = "probe budget exhausted on schedule '" + o.schedule_id + "'";
        }
    }
    return undecided ? Verdict::inconclusive : Verdict::validated;
}

inline std::optional<Witness> defeat_witness(const std::vector<ScheduleOutcome>& outcomes,
                                             const std::vector<ScheduleSource>& sources,
                                             Index bound) {
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i].kind != OutcomeKind::defeated) continue;
        Witness w;
        w.schedule_id = outcomes[i].schedule_id;
        w.window_index = outcomes[i].window_index;
        w.probability = outcomes[i].probability;
        const Index cap = std::min<Index>(bound + 1, 100000);
        w.schedule = sources[i].materialize(cap);
        w.note = "all windows up to the rate bound carry oscillation probability >= lambda";
        return w;
    }
    return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// learnable-rate checks
// ---------------------------------------------------------------------------

inline VerificationReport check_learnable_uniform(const AtomicProcess& process,
                                                  const RateFunction& rate,
                                                  double lambda, double eps,
                                                  const std::vector<ScheduleSource>& schedules,
                                                  CheckOptions opts = {}) {
    detail::require_lambda_unit(lambda);
    detail::require_epsilon(eps);
    const Index bound = rate_floor_index(rate(lambda, eps));
    VerificationReport report;
    report.claim = {"learnable_uniform", "", lambda, eps};
    report.horizon = process.horizon;
    report.outcomes.resize(schedules.size());
    detail::run_indexed(schedules.size(), opts.threads, [&](std::size_t i) {
        report.outcomes[i] = detail::run_uniform_schedule(
            process, schedules[i], bound, lambda, eps, opts.probe_budget_per_schedule);
    });
    report.verdict = detail::combine_outcomes(report.outcomes, report.diagnostic);
    if (report.verdict == Verdict::violated)
        report.witness = detail::defeat_witness(report.outcomes, schedules, bound);
    return report;
}

inline VerificationReport check_learnable_pointwise(const AtomicProcess& process,
                                                    const RateFunction& rate,
                                                    double lambda, double eps,
                                                    const std::vector<ScheduleSource>& schedules,
                                                    CheckOptions opts = {}) {
    detail::require_lambda_unit(lambda);
    detail::require_epsilon(eps);
    const Index bound = rate_floor_index(rate(lambda, eps));
    VerificationReport report;
    report.claim = {"learnable_pointwise", "", lambda, eps};
    report.horizon = process.horizon;
    report.outcomes.resize(schedules.size());
    detail::run_indexed(schedules.size(), opts.threads, [&](std::size_t i) {
        report.outcomes[i] = detail::run_pointwise_schedule(
            process, schedules[i], bound, lambda, eps, opts.probe_budget_per_schedule);
    });
    report.verdict = detail::combine_outcomes(report.outcomes, report.diagnostic);
    if (report.verdict == Verdict::violated)
        report.witness = detail::defeat_witness(report.outcomes, schedules, bound);
    return report;
}

// ---------------------------------------------------------------------------
// metastable checks
// ---------------------------------------------------------------------------

// Phi(lambda, eps, g): a metastable bound functional.
using MetastableBound = std::function<Index(double, double, const GFunction&)>;

struct NamedG {
    std::string id;
    GFunction g;
};

// The canonical functional induced by a learnable rate: g-iteration of the
// ceiling of the rate.
inline MetastableBound induced_metastable_bound(RateFunction rate,
                                                IterationLimits limits = {}) {
    return [rate = std::move(rate), limits](double lambda, double eps,
                                            const GFunction& g) {
        return iterate_g(g, checked_ceil_index(rate(lambda, eps), "rate"), limits);
    };
}

enum class MetastableMode { uniform, pointwise };

inline VerificationReport check_metastable(const AtomicProcess& process,
                                           const MetastableBound& Phi, double lambda,
                                           double eps, const std::vector<NamedG>& gs,
                                           MetastableMode mode, CheckOptions opts = {}) {
    detail::require_lambda_unit(lambda);
    detail::require_epsilon(eps);
    VerificationReport report;
    report.claim = {mode == MetastableMode::uniform ? "metastable_uniform"
                                                    : "metastable_pointwise",
                    "", lambda, eps};
    report.horizon = process.horizon;
    report.outcomes.resize(gs.size());
    detail::run_indexed(gs.size(), opts.threads, [&](std::size_t gi) {
        ScheduleOutcome out;
        out.schedule_id = gs[gi].id;
        const GFunction& g = gs[gi].g;
        Index bound = 0;
        try {
            bound = Phi(lambda, eps, g);
        } catch (const BudgetError&) {
            out.kind = OutcomeKind::budget;
            report.outcomes[gi] = out;
            return;
        }
        if (mode == MetastableMode::uniform) {
            double last_p = 0.0;
            for (Index n = 0; n <= bound; ++n) {
                if (n >= opts.probe_budget_per_schedule) {
                    out.kind = OutcomeKind::budget;
                    out.windows_checked = n;
                    report.outcomes[gi] = out;
                    return;
                }
                const Index b = n + g(n);
                detail::require_window(process, n, b);
                const double p = window_probability(process, n, b, eps);
                if (p < lambda) {
                    out.kind = OutcomeKind::good_window;
                    out.window_index = n;
                    out.probability = p;
                    out.windows_checked = n + 1;
                    report.outcomes[gi] = out;
                    return;
                }
                last_p = p;
            }
            out.kind = OutcomeKind::defeated;
            out.window_index = bound;
            out.probability = last_p;
            out.windows_checked = bound + 1;
        } else {
            std::vector<bool> alive(process.atoms(), true);
            double mass = 1.0;
            for (Index n = 0; n <= bound; ++n) {
                if (n >= opts.probe_budget_per_schedule) {
                    out.kind = OutcomeKind::budget;
                    out.windows_checked = n;
                    report.outcomes[gi] = out;
                    return;
                }
                const Index b = n + g(n);
                detail::require_window(process, n, b);
                StableSum remaining;
                for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
                    if (!alive[atom]) continue;
                    if (window_oscillates(process, atom, n, b, eps))
                        remaining.add(process.space.weights[atom]);
                    else
                        alive[atom] = false;
                }
                mass = remaining.value();
                if (mass < lambda) {
                    out.kind = OutcomeKind::good_window;
                    out.window_index = n;
                    out.probability = mass;
                    out.windows_checked = n + 1;
                    report.outcomes[gi] = out;
                    return;
                }
            }
            out.kind = OutcomeKind::defeated;
            out.window_index = bound;
            out.probability = mass;
            out.windows_checked = bound + 1;
        }
        report.outcomes[gi] = out;
    });
    report.verdict = detail::combine_outcomes(report.outcomes, report.diagnostic);
    if (report.verdict == Verdict::violated) {
        for (const auto& o : report.outcomes) {
            if (o.kind != OutcomeKind::defeated) continue;
            Witness w;
            w.schedule_id = o.schedule_id;
            w.window_index = o.window_index;
            w.probability = o.probability;
            w.note = "every window [n; n+g(n)] up to Phi(lambda,eps,g) oscillates with "
                     "probability >= lambda";
            report.witness = w;
            break;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// modulus checks
// ---------------------------------------------------------------------------

enum class ModulusKind { fluctuation, crossing, tightness, boundedness };

inline const char* to_string(ModulusKind k) {
    switch (k) {
        case ModulusKind::fluctuation: return "fluctuation";
        case ModulusKind::crossing: return "crossing";
        case ModulusKind::tightness: return "tightness";
        default: return "boundedness";
    }
}

struct ModulusClaim {
    ModulusKind kind = ModulusKind::tightness;
    double lambda = 0.5;
    double epsilon = 0.5;                          // fluctuation kind only
    LambdaModulus threshold;                       // tightness / boundedness
    RateFunction fluc_threshold;                   // (lambda, eps) -> count
    CrossingModulus crossing_threshold;            // (lambda, M, l) -> count
    std::vector<std::pair<double, Index>> partitions;  // crossing kind: (M, l) grid
};

inline VerificationReport check_modulus(const AtomicProcess& process,
                                        const ModulusClaim& claim) {
    VerificationReport report;
    report.claim = {std::string("modulus:") + to_string(claim.kind), "", claim.lambda,
                    claim.epsilon};
    report.horizon = process.horizon;
    const double lambda = claim.lambda;
    detail::require_lambda_unit(lambda);

    auto conclude = [&](bool ok, Witness w) {
        report.verdict = ok ? Verdict::validated : Verdict::violated;
        if (!ok) report.witness = std::move(w);
    };

    switch (claim.kind) {
        case ModulusKind::boundedness: {
            if (!claim.threshold) throw ContractError("boundedness modulus needs a threshold");
            const double m = claim.threshold(lambda);
            StableSum tail;
            for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
                double sup = 0.0;
                for (double v : process.paths[atom]) sup = std::max(sup, std::abs(v));
                if (sup >= m) tail.add(process.space.weights[atom]);
            }
            const double p = tail.value();
            conclude(p < lambda,
                     Witness{"sup_tail", std::nullopt, 0, p,
                             "P(sup |X_n| >= " + std::to_string(m) + ") >= lambda"});
            break;
        }
        case ModulusKind::tightness: {
            if (!claim.threshold) throw ContractError("tightness modulus needs a threshold");
            const double m = claim.threshold(lambda);
            for (Index n = 0; n < process.stored_length(); ++n) {
                StableSum tail;
                for (std::size_t atom = 0; atom < process.atoms(); ++atom)
                    if (std::abs(process.value(atom, n)) >= m)
                        tail.add(process.space.weights[atom]);
                const double p = tail.value();
                if (!(p < lambda)) {
                    conclude(false, Witness{"time_" + std::to_string(n), std::nullopt, n, p,
                                            "P(|X_n| >= threshold) >= lambda"});
                    return report;
                }
            }
            conclude(true, {});
            break;
        }
        case ModulusKind::fluctuation: {
            if (!claim.fluc_threshold) throw ContractError("fluctuation modulus needs a threshold");
            detail::require_epsilon(claim.epsilon);
            const double m = claim.fluc_threshold(lambda, claim.epsilon);
            StableSum tail;
            for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
                const auto count = count_fluctuations(process.stored_path(atom), claim.epsilon);
                if (static_cast<double>(count) >= m) tail.add(process.space.weights[atom]);
            }
            const double p = tail.value();
            conclude(p < lambda, Witness{"fluc_tail", std::nullopt, 0, p,
                                         "P(Fluc_eps >= threshold) >= lambda"});
            break;
        }
        case ModulusKind::crossing: {
            if (!claim.crossing_threshold)
                throw ContractError("crossing modulus needs a threshold");
            if (claim.partitions.empty())
                throw ContractError("crossing modulus needs at least one (M, l) partition");
            for (const auto& [M, l] : claim.partitions) {
                const double m = claim.crossing_threshold(lambda, M, l);
                const auto cells = make_partition(M, static_cast<std::int64_t>(l));
                StableSum tail;
                for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
                    bool hit = false;
                    for (const auto& cell : cells) {
                        if (static_cast<double>(count_crossings(process.stored_path(atom),
                                                                cell)) >= m) {
                            hit = true;
                            break;
                        }
                    }
                    if (hit) tail.add(process.space.weights[atom]);
                }
                const double p = tail.value();
                if (!(p < lambda)) {
                    conclude(false,
                             Witness{"partition_M=" + std::to_string(M) +
                                         "_l=" + std::to_string(l),
                                     std::nullopt, l, p,
                                     "P(exists cell with crossings >= threshold) >= lambda"});
                    return report;
                }
            }
            conclude(true, {});
            break;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// crossing / upcrossing inequality checks
// ---------------------------------------------------------------------------

enum class CrossingInequality { doob_up, bishop_up, ivanov_down, crossing_vs_up };

inline const char* to_string(CrossingInequality k) {
    switch (k) {
        case CrossingInequality::doob_up: return "doob_up";
        case CrossingInequality::bishop_up: return "bishop_up";
        case CrossingInequality::ivanov_down: return "ivanov_down";
        default: return "crossing_vs_up";
    }
}

// Exact expectations / tail probabilities at the horizon against the cited
// bound. doob_up: E(Up) <= E((X_last - alpha)^+)/(beta - alpha);
// bishop_up: same with f = X_0 (Birkhoff averages start at A_1 f = f);
// ivanov_down: P(Down >= k) <= (alpha/beta)^k for 0 < alpha < beta, k <= 5;
// crossing_vs_up: pathwise Cross <= 2 Up + 1.
inline VerificationReport check_crossing_inequalities(const AtomicProcess& process,
                                                      const std::vector<Interval>& intervals,
                                                      CrossingInequality kind,
                                                      Index tail_k_max = 5) {
    VerificationReport report;
    report.claim = {std::string("crossing_inequality:") + to_string(kind), "", 0.0, 0.0};
    report.horizon = process.horizon;
    report.verdict = Verdict::validated;
    const double slack = 1e-12;

    auto fail = [&](const Interval& iv, double lhs, double rhs, const std::string& note) {
        report.verdict = Verdict::violated;
        Witness w;
        w.schedule_id = "interval[" + std::to_string(iv.lo) + "," + std::to_string(iv.hi) + "]";
        w.probability = lhs;
        w.note = note + " (lhs=" + std::to_string(lhs) + ", rhs=" + std::to_string(rhs) + ")";
        report.witness = std::move(w);
    };

    for (const auto& iv : intervals) {
        if (report.verdict == Verdict::violated) break;
        switch (kind) {
            case CrossingInequality::doob_up:
            case CrossingInequality::bishop_up: {
                const Index ref_time =
                    (kind == CrossingInequality::doob_up) ? process.stored_length() - 1 : 0;
                StableSum up;
                StableSum bound;
                for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
                    const double w = process.space.weights[atom];
                    up.add(w * static_cast<double>(
                                   count_upcrossings(process.stored_path(atom), iv)));
                    bound.add(w * std::max(0.0, process.value(atom, ref_time) - iv.lo));
                }
                const double lhs = up.value();
                const double rhs = bound.value() / iv.width();
                if (lhs > rhs + slack * (1.0 + std::abs(rhs)))
                    fail(iv, lhs, rhs, "E(Up) exceeds the upcrossing bound");
                break;
            }
            case CrossingInequality::ivanov_down: {
                if (!(iv.lo > 0.0))
                    throw InputError("ivanov_down needs 0 < alpha < beta");
                for (std::size_t atom = 0; atom < process.atoms(); ++atom)
                    for (double v : process.paths[atom])
                        if (v < 0.0)
                            throw InputError("ivanov_down needs a nonnegative process");
                for (Index k = 1; k <= tail_k_max; ++k) {
                    StableSum tail;
                    for (std::size_t atom = 0; atom < process.atoms(); ++atom)
                        if (static_cast<double>(count_downcrossings(
                                process.stored_path(atom), iv)) >= static_cast<double>(k))
                            tail.add(process.space.weights[atom]);
                    const double lhs = tail.value();
                    const double rhs =
                        std::pow(iv.lo / iv.hi, static_cast<double>(k));
                    if (lhs > rhs + slack) {
                        fail(iv, lhs, rhs,
                             "P(Down >= " + std::to_string(k) + ") exceeds (alpha/beta)^k");
                        break;
                    }
                }
                break;
            }
            case CrossingInequality::crossing_vs_up: {
                for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
                    const auto cross = count_crossings(process.stored_path(atom), iv);
                    const auto ups = count_upcrossings(process.stored_path(atom), iv);
                    if (cross > 2 * ups + 1) {
                        fail(iv, static_cast<double>(cross), static_cast<double>(2 * ups + 1),
                             "Cross > 2 Up + 1 on atom " + std::to_string(atom));
                        break;
                    }
                }
                break;
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// exact tightness and L1-crossing data (finitary reformulation inputs)
// ---------------------------------------------------------------------------

// Smallest threshold value M (taken from the process's own value grid) with
// P(|X_n| >= M) < lambda for every n below the horizon.
inline double exact_tightness_value(const AtomicProcess& process, double lambda) {
    detail::require_lambda_unit(lambda);
    double best = 0.0;
    std::vector<std::pair<double, double>> tagged;  // |value|, weight
    for (Index n = 0; n < process.stored_length(); ++n) {
        tagged.clear();
        for (std::size_t atom = 0; atom < process.atoms(); ++atom)
            tagged.emplace_back(std::abs(process.value(atom, n)),
                                process.space.weights[atom]);
        std::sort(tagged.begin(), tagged.end(),
                  [](const auto& x, const auto& y) { return x.first > y.first; });
        // walk down from the top until the tail mass reaches lambda; the value
        // one step above that point is the least usable threshold at time n
        double mass = 0.0;
        double threshold = std::nextafter(tagged.front().first,
                                          std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < tagged.size();) {
            std::size_t j = i;
            double level_mass = 0.0;
            while (j < tagged.size() && tagged[j].first == tagged[i].first) {
                level_mass += tagged[j].second;
                ++j;
            }
            if (mass + level_mass >= lambda) break;  // including this level busts lambda
            mass += level_mass;
            threshold = tagged[i].first;  // tail strictly above the NEXT level is mass
            i = j;
        }
        best = std::max(best, threshold);
    }
    return best;
}

// Largest exact E[crossings] over the cells of a partition.
inline double max_cell_expected_crossings(const AtomicProcess& process,
                                          const std::vector<Interval>& cells) {
    double best = 0.0;
    for (const auto& cell : cells) {
        StableSum e;
        for (std::size_t atom = 0; atom < process.atoms(); ++atom)
            e.add(process.space.weights[atom] *
                  static_cast<double>(count_crossings(process.stored_path(atom), cell)));
        best = std::max(best, e.value());
    }
    return best;
}

// ---------------------------------------------------------------------------
// adversarial schedule search
// ---------------------------------------------------------------------------

enum class SearchStrategy { greedy, exhaustive_small, random };

struct SearchOptions {
    Index max_windows = 4096;        // schedule length cap
    Index max_window_length = 64;
    Index start_grid = 4096;         // number of candidate starts per greedy step
    std::uint32_t random_tries = 200;
    std::uint64_t seed = 1;
};

namespace detail {

// Best (max-probability) window starting at or after `from`. Candidate starts
// use a stride so huge logical horizons stay cheap; lengths are powers of two
// up to the cap. Ties break toward the earlier, shorter window.
inline std::optional<std::pair<std::pair<Index, Index>, double>> best_window_from(
    const AtomicProcess& process, Index from, double eps, const SearchOptions& opt) {
    const Index last = process.horizon - 1;
    if (from >= last) return std::nullopt;
    const Index span = last - from;
    const Index stride = std::max<Index>(1, span / opt.start_grid);
    std::pair<Index, Index> best_w{0, 0};
    double best_p = -1.0;
    for (Index a = from; a < last; a += stride) {
        for (Index len = 1; len <= opt.max_window_length; len *= 2) {
            const Index b = std::min(last, a + len);
            const double p = window_probability(process, a, b, eps);
            if (p > best_p) {
                best_p = p;
                best_w = {a, b};
            }
            if (b == last) break;
        }
    }
    return std::make_pair(best_w, best_p);
}

}  // namespace detail

// Search for a schedule defeating the given uniform rate: a schedule whose
// first floor(rate)+1 windows all carry oscillation probability >= lambda.
// Absence of a find is a legitimate outcome, not an error.
inline std::optional<Schedule> search_adversarial_schedule(const AtomicProcess& process,
                                                           const RateFunction& rate,
                                                           double lambda, double eps,
                                                           SearchStrategy strategy,
                                                           SearchOptions opt = {}) {
    detail::require_lambda_unit(lambda);
    detail::require_epsilon(eps);
    const Index bound = rate_floor_index(rate(lambda, eps));
    const Index needed = bound + 1;

    if (strategy == SearchStrategy::greedy) {
        Schedule s;
        Index from = 0;
        while (static_cast<Index>(s.size()) < std::min(needed, opt.max_windows)) {
            auto best = detail::best_window_from(process, from, eps, opt);
            if (!best || best->second < lambda) break;
            s.a.push_back(best->first.first);
            s.b.push_back(best->first.second);
            from = best->first.second;
        }
        if (static_cast<Index>(s.size()) >= needed) {
            s.validate();
            return s;
        }
        return std::nullopt;
    }

    if (strategy == SearchStrategy::random) {
        for (std::uint32_t attempt = 0; attempt < opt.random_tries; ++attempt) {
            SplitMix64 rng(derive_seed(opt.seed, attempt));
            Schedule s;
            Index cur = 0;
            bool all_bad = true;
            while (static_cast<Index>(s.size()) < needed) {
                const Index a = cur + rng.below(4);
                const Index b = a + 1 + rng.below(opt.max_window_length);
                if (b >= process.horizon) {
                    all_bad = false;
                    break;
                }
                if (window_probability(process, a, b, eps) < lambda) {
                    all_bad = false;
                    break;
                }
                s.a.push_back(a);
                s.b.push_back(b);
                cur = b;
            }
            if (all_bad && static_cast<Index>(s.size()) >= needed) {
                s.validate();
                return s;
            }
        }
        return std::nullopt;
    }

    // exhaustive_small: depth-first over all interleaved bad windows. Only
    // meant for desk-size horizons.
    if (process.horizon > 64)
        throw BudgetError("exhaustive search needs horizon <= 64");
    const Index last = process.horizon - 1;
    std::vector<std::pair<Index, Index>> stack;
    std::function<bool(Index)> dfs = [&](Index from) -> bool {
        if (static_cast<Index>(stack.size()) >= needed) return true;
        for (Index a = from; a < last; ++a) {
            for (Index b = a + 1; b <= last; ++b) {
                if (window_probability(process, a, b, eps) < lambda) continue;
                stack.emplace_back(a, b);
                if (dfs(b)) return true;
                stack.pop_back();
            }
        }
        return false;
    };
    if (dfs(0)) {
        Schedule s;
        for (auto& [a, b] : stack) {
            s.a.push_back(a);
            s.b.push_back(b);
        }
        s.validate();
        return s;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// the standard schedule battery
// ---------------------------------------------------------------------------

struct BatteryOptions {
    bool consecutive = true;
    bool dyadic = true;
    bool greedy = true;
    std::uint32_t random_count = 100;
    Index max_windows = 256;       // explicit schedules (greedy / random)
    Index max_window_length = 64;
    Index greedy_start_grid = 1024;
    std::uint64_t seed = 1;
    int version = 1;  // composition version stamped into reports
};

// Version 1 composition: consecutive [i;i+1] windows, dyadic windows, the
// greedy-adversarial prefix extended with consecutive windows, and
// `random_count` seeded random schedules (mix of tight and spread-out window
// placements).
inline std::vector<ScheduleSource> build_battery(const AtomicProcess& process,
                                                 double lambda, double eps,
                                                 const BatteryOptions& opt = {}) {
    std::vector<ScheduleSource> sources;
    const Index horizon = process.horizon;
    if (horizon < 2) throw InputError("battery needs horizon >= 2");

    if (opt.consecutive) sources.push_back(ScheduleSource::consecutive(horizon));
    if (opt.dyadic) sources.push_back(ScheduleSource::dyadic(horizon));

    if (opt.greedy) {
        SearchOptions sopt;
        sopt.max_windows = opt.max_windows;
        sopt.max_window_length = opt.max_window_length;
        sopt.start_grid = opt.greedy_start_grid;
        Schedule s;
        Index from = 0;
        while (static_cast<Index>(s.size()) < opt.max_windows) {
            auto best = detail::best_window_from(process, from, eps, sopt);
            if (!best || best->second < lambda) break;
            s.a.push_back(best->first.first);
            s.b.push_back(best->first.second);
            from = best->first.second;
        }
        // concede with consecutive windows so the schedule remains usable as a
        // witness stream past the adversarial prefix
        Index cur = s.empty() ? 0 : s.b.back();
        for (int i = 0; i < 8 && cur + 1 < horizon &&
                        static_cast<Index>(s.size()) < opt.max_windows;
             ++i) {
            s.a.push_back(cur);
            s.b.push_back(cur + 1);
            cur += 1;
        }
        if (!s.empty()) sources.push_back(ScheduleSource::from_schedule("greedy_adversarial", s));
    }

    for (std::uint32_t r = 0; r < opt.random_count; ++r) {
        SplitMix64 rng(derive_seed(opt.seed, 0xBA77E4 + r));
        const bool spread = (r % 2) == 1;
        const Index max_gap =
            spread ? std::max<Index>(4, horizon / (2 * std::max<Index>(1, opt.max_windows)))
                   : 4;
        Schedule s;
        Index cur = 0;
        while (static_cast<Index>(s.size()) < opt.max_windows) {
            const Index a = cur + rng.below(max_gap + 1);
            const Index b = a + 1 + rng.below(opt.max_window_length);
            if (b >= horizon) break;
            s.a.push_back(a);
            s.b.push_back(b);
            cur = b;
        }
        if (!s.empty())
            sources.push_back(
                ScheduleSource::from_schedule("random_" + std::to_string(r), s));
    }
    return sources;
}

// Named g functions derived from a battery via the schedule-to-function
// construction, for metastable cross-checks.
inline std::vector<NamedG> battery_g_functions(const std::vector<ScheduleSource>& sources,
                                               Index materialize_cap = 4096) {
    std::vector<NamedG> gs;
    for (const auto& src : sources) {
        Schedule s = src.explicit_windows ? *src.explicit_windows
                                          : src.materialize(materialize_cap);
        if (s.empty()) continue;
        gs.push_back(NamedG{src.id, schedule_to_g(std::move(s))});
    }
    return gs;
}

// ---------------------------------------------------------------------------
// Monte Carlo window probability (for samplers too large to atomize)
// ---------------------------------------------------------------------------

struct McEstimate {
    double estimate = 0.0;
    double half_width = 0.0;  // distribution-free two-sided 95% Hoeffding bound
    std::uint64_t samples = 0;
};

inline McEstimate mc_estimate_window_probability(
    const std::function<std::vector<double>(std::uint64_t)>& sampler, Index a, Index b,
    double eps, std::uint64_t samples, std::uint64_t seed) {
    if (samples < 100) throw DomainError("mc estimation needs samples >= 100");
    detail::require_epsilon(eps);
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < samples; ++i) {
        const auto path = sampler(derive_seed(seed, i));
        if (b >= path.size()) throw InputError("sampled path too short for window");
        if (window_oscillation(std::span<const double>(path),
                               static_cast<std::size_t>(a),
                               static_cast<std::size_t>(b)) >= eps)
            ++hits;
    }
    McEstimate out;
    out.samples = samples;
    out.estimate = static_cast<double>(hits) / static_cast<double>(samples);
    out.half_width = std::sqrt(std::log(2.0 / 0.05) / (2.0 * static_cast<double>(samples)));
    return out;
}

}  // namespace metastable

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metastable/errors.hpp"
#include "metastable/rate_calculus.hpp"

// Exact finite atomic probability spaces. Every probability and expectation is
// a finite sum, so the rate theorems the verifier checks become decidable
// statements at desk scale.

namespace metastable {

// Neumaier-compensated summation; keeps probabilities and expectations exact
// to within an ulp or two even over 10^4+ atoms.
class StableSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct AtomicSpace {
    std::vector<double> weights;

    AtomicSpace() = default;
    explicit AtomicSpace(std::vector<double> w) : weights(std::move(w)) { validate(); }

    static AtomicSpace uniform(std::size_t atoms) {
        if (atoms == 0) throw DomainError("space needs at least one atom");
        return AtomicSpace(std::vector<double>(atoms, 1.0 / static_cast<double>(atoms)));
    }

    std::size_t size() const { return weights.size(); }

    void validate() const {
        if (weights.empty()) throw DomainError("space needs at least one atom");
        StableSum total;
        for (double w : weights) {
            if (!std::isfinite(w) || !(w > 0.0))
                throw DomainError("atom weights must be positive");
            total.add(w);
        }
        if (std::abs(total.value() - 1.0) > 1e-12)
            throw DomainError("atom weights must sum to 1 within 1e-12");
    }
};

// An event is an atom subset.
using Event = std::vector<bool>;

inline Event full_event(std::size_t atoms) { return Event(atoms, true); }
inline Event empty_event(std::size_t atoms) { return Event(atoms, false); }

// A stochastic process on a finite atomic space: one path per atom, common
// logical length `horizon`. Paths may be stored shorter than the horizon, in
// which case the process is constant from its last stored value onward; the
// counters and window events all read through value(), so the extension is
// exact. This is how long-horizon fixtures (a tree that branches for a dozen
// steps and then settles) stay cheap.
struct AtomicProcess {
    AtomicSpace space;
    std::vector<std::vector<double>> paths;  // [atom][time]
    Index horizon = 0;

    AtomicProcess() = default;
    AtomicProcess(AtomicSpace s, std::vector<std::vector<double>> p)
        : space(std::move(s)), paths(std::move(p)) {
        horizon = paths.empty() ? 0 : static_cast<Index>(paths.front().size());
        validate();
    }
    AtomicProcess(AtomicSpace s, std::vector<std::vector<double>> p, Index logical_horizon)
        : space(std::move(s)), paths(std::move(p)), horizon(logical_horizon) {
        validate();
    }

    std::size_t atoms() const { return space.size(); }
    Index stored_length() const {
        return paths.empty() ? 0 : static_cast<Index>(paths.front().size());
    }

    double value(std::size_t atom, Index n) const {
        const auto& p = paths[atom];
        const std::size_t i =
            static_cast<std::size_t>(std::min<Index>(n, static_cast<Index>(p.size()) - 1));
        return p[i];
    }

    std::span<const double> stored_path(std::size_t atom) const { return paths[atom]; }

    void validate() const {
        space.validate();
        if (paths.size() != space.size())
            throw ContractError("path count must equal atom count");
        if (paths.empty() || paths.front().empty())
            throw ContractError("process needs at least one time step");
        const std::size_t len = paths.front().size();
        for (const auto& p : paths) {
            if (p.size() != len) throw ContractError("all paths must share one length");
            detail::require_finite(p);
        }
        if (horizon < static_cast<Index>(len))
            throw ContractError("horizon must cover the stored paths");
    }
};

// A refining sequence of partitions of the atoms. cells[t][atom] is the id of
// the atom's cell at time t.
struct Filtration {
    std::vector<std::vector<std::uint32_t>> cells;

    std::size_t length() const { return cells.size(); }

    void validate(std::size_t atom_count) const {
        for (const auto& part : cells)
            if (part.size() != atom_count)
                throw ContractError("partition size must equal atom count");
        // every cell at time t+1 must sit inside a single cell at time t
        for (std::size_t t = 0; t + 1 < cells.size(); ++t) {
            std::map<std::uint32_t, std::uint32_t> parent;
            for (std::size_t atom = 0; atom < atom_count; ++atom) {
                const auto fine = cells[t + 1][atom];
                const auto coarse = cells[t][atom];
                auto [it, inserted] = parent.emplace(fine, coarse);
                if (!inserted && it->second != coarse)
                    throw ContractError("filtration is not refining");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// basic measure operations
// ---------------------------------------------------------------------------

inline double probability(const AtomicSpace& space, const Event& event) {
    if (event.size() != space.size())
        throw InputError("event size does not match atom count");
    StableSum p;
    for (std::size_t i = 0; i < event.size(); ++i)
        if (event[i]) p.add(space.weights[i]);
    return p.value();
}

inline double expectation(const AtomicProcess& process, Index n) {
    if (n >= process.horizon) throw InputError("time index beyond horizon");
    StableSum e;
    for (std::size_t atom = 0; atom < process.atoms(); ++atom)
        e.add(process.space.weights[atom] * process.value(atom, n));
    return e.value();
}

inline double expectation_abs(const AtomicProcess& process, Index n) {
    if (n >= process.horizon) throw InputError("time index beyond horizon");
    StableSum e;
    for (std::size_t atom = 0; atom < process.atoms(); ++atom)
        e.add(process.space.weights[atom] * std::abs(process.value(atom, n)));
    return e.value();
}

// sup over n < horizon of E|X_n| (the stored range is enough: the extension
// repeats the last value).
inline double sup_expectation_abs(const AtomicProcess& process) {
    double best = 0.0;
    for (Index n = 0; n < process.stored_length(); ++n)
        best = std::max(best, expectation_abs(process, n));
    return best;
}

// sup over n < horizon of ||X_n||_p (p = inf gives the pathwise sup bound).
inline double sup_lp_norm(const AtomicProcess& process, double p) {
    if (std::isinf(p)) {
        double best = 0.0;
        for (std::size_t atom = 0; atom < process.atoms(); ++atom)
            for (double v : process.paths[atom]) best = std::max(best, std::abs(v));
        return best;
    }
    if (!(p >= 1.0)) throw DomainError("p must lie in [1,inf]");
    double best = 0.0;
    for (Index n = 0; n < process.stored_length(); ++n) {
        StableSum e;
        for (std::size_t atom = 0; atom < process.atoms(); ++atom)
            e.add(process.space.weights[atom] *
                  std::pow(std::abs(process.value(atom, n)), p));
        best = std::max(best, std::pow(e.value(), 1.0 / p));
    }
    return best;
}

// Per-atom expectation of an arbitrary path statistic.
template <typename F>
inline double expected_over_atoms(const AtomicProcess& process, F&& statistic) {
    StableSum e;
    for (std::size_t atom = 0; atom < process.atoms(); ++atom)
        e.add(process.space.weights[atom] * static_cast<double>(statistic(atom)));
    return e.value();
}

// ---------------------------------------------------------------------------
// filtrations and conditional expectations
// ---------------------------------------------------------------------------

// Natural filtration: atoms share a cell at time t iff their stored paths
// agree (exactly) on indices 0..t.
inline Filtration natural_filtration(const AtomicProcess& process) {
    const std::size_t atoms = process.atoms();
    const Index len = process.stored_length();
    Filtration filt;
    filt.cells.reserve(static_cast<std::size_t>(len));
    std::vector<std::uint32_t> prev(atoms, 0);
    for (Index t = 0; t < len; ++t) {
        std::map<std::pair<std::uint32_t, double>, std::uint32_t> ids;
        std::vector<std::uint32_t> cur(atoms);
        for (std::size_t atom = 0; atom < atoms; ++atom) {
            const std::pair<std::uint32_t, double> key{prev[atom],
                                                       process.value(atom, t)};
            auto [it, inserted] =
                ids.emplace(key, static_cast<std::uint32_t>(ids.size()));
            cur[atom] = it->second;
        }
        filt.cells.push_back(cur);
        prev = std::move(cur);
    }
    return filt;
}

inline bool is_adapted(const AtomicProcess& process, const Filtration& filt) {
    const std::size_t n_times =
        std::min<std::size_t>(filt.length(), static_cast<std::size_t>(process.stored_length()));
    for (std::size_t t = 0; t < n_times; ++t) {
        std::map<std::uint32_t, double> cell_value;
        for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
            const auto cell = filt.cells[t][atom];
            const double v = process.value(atom, static_cast<Index>(t));
            auto [it, inserted] = cell_value.emplace(cell, v);
            if (!inserted && it->second != v) return false;
        }
    }
    return true;
}

// E[X_n | F_m] as a per-atom vector: each atom gets the weighted mean of X_n
// over its cell in partition m.
inline std::vector<double> conditional_expectation(const AtomicProcess& process, Index n,
                                                   const Filtration& filt, Index m) {
    if (!(m <= n && n < process.horizon))
        throw InputError("conditional expectation requires m <= n < horizon");
    if (m >= filt.length()) throw InputError("filtration too short for time m");
    filt.validate(process.atoms());
    const auto& part = filt.cells[static_cast<std::size_t>(m)];
    std::map<std::uint32_t, std::pair<StableSum, StableSum>> agg;  // cell -> (w*x, w)
    for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
        auto& [wx, w] = agg[part[atom]];
        wx.add(process.space.weights[atom] * process.value(atom, n));
        w.add(process.space.weights[atom]);
    }
    std::vector<double> out(process.atoms());
    for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
        const auto& [wx, w] = agg[part[atom]];
        out[atom] = wx.value() / w.value();
    }
    return out;
}

// ---------------------------------------------------------------------------
// martingale machinery
// ---------------------------------------------------------------------------

enum class MartingaleKind { martingale, submartingale, supermartingale, none };

inline const char* to_string(MartingaleKind k) {
    switch (k) {
        case MartingaleKind::martingale: return "martingale";
        case MartingaleKind::submartingale: return "submartingale";
        case MartingaleKind::supermartingale: return "supermartingale";
        default: return "none";
    }
}

struct MartingaleClassification {
    MartingaleKind kind = MartingaleKind::none;
    // largest |E[X_{n+1}|F_n] - X_n|, and the largest one-sided violations of
    // the sub/super inequalities
    double max_equality_violation = 0.0;
    double max_sub_violation = 0.0;    // how far E[X_{n+1}|F_n] drops below X_n
    double max_super_violation = 0.0;  // how far it rises above X_n
};

inline MartingaleClassification classify_martingale(const AtomicProcess& process,
                                                    const Filtration& filt,
                                                    double tol = 1e-9) {
    const Index stored = process.stored_length();
    if (stored >= 2 && filt.length() + 1 < static_cast<std::size_t>(stored))
        throw InputError("filtration must cover horizon - 1 steps");
    filt.validate(process.atoms());
    MartingaleClassification out;
    for (Index n = 0; n + 1 < stored; ++n) {
        const auto ce = conditional_expectation(process, n + 1, filt, n);
        for (std::size_t atom = 0; atom < process.atoms(); ++atom) {
            const double d = ce[atom] - process.value(atom, n);
            out.max_equality_violation = std::max(out.max_equality_violation, std::abs(d));
            out.max_sub_violation = std::max(out.max_sub_violation, -d);
            out.max_super_violation = std::max(out.max_super_violation, d);
        }
    }
    if (out.max_equality_violation <= tol)
        out.kind = MartingaleKind::martingale;
    else if (out.max_sub_violation <= tol)
        out.kind = MartingaleKind::submartingale;
    else if (out.max_super_violation <= tol)
        out.kind = MartingaleKind::supermartingale;
    else
        out.kind = MartingaleKind::none;
    return out;
}

struct DoobDecomposition {
    AtomicProcess martingale_part;   // M_0 = X_0
    AtomicProcess predictable_part;  // A_0 = 0, A predictable, M + A = X
};

// M_n = X_0 + sum_{i<=n} (X_i - E[X_i | F_{i-1}]), A_n = X_n - M_n.
inline DoobDecomposition doob_decompose(const AtomicProcess& process,
                                        const Filtration& filt) {
    const Index stored = process.stored_length();
    const std::size_t atoms = process.atoms();
    std::vector<std::vector<double>> mart(atoms, std::vector<double>(stored));
    std::vector<std::vector<double>> pred(atoms, std::vector<double>(stored));
    for (std::size_t atom = 0; atom < atoms; ++atom) {
        mart[atom][0] = process.value(atom, 0);
        pred[atom][0] = 0.0;
    }
    for (Index n = 1; n < stored; ++n) {
        const auto ce = conditional_expectation(process, n, filt, n - 1);
        for (std::size_t atom = 0; atom < atoms; ++atom) {
            const double innovation = process.value(atom, n) - ce[atom];
            const double drift = ce[atom] - process.value(atom, n - 1);
            mart[atom][n] = mart[atom][n - 1] + innovation;
            pred[atom][n] = pred[atom][n - 1] + drift;
        }
    }
    return DoobDecomposition{
        AtomicProcess(process.space, std::move(mart), process.horizon),
        AtomicProcess(process.space, std::move(pred), process.horizon)};
}

// ---------------------------------------------------------------------------
// window events
// ---------------------------------------------------------------------------

// max - min of atom's path over the inclusive window [a;b], read through the
// constant extension.
inline double window_oscillation(const AtomicProcess& process, std::size_t atom,
                                 Index a, Index b) {
    if (b < a) return 0.0;
    const Index last = process.stored_length() - 1;
    const Index lo_i = std::min(a, last);
    const Index hi_i = std::min(b, last);
    const auto& p = process.paths[atom];
    double lo = p[static_cast<std::size_t>(lo_i)];
    double hi = lo;
    for (Index i = lo_i + 1; i <= hi_i; ++i) {
        const double x = p[static_cast<std::size_t>(i)];
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return hi - lo;
}

inline bool window_oscillates(const AtomicProcess& process, std::size_t atom, Index a,
                              Index b, double eps) {
    if (b <= a) return false;
    const Index last = process.stored_length() - 1;
    const Index lo_i = std::min(a, last);
    const Index hi_i = std::min(b, last);
    const auto& p = process.paths[atom];
    double lo = p[static_cast<std::size_t>(lo_i)];
    double hi = lo;
    for (Index i = lo_i + 1; i <= hi_i; ++i) {
        const double x = p[static_cast<std::size_t>(i)];
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        if (hi - lo >= eps) return true;
    }
    return false;
}

// The event {omega : exists i, j in [a;b] with |X_i - X_j| >= eps}.
inline Event event_oscillation(const AtomicProcess& process, Index a, Index b,
                               double eps) {
    if (!(a <= b && b < process.horizon))
        throw InputError("oscillation window must satisfy a <= b < horizon");
    detail::require_epsilon(eps);
    Event event(process.atoms(), false);
    for (std::size_t atom = 0; atom < process.atoms(); ++atom)
        event[atom] = window_oscillates(process, atom, a, b, eps);
    return event;
}

// Exact probability of the oscillation event, without materializing it.
inline double window_probability(const AtomicProcess& process, Index a, Index b,
                                 double eps) {
    if (!(a <= b && b < process.horizon))
        throw InputError("oscillation window must satisfy a <= b < horizon");
    StableSum p;
    for (std::size_t atom = 0; atom < process.atoms(); ++atom)
        if (window_oscillates(process, atom, a, b, eps))
            p.add(process.space.weights[atom]);
    return p.value();
}

}  // namespace metastable

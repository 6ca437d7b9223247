#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "metastable/errors.hpp"

// Exact counting of fluctuations, crossings, upcrossings, downcrossings and
// generic disjoint-witness statistics on finite real-valued paths.
//
// Conventions, used throughout the library:
//   * index windows [m;n] are inclusive on both ends and empty when n < m;
//   * comparisons are exact >= / <= on doubles, ties at thresholds count as
//     hits; callers wanting slack widen their epsilon themselves;
//   * an eps-fluctuation is a pair i < j with |x_i - x_j| >= eps, and a
//     counter reports the maximal number of such pairs that can be placed
//     disjointly in order: i1 < j1 <= i2 < j2 <= ... < jk < upto.
//
// Each counter below is a linear scan; the test suite pins every one of them
// against an exhaustive maximal-k search on small paths.

namespace metastable {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
        if (!std::isfinite(lo) || !std::isfinite(hi))
            throw DomainError("interval endpoints must be finite");
        if (!(lo < hi)) throw DomainError("interval requires lo < hi");
    }

    double width() const { return hi - lo; }
};

// Decision procedure A(n, m, path) over index pairs. Contract: monotone under
// window inclusion ([n';m'] inside [n;m] and A(n',m') implies A(n,m)), and
// false whenever m <= n.
using WitnessPredicate =
    std::function<bool(std::size_t, std::size_t, std::span<const double>)>;

namespace detail {

inline void require_finite(std::span<const double> path) {
    for (double v : path)
        if (!std::isfinite(v)) throw InputError("path contains a non-finite value");
}

inline void require_epsilon(double eps) {
    if (!std::isfinite(eps) || !(eps > 0.0))
        throw DomainError("epsilon must be a finite positive real");
}

inline std::size_t resolve_upto(std::span<const double> path,
                                std::optional<std::size_t> upto) {
    if (!upto) return path.size();
    if (*upto > path.size()) throw InputError("upto exceeds path length");
    return *upto;
}

}  // namespace detail

// Maximal number of disjoint eps-fluctuations in path[0..upto). A pair
// completes at the first index whose value sits >= eps away from the running
// min or max recorded since the previous pair ended; the scan then re-anchors
// there.
inline std::size_t count_fluctuations(std::span<const double> path, double eps,
                                      std::optional<std::size_t> upto = std::nullopt) {
    detail::require_epsilon(eps);
    detail::require_finite(path);
    const std::size_t n = detail::resolve_upto(path, upto);
    if (n == 0) return 0;
    std::size_t count = 0;
    double lo = path[0];
    double hi = path[0];
    for (std::size_t j = 1; j < n; ++j) {
        const double x = path[j];
        if (hi - x >= eps || x - lo >= eps) {
            ++count;
            lo = hi = x;
        } else {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    return count;
}

// Maximal number of [alpha,beta]-traversals: pairs i < j with x_i <= alpha and
// x_j >= beta or vice versa, placed disjointly in order. Three states: no side
// seen yet / last extreme at-or-below alpha / at-or-above beta; each switch of
// side after the first arrival is one crossing.
inline std::size_t count_crossings(std::span<const double> path, const Interval& iv,
                                   std::optional<std::size_t> upto = std::nullopt) {
    detail::require_finite(path);
    const std::size_t n = detail::resolve_upto(path, upto);
    enum class Side { none, low, high };
    Side side = Side::none;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = path[i];
        if (x <= iv.lo) {
            if (side == Side::high) ++count;
            side = Side::low;
        } else if (x >= iv.hi) {
            if (side == Side::low) ++count;
            side = Side::high;
        }
    }
    return count;
}

// Completed <=alpha -> >=beta transitions.
inline std::size_t count_upcrossings(std::span<const double> path, const Interval& iv,
                                     std::optional<std::size_t> upto = std::nullopt) {
    detail::require_finite(path);
    const std::size_t n = detail::resolve_upto(path, upto);
    bool armed = false;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = path[i];
        if (!armed) {
            if (x <= iv.lo) armed = true;
        } else if (x >= iv.hi) {
            ++count;
            armed = false;
        }
    }
    return count;
}

// Completed >=beta -> <=alpha transitions.
inline std::size_t count_downcrossings(std::span<const double> path, const Interval& iv,
                                       std::optional<std::size_t> upto = std::nullopt) {
    detail::require_finite(path);
    const std::size_t n = detail::resolve_upto(path, upto);
    bool armed = false;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = path[i];
        if (!armed) {
            if (x >= iv.hi) armed = true;
        } else if (x <= iv.lo) {
            ++count;
            armed = false;
        }
    }
    return count;
}

// Maximal number of disjoint witness windows a0 < b0 <= a1 < b1 <= ... < upto
// with pred(a_i, b_i). Greedy is optimal for monotone predicates: anchoring at
// the earliest available start never hurts, and taking the smallest completing
// b leaves the most room. Monotonicity is validated lazily at probed pairs.
inline std::size_t count_disjoint_witnesses(std::span<const double> path,
                                            const WitnessPredicate& pred,
                                            std::size_t upto) {
    detail::require_finite(path);
    if (upto > path.size()) throw InputError("upto exceeds path length");
    std::size_t count = 0;
    std::size_t a = 0;
    while (a < upto) {
        if (pred(a, a, path))
            throw ContractError("witness predicate must be false on empty windows");
        std::size_t hit = upto;
        for (std::size_t b = a + 1; b < upto; ++b) {
            if (pred(a, b, path)) {
                hit = b;
                break;
            }
        }
        if (hit == upto) break;
        ++count;
        a = hit;
    }
    return count;
}

// The witness predicate that specializes the disjoint-witness count back to
// eps-fluctuations: A(n, m) = "some i, j in [n;m] differ by >= eps".
inline WitnessPredicate oscillation_witness(double eps) {
    detail::require_epsilon(eps);
    return [eps](std::size_t n, std::size_t m, std::span<const double> path) {
        if (m <= n) return false;
        double lo = path[n];
        double hi = path[n];
        for (std::size_t i = n + 1; i <= m; ++i) {
            lo = std::min(lo, path[i]);
            hi = std::max(hi, path[i]);
            if (hi - lo >= eps) return true;
        }
        return false;
    };
}

// Partition of [-M, M] into l equally sized closed subintervals.
inline std::vector<Interval> make_partition(double M, std::int64_t l) {
    if (!std::isfinite(M) || !(M > 0.0)) throw DomainError("partition requires M > 0");
    if (l < 1) throw DomainError("partition requires l >= 1");
    std::vector<Interval> cells;
    cells.reserve(static_cast<std::size_t>(l));
    for (std::int64_t i = 0; i < l; ++i) {
        const double lo = -M + (2.0 * M * static_cast<double>(i)) / static_cast<double>(l);
        const double hi = -M + (2.0 * M * static_cast<double>(i + 1)) / static_cast<double>(l);
        cells.emplace_back(lo, hi);
    }
    return cells;
}

// max - min of path over the inclusive window [a;b].
inline double window_oscillation(std::span<const double> path, std::size_t a, std::size_t b) {
    if (b >= path.size()) throw InputError("window end exceeds path length");
    if (b < a) return 0.0;
    double lo = path[a];
    double hi = path[a];
    for (std::size_t i = a + 1; i <= b; ++i) {
        lo = std::min(lo, path[i]);
        hi = std::max(hi, path[i]);
    }
    return hi - lo;
}

// Least n <= bound such that all values in [n; n+g(n)] stay within eps of each
// other, or nullopt. Windows must lie entirely inside the path.
inline std::optional<std::size_t> find_stability_window(
    std::span<const double> path, double eps,
    const std::function<std::size_t(std::size_t)>& g, std::size_t bound) {
    detail::require_epsilon(eps);
    detail::require_finite(path);
    for (std::size_t n = 0; n <= bound; ++n) {
        const std::size_t len = g(n);
        if (n > path.size() || len >= path.size() - n)
            throw InputError("path too short to evaluate stability window");
        if (window_oscillation(path, n, n + len) < eps) return n;
    }
    return std::nullopt;
}

}  // namespace metastable

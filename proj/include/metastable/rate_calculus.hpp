#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "metastable/errors.hpp"
#include "metastable/path_stats.hpp"

// Rate and modulus arithmetic: every explicit convergence-rate formula the
// library certifies lives here as a total function, together with the
// combinators that build compound rates (partition maxima, g-iteration,
// schedule-to-function conversion, rate summation, numeric inversion).
//
// Rates are returned as reals; callers take ceilings when an index is needed.
// Index arithmetic is checked and capped: iterating n -> n + g(n) aborts with
// a BudgetError once the index passes a configurable cap instead of running
// away.

namespace metastable {

using Index = std::uint64_t;

// g: N -> N, presented as a closure. Iteration always goes through
// g_tilde(n) = n + g(n).
using GFunction = std::function<Index(Index)>;

struct IterationLimits {
    Index max_index = 1'000'000'000ULL;  // total index budget for g-iteration
};

// g_tilde^(k)(0). A fixed point (g(n) == 0) short-circuits the remaining
// iterations since the orbit can never move again.
inline Index iterate_g(const GFunction& g, Index k, IterationLimits limits = {}) {
    Index n = 0;
    for (Index i = 0; i < k; ++i) {
        const Index step = g(n);
        if (step == 0) break;
        if (step > std::numeric_limits<Index>::max() - n)
            throw OverflowError("index overflow while iterating g");
        n += step;
        if (n > limits.max_index)
            throw BudgetError("index budget exceeded while iterating g");
    }
    return n;
}

inline Index checked_ceil_index(double x, const char* what) {
    if (!std::isfinite(x) || x < 0.0) throw DomainError(std::string("bad count for ") + what);
    const double c = std::ceil(x);
    if (c > 9.0e15) throw OverflowError(std::string("count too large for ") + what);
    return static_cast<Index>(c);
}

// Local-stability bound for monotone sequences in [-K, K]:
// N = g_tilde^(ceil(2K/eps))(0).
inline Index monotone_metastable_bound(double K, double eps, const GFunction& g,
                                       IterationLimits limits = {}) {
    if (!(K > 0.0) || !std::isfinite(K)) throw DomainError("K must be positive");
    detail::require_epsilon(eps);
    return iterate_g(g, checked_ceil_index(2.0 * K / eps, "2K/eps"), limits);
}

// A finite strictly interleaved index sequence a0 < b0 <= a1 < b1 <= ...;
// the universal quantifier of learnable rates.
struct Schedule {
    std::vector<Index> a;
    std::vector<Index> b;

    Schedule() = default;
    Schedule(std::vector<Index> a_, std::vector<Index> b_)
        : a(std::move(a_)), b(std::move(b_)) {
        validate();
    }

    std::size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }

    void validate() const {
        if (a.size() != b.size()) throw ContractError("schedule a/b lengths differ");
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!(a[i] < b[i])) throw ContractError("schedule requires a_i < b_i");
            if (i + 1 < a.size() && !(b[i] <= a[i + 1]))
                throw ContractError("schedule requires b_i <= a_{i+1}");
        }
    }
};

// g(n) := b_{k(n)} - n for k(n) = min{ i | n <= a_i }, and g(n) := 0 beyond
// the last window. Guarantees g_tilde^(i)(0) = b_{i-1} for i in range and
// [a_m; b_m] inside [n; n+g(n)] for the least m with n <= a_m.
inline GFunction schedule_to_g(Schedule schedule) {
    schedule.validate();
    auto shared = std::make_shared<Schedule>(std::move(schedule));
    return [shared](Index n) -> Index {
        const auto& s = *shared;
        auto it = std::lower_bound(s.a.begin(), s.a.end(), n);
        if (it == s.a.end()) return 0;
        return s.b[static_cast<std::size_t>(it - s.a.begin())] - n;
    };
}

// ---------------------------------------------------------------------------
// modulus / rate function shapes
// ---------------------------------------------------------------------------

// psi(M, l): bound on E[crossings] valid on every cell of the partition of
// [-M, M] into l pieces.
using L1CrossingModulus = std::function<double(double M, Index l)>;
// phi(lambda, M, l): modulus of finite crossings.
using CrossingModulus = std::function<double(double lambda, double M, Index l)>;
// lambda -> real (tightness / uniform-boundedness moduli and friends).
using LambdaModulus = std::function<double(double lambda)>;
// (lambda, eps) -> real.
using RateFunction = std::function<double(double lambda, double eps)>;

namespace detail {

inline void require_unit_open(double x, const char* name) {
    if (!std::isfinite(x) || !(x > 0.0) || !(x < 1.0))
        throw DomainError(std::string(name) + " must lie in (0,1)");
}

inline void require_moment_bound(double K) {
    if (!std::isfinite(K) || !(K >= 1.0)) throw DomainError("K must satisfy K >= 1");
}

inline void require_positive(double x, const char* name) {
    if (!std::isfinite(x) || !(x > 0.0))
        throw DomainError(std::string(name) + " must be positive");
}

// 1 for p = infinity, base^(1/p) otherwise.
inline double moment_factor(double base, double p) {
    if (std::isinf(p)) return 1.0;
    if (!(p >= 1.0)) throw DomainError("moment order p must satisfy p >= 1");
    return std::pow(base, 1.0 / p);
}

}  // namespace detail

// Parameter bundle shared by the theorem rates.
struct RateParams {
    double lambda = 0.5;  // failure probability, in (0,1)
    double epsilon = 0.5; // oscillation threshold, in (0,1)
    double K = 1.0;       // moment bound, >= 1
    double p = std::numeric_limits<double>::infinity();  // moment order in [1,inf]
    double M = 1.0;       // uniform bound, > 0
    double a_err = 0.0;   // error mass of almost-supermartingales, >= 0

    void validate() const {
        detail::require_unit_open(lambda, "lambda");
        detail::require_unit_open(epsilon, "epsilon");
        detail::require_moment_bound(K);
        if (!std::isinf(p) && !(p >= 1.0)) throw DomainError("p must lie in [1,inf]");
        detail::require_positive(M, "M");
        if (!std::isfinite(a_err) || a_err < 0.0)
            throw DomainError("a_err must be nonnegative");
    }
};

// The constants the theorem rates are quoted with. Overridable so the
// verifier can probe how much slack they carry.
struct RateConstants {
    double monotone_c = 22.0;                       // almost-sure monotone rate
    double submartingale_c = 220.0;                 // positive submartingale rate
    double doob_c = 2048.0 * 9.0 * 220.0;           // general sub/supermartingale rate
    double downcrossing_c = 2.0 * 11.0 * 19.0;      // downcrossing-variant constant
};

inline constexpr double kDoobConstant = 2048.0 * 9.0 * 220.0;  // 4,055,040

// ---------------------------------------------------------------------------
// deterministic conversions
// ---------------------------------------------------------------------------

// Fluctuation bound from a per-cell crossing bound on a path inside [-M, M]:
// phi(eps) = l * psi(M, l) with l = ceil(4M/eps).
inline double crossings_to_fluctuations(const L1CrossingModulus& psi, double M,
                                        double eps) {
    detail::require_positive(M, "M");
    detail::require_epsilon(eps);
    const Index l = checked_ceil_index(4.0 * M / eps, "4M/eps");
    return static_cast<double>(l) * psi(M, l);
}

// ---------------------------------------------------------------------------
// stochastic moduli combinators
// ---------------------------------------------------------------------------

// Modulus of finite fluctuations from a modulus of finite crossings phi and a
// modulus of uniform boundedness f:
//   psi(lambda, eps) = l * phi(lambda/2, M, l),  M = f(lambda/2), l = ceil(4M/eps).
inline double stochastic_fluc_modulus(const CrossingModulus& phi_cross,
                                      const LambdaModulus& f_bound, double lambda,
                                      double eps) {
    detail::require_unit_open(lambda, "lambda");
    detail::require_epsilon(eps);
    const double M = f_bound(lambda / 2.0);
    detail::require_positive(M, "f(lambda/2)");
    const Index l = checked_ceil_index(4.0 * M / eps, "4M/eps");
    return static_cast<double>(l) * phi_cross(lambda / 2.0, M, l);
}

// Union-bound combination of per-interval crossing moduli into a modulus of
// finite crossings: max over the cells of P(M,l) of phi_cell(lambda/l).
inline double combine_crossing_moduli(
    const std::function<double(const Interval&, double)>& per_interval, double lambda,
    double M, Index l) {
    detail::require_unit_open(lambda, "lambda");
    detail::require_positive(M, "M");
    if (l < 1) throw DomainError("l must be >= 1");
    const auto cells = make_partition(M, static_cast<std::int64_t>(l));
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& cell : cells)
        best = std::max(best, per_interval(cell, lambda / static_cast<double>(l)));
    return best;
}

// Window-probability mass bound omega_M(eps) = (p+2) * psi(M(1+2/p), p+2) for
// p = ceil(8M/eps): the total probability, over any interleaved window
// sequence, of "oscillation >= eps while |X_a| <= M".
inline double omega_M(const L1CrossingModulus& psi, double M, double eps) {
    detail::require_positive(M, "M");
    detail::require_epsilon(eps);
    const Index p = checked_ceil_index(8.0 * M / eps, "8M/eps");
    const double widened = M * (1.0 + 2.0 / static_cast<double>(p));
    return static_cast<double>(p + 2) * psi(widened, p + 2);
}

// Learnable rate of uniform convergence from an L1-crossing modulus psi and a
// tightness modulus h: phi(lambda, eps) = 2 * omega_{h(lambda/2)}(eps) / lambda.
inline double uniform_rate_from_crossings(const L1CrossingModulus& psi,
                                          const LambdaModulus& h, double lambda,
                                          double eps) {
    detail::require_unit_open(lambda, "lambda");
    detail::require_epsilon(eps);
    const double M = h(lambda / 2.0);
    detail::require_positive(M, "h(lambda/2)");
    return 2.0 * omega_M(psi, M, eps) / lambda;
}

// ---------------------------------------------------------------------------
// theorem rates
// ---------------------------------------------------------------------------

// Almost-surely monotone process with tightness modulus h:
// phi(lambda, eps) = (c / (lambda * eps)) * h(lambda/2), c <= 22.
inline double monotone_uniform_rate(const LambdaModulus& h, double lambda, double eps,
                                    const RateConstants& c = {}) {
    detail::require_unit_open(lambda, "lambda");
    detail::require_unit_open(eps, "epsilon");
    const double hv = h(lambda / 2.0);
    if (!(hv >= 1.0)) throw DomainError("tightness modulus must return values >= 1");
    return c.monotone_c / (lambda * eps) * hv;
}

// Bounded special case: sup ||X_n||_inf < K gives phi = cK / (lambda * eps).
inline double monotone_uniform_rate_bounded(double K, double lambda, double eps,
                                            const RateConstants& c = {}) {
    detail::require_moment_bound(K);
    detail::require_unit_open(lambda, "lambda");
    detail::require_unit_open(eps, "epsilon");
    return c.monotone_c * K / (lambda * eps);
}

// Nonnegative submartingale with sup ||X_n||_p < K:
// phi_p(lambda, eps) = (c K^2 / (lambda eps^2)) * (2/lambda)^(1/p), c <= 220;
// the moment factor drops at p = infinity.
inline double submartingale_rate(double K, double p, double lambda, double eps,
                                 const RateConstants& c = {}) {
    detail::require_moment_bound(K);
    detail::require_unit_open(lambda, "lambda");
    detail::require_unit_open(eps, "epsilon");
    return c.submartingale_c * K * K / (lambda * eps * eps) *
           detail::moment_factor(2.0 / lambda, p);
}

// General L1-bounded sub- or supermartingale: phi = c (K / (lambda eps))^2
// with c = 2^11 * 9 * 220 (the quoted ceiling for the decomposition route).
inline double doob_rate(double K, double lambda, double eps,
                        const RateConstants& c = {}) {
    detail::require_moment_bound(K);
    detail::require_unit_open(lambda, "lambda");
    detail::require_unit_open(eps, "epsilon");
    const double q = K / (lambda * eps);
    return c.doob_c * q * q;
}

// Sum rule: X + Y converges with phi(lambda, eps) =
// phi1(lambda/2, eps/2) + phi2(lambda/2, eps/2).
inline double sum_rate(const RateFunction& phi1, const RateFunction& phi2,
                       double lambda, double eps) {
    detail::require_unit_open(lambda, "lambda");
    detail::require_unit_open(eps, "epsilon");
    return phi1(lambda / 2.0, eps / 2.0) + phi2(lambda / 2.0, eps / 2.0);
}

// Birkhoff averages with sup ||A_n f||_p < K:
// phi_p(lambda, eps) = (16 c K^2 / (lambda eps^2)) * (4/lambda)^(1/p).
inline double ergodic_rate(double K, double p, double lambda, double eps,
                           const RateConstants& c = {}) {
    detail::require_moment_bound(K);
    detail::require_unit_open(lambda, "lambda");
    detail::require_unit_open(eps, "epsilon");
    return 16.0 * c.submartingale_c * K * K / (lambda * eps * eps) *
           detail::moment_factor(4.0 / lambda, p);
}

enum class AlmostSuperVariant {
    standard,      // 16c((K+2a)/(lambda eps))^2 + 4c'(a/(lambda eps))
    downcrossing,  // c((K+a)/(lambda eps))^2 with c <= 2*11*19
};

// Nonnegative process with E[X_{n+1}|F_n] <= X_n + E_n, sum E_n < a, K > E(X_0).
inline double almost_supermartingale_rate(double K, double a_err, double lambda,
                                          double eps,
                                          AlmostSuperVariant variant =
                                              AlmostSuperVariant::standard,
                                          const RateConstants& c = {}) {
    detail::require_moment_bound(K);
    detail::require_unit_open(lambda, "lambda");
    detail::require_unit_open(eps, "epsilon");
    if (!std::isfinite(a_err) || a_err < 0.0)
        throw DomainError("a_err must be nonnegative");
    if (variant == AlmostSuperVariant::downcrossing) {
        const double q = (K + a_err) / (lambda * eps);
        return c.downcrossing_c * q * q;
    }
    const double q = (K + 2.0 * a_err) / (lambda * eps);
    return 16.0 * c.doob_c * q * q + 4.0 * c.monotone_c * (a_err / (lambda * eps));
}

// E[Fluc_eps] <= tau(eps) turns into the learnable uniform rate tau(eps)/lambda.
inline double fluc_mean_to_uniform_rate(const std::function<double(double)>& tau,
                                        double lambda, double eps) {
    detail::require_unit_open(lambda, "lambda");
    detail::require_unit_open(eps, "epsilon");
    return tau(eps) / lambda;
}

// L2-style variant with caller-supplied constant: c_p^(2/p) K^2 / (lambda eps^2).
// The constant is mandatory because no concrete value is available for it.
inline double lp_fluctuation_rate(double c_p, double p, double K, double lambda,
                                  double eps) {
    detail::require_positive(c_p, "c_p");
    if (!(p >= 2.0)) throw DomainError("the L2-route rate needs p >= 2");
    detail::require_moment_bound(K);
    detail::require_unit_open(lambda, "lambda");
    detail::require_unit_open(eps, "epsilon");
    return std::pow(c_p, 2.0 / p) * K * K / (lambda * eps * eps);
}

// ---------------------------------------------------------------------------
// numeric inversion
// ---------------------------------------------------------------------------

// Bisection inverse of a strictly decreasing G on [lo, hi]: returns x with
// |G(x) - target| <= 1e-10 * (1 + |target|). Detects non-monotone behaviour at
// the probed points.
inline double invert_decreasing(const std::function<double(double)>& G, double target,
                                double lo, double hi) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw BracketError("invalid bracket");
    double glo = G(lo);
    double ghi = G(hi);
    if (glo < ghi) throw ContractError("function increases over the bracket");
    if (!(ghi <= target && target <= glo))
        throw BracketError("target not straddled by bracket");
    const double tol = 1e-10 * (1.0 + std::abs(target));
    for (int iter = 0; iter < 2000; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double gm = G(mid);
        if (gm > glo || gm < ghi)
            throw ContractError("function is not monotone on the bracket");
        if (std::abs(gm - target) <= tol) return mid;
        if (gm >= target) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
            ghi = gm;
        }
    }
    throw ContractError("bisection failed to reach tolerance (discontinuity?)");
}

}  // namespace metastable

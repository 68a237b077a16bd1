#pragma once

// Small numerical kernels shared by the closure and the discretization:
// Gauss-Legendre rules and a safeguarded Newton/bisection root finder.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace lowmach {

/// Gauss-Legendre rule on [0, 1].
struct GaussRule {
    std::vector<double> points;
    std::vector<double> weights;

    std::size_t size() const noexcept { return points.size(); }
};

/// n-point Gauss-Legendre rule mapped to [0, 1] (Newton on P_n, Golub-Welsch free).
inline GaussRule gauss_legendre(int n) {
    if (n < 1) throw InputError("gauss_legendre: order must be >= 1");
    GaussRule rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1,1] -> [0,1]
        rule.points[i] = 0.5 * (1.0 - x);
        rule.points[n - 1 - i] = 0.5 * (1.0 + x);
        rule.weights[i] = 0.5 * w;
        rule.weights[n - 1 - i] = 0.5 * w;
    }
    return rule;
}

/// Cached 8-point rule used for the t-integrals of the eps-stable expansions.
inline const GaussRule& gauss8() {
    static const GaussRule rule = gauss_legendre(8);
    return rule;
}

/// Root of an increasing function on [lo, hi] with f(lo) <= 0 <= f(hi).
///
/// Newton steps from the bracket midpoint, falling back to bisection whenever
/// the Newton iterate leaves the bracket or stalls. `fdf` returns (f, f').
/// Terminates when the bracket or the step is below rtol * |x|.
inline double solve_increasing(const std::function<std::pair<double, double>(double)>& fdf,
                               double lo, double hi, double rtol = 1e-13) {
    auto [flo, dlo] = fdf(lo);
    auto [fhi, dhi] = fdf(hi);
    (void)dlo;
    (void)dhi;
    if (flo > 0.0 || fhi < 0.0) throw DomainError("solve_increasing: root not bracketed");
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 400; ++it) {
        auto [f, df] = fdf(x);
        if (f == 0.0) return x;
        if (f < 0.0) lo = x; else hi = x;
        double next = (df > 0.0 && std::isfinite(df)) ? x - f / df : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double step = std::abs(next - x);
        x = next;
        const double scale = std::max(std::abs(x), std::numeric_limits<double>::min());
        if (step <= rtol * scale || (hi - lo) <= rtol * scale) {
            // one polish step; stays inside the bracket by construction
            auto [f2, df2] = fdf(x);
            if (df2 > 0.0) {
                const double polished = x - f2 / df2;
                if (polished >= lo && polished <= hi) x = polished;
            }
            return x;
        }
    }
    return x;
}

}  // namespace lowmach

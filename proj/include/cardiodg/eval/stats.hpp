#pragma once

#include <cardiodg/error.hpp>
#include <cardiodg/eval/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace cardiodg::eval {

/// Linear-interpolated percentile of sorted data, q in [0, 100].
inline double percentile_sorted(std::span<const double> sorted, double q)
{
    if (sorted.empty())
        throw Error("percentile of an empty sample");
    const double pos = q / 100.0 * double(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - double(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct Interval {
    double lo = 0;
    double hi = 0;
    double level = 0.95;
    std::size_t n_resamples = 0;
};

/// Percentile bootstrap interval for macro-F1 over index resamples.
inline Interval bootstrap_ci(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes,
                             std::size_t n_resamples = 1000, double level = 0.95, std::uint64_t seed = 42)
{
    const std::size_t n = y_true.size();
    if (n == 0)
        throw Error("bootstrap needs at least one prediction");
    if (y_pred.size() != n)
        throw Error("bootstrap: y_true and y_pred differ in length");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> stats(n_resamples);
    std::vector<int> t(n), p(n);
    for (std::size_t r = 0; r < n_resamples; ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = pick(rng);
            t[i] = y_true[j];
            p[i] = y_pred[j];
        }
        stats[r] = macro_f1(t, p, n_classes);
    }
    std::sort(stats.begin(), stats.end());
    const double tail = (1.0 - level) / 2.0 * 100.0;
    return {percentile_sorted(stats, tail), percentile_sorted(stats, 100.0 - tail), level, n_resamples};
}

struct WilcoxonResult {
    double statistic = 0; ///< min(W+, W-)
    double w_plus = 0;
    double w_minus = 0;
    double p_value = 1;
    std::size_t n_used = 0; ///< pairs left after dropping zero differences
    bool exact = false;
};

/// Two-sided signed-rank test. Zero differences are dropped, tied absolute
/// differences share their average rank. Exact null distribution for up to 20
/// pairs, normal approximation with tie and continuity correction beyond.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw Error("wilcoxon: paired samples differ in length");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] - b[i] != 0.0)
            d.push_back(a[i] - b[i]);
    const std::size_t m = d.size();
    if (m < 5)
        throw Error("insufficient pairs: " + std::to_string(m) + " non-zero differences, at least 5 required");

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
    // Doubled ranks stay integral under tie averaging.
    std::vector<std::size_t> rank2(m);
    double tie_term = 0;
    for (std::size_t i = 0; i < m;) {
        std::size_t j = i;
        while (j < m && std::abs(d[order[j]]) == std::abs(d[order[i]]))
            ++j;
        for (std::size_t k = i; k < j; ++k)
            rank2[order[k]] = i + 1 + j; // 2 * average of ranks i+1..j
        const double t = double(j - i);
        tie_term += t * t * t - t;
        i = j;
    }

    WilcoxonResult r;
    r.n_used = m;
    std::size_t wp2 = 0, wm2 = 0;
    for (std::size_t i = 0; i < m; ++i)
        (d[i] > 0 ? wp2 : wm2) += rank2[i];
    r.w_plus = double(wp2) / 2.0;
    r.w_minus = double(wm2) / 2.0;
    r.statistic = std::min(r.w_plus, r.w_minus);

    if (m <= 20) {
        r.exact = true;
        const std::size_t total = wp2 + wm2;
        std::vector<double> count(total + 1, 0.0);
        count[0] = 1;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t s = total; s >= rank2[i]; --s)
                count[s] += count[s - rank2[i]];
        const std::size_t w2 = std::min(wp2, wm2);
        double tail = 0;
        for (std::size_t s = 0; s <= w2; ++s)
            tail += count[s];
        r.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, int(m)));
        return r;
    }

    const double mean = double(m) * double(m + 1) / 4.0;
    const double var = double(m) * double(m + 1) * double(2 * m + 1) / 24.0 - tie_term / 48.0;
    const double dev = std::max(0.0, std::abs(r.statistic - mean) - 0.5);
    r.p_value = var > 0 ? std::min(1.0, std::erfc(dev / std::sqrt(2.0 * var))) : 1.0;
    return r;
}

struct MeanSd {
    double mean = 0;
    double sd = 0; ///< sample standard deviation (n - 1); 0 for a single value
    std::size_t n = 0;
};

inline MeanSd mean_sd(std::span<const double> x)
{
    MeanSd r;
    r.n = x.size();
    if (x.empty())
        return r;
    r.mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
    if (x.size() > 1) {
        double v = 0;
        for (double e : x)
            v += (e - r.mean) * (e - r.mean);
        r.sd = std::sqrt(v / double(x.size() - 1));
    }
    return r;
}

} // namespace cardiodg::eval

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace deferlab::stats {

inline constexpr double kZ99 = 2.5758293035489004;  // two-sided 99% normal quantile

inline double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean of empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> v) {
    if (v.size() < 2) throw std::invalid_argument("variance needs at least two values");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double normal_cdf(double z) { return boost::math::cdf(boost::math::normal_distribution<double>(), z); }

/// Normal-approximation half-width of a binomial proportion CI.
inline double binomial_halfwidth(double p, std::size_t n, double z = kZ99) {
    if (n == 0) return 0.0;
    return z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

struct TTestResult {
    double mean_difference = 0.0;  // mean(a - b)
    double t = 0.0;
    double p_value = 1.0;  // two-sided
    std::size_t dof = 0;
};

inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired t-test needs equal samples of size >= 2");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    TTestResult r;
    r.dof = d.size() - 1;
    r.mean_difference = mean(d);
    const double se = std::sqrt(variance(d) / static_cast<double>(d.size()));
    if (se == 0.0) {
        r.t = r.mean_difference == 0.0 ? 0.0 : std::copysign(INFINITY, r.mean_difference);
        r.p_value = r.mean_difference == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = r.mean_difference / se;
    boost::math::students_t_distribution<double> dist(static_cast<double>(r.dof));
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    return r;
}

}  // namespace deferlab::stats

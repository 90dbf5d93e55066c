#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deferlab/rng.hpp"
#include "deferlab/stats.hpp"

namespace deferlab {

enum class NoiseKind { Gaussian, Uniform, Laplace };

inline std::string_view to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::Gaussian: return "gaussian";
        case NoiseKind::Uniform: return "uniform";
        case NoiseKind::Laplace: return "laplace";
    }
    return "?";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
    if (s == "gaussian") return NoiseKind::Gaussian;
    if (s == "uniform") return NoiseKind::Uniform;
    if (s == "laplace") return NoiseKind::Laplace;
    throw std::invalid_argument("unknown noise kind: " + std::string(s));
}

/// Calibrated confidence = true confidence + zero-mean noise of std epsilon.
struct CalibrationScenario {
    double p_human = 0.5;
    double p_machine = 0.5;
    double epsilon = 0.0;
    NoiseKind noise = NoiseKind::Gaussian;
};

/// min(1, 2 eps^2 / (p_H - p_M)^2); vacuous (1) when the confidences coincide.
inline double chebyshev_bound(const CalibrationScenario& s) {
    const double gap = s.p_human - s.p_machine;
    if (gap == 0.0) return 1.0;
    return std::min(1.0, 2.0 * s.epsilon * s.epsilon / (gap * gap));
}

enum class Assignee { Human, Machine };

/// Hand the instance to whoever reports the higher calibrated confidence;
/// ties go to the human.
constexpr Assignee confidence_deferral_policy(double g_human, double g_machine) noexcept {
    return g_human >= g_machine ? Assignee::Human : Assignee::Machine;
}

/// Zero-mean noise with standard deviation `eps`.
class CalibrationNoise {
public:
    CalibrationNoise(NoiseKind kind, double eps) : kind_(kind), eps_(eps) {}

    double operator()(Rng& rng) {
        switch (kind_) {
            case NoiseKind::Gaussian: return eps_ * n01_(rng);
            case NoiseKind::Uniform: return eps_ * std::sqrt(3.0) * (2.0 * u01_(rng) - 1.0);
            case NoiseKind::Laplace: {
                // inverse CDF with scale b = eps / sqrt(2)
                const double u = u01_(rng) - 0.5;
                const double b = eps_ / std::sqrt(2.0);
                return -b * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
            }
        }
        return 0.0;
    }

private:
    NoiseKind kind_;
    double eps_;
    std::normal_distribution<double> n01_{0.0, 1.0};
    std::uniform_real_distribution<double> u01_{0.0, 1.0};
};

struct SimulationResult {
    double rate = 0.0;
    double ci_halfwidth = 0.0;  // 99%
    std::uint64_t trials = 0;
    std::uint64_t misclassified = 0;
};

inline constexpr std::uint64_t kMinSimulationTrials = 10'000;

/// Fraction of trials in which the agent with the lower true confidence
/// reports a strictly higher calibrated confidence.
inline SimulationResult simulate_misclassification(const CalibrationScenario& s, std::uint64_t trials,
                                                   std::uint64_t seed) {
    if (trials < kMinSimulationTrials)
        throw std::invalid_argument("simulate_misclassification: need at least 10^4 trials");
    if (!(s.epsilon >= 0.0)) throw std::invalid_argument("simulate_misclassification: epsilon must be >= 0");
    SimulationResult r;
    r.trials = trials;
    if (s.p_human == s.p_machine) return r;

    const bool human_better = s.p_human > s.p_machine;
    Rng rng = make_rng(seed, {stream::calib});
    CalibrationNoise noise(s.noise, s.epsilon);
    std::uint64_t bad = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        const double g_h = s.p_human + noise(rng);
        const double g_m = s.p_machine + noise(rng);
        bad += human_better ? (g_m > g_h) : (g_h > g_m);
    }
    r.misclassified = bad;
    r.rate = static_cast<double>(bad) / static_cast<double>(trials);
    r.ci_halfwidth = stats::binomial_halfwidth(r.rate, trials);
    return r;
}

struct BoundRow {
    CalibrationScenario scenario;
    double bound = 1.0;
    SimulationResult empirical;
    bool pass = false;
};

struct BoundGrid {
    std::vector<double> confidences{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<double> epsilons{0.01, 0.05, 0.1};
    std::vector<NoiseKind> noises{NoiseKind::Gaussian, NoiseKind::Uniform, NoiseKind::Laplace};
    double min_gap = 0.1;
    std::uint64_t trials = 1'000'000;
};

/// Every ordered (p_H, p_M) pair with |gap| >= min_gap, crossed with every
/// epsilon and noise kind. Each cell draws from its own seeded stream.
inline std::vector<BoundRow> verify_bound_grid(const BoundGrid& grid, std::uint64_t seed) {
    std::vector<BoundRow> rows;
    std::uint64_t cell = 0;
    for (double ph : grid.confidences)
        for (double pm : grid.confidences) {
            if (std::abs(ph - pm) < grid.min_gap - 1e-12) continue;
            for (double eps : grid.epsilons)
                for (auto kind : grid.noises) {
                    BoundRow row;
                    row.scenario = {ph, pm, eps, kind};
                    row.bound = chebyshev_bound(row.scenario);
                    row.empirical = simulate_misclassification(row.scenario, grid.trials, derive_seed(seed, {cell++}));
                    row.pass = row.empirical.rate - row.empirical.ci_halfwidth <= row.bound;
                    rows.push_back(row);
                }
        }
    return rows;
}

}  // namespace deferlab

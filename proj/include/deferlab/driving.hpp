#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deferlab/data.hpp"
#include "deferlab/human_model.hpp"
#include "deferlab/nn.hpp"
#include "deferlab/parallel.hpp"
#include "deferlab/rng.hpp"
#include "deferlab/stats.hpp"

namespace deferlab::driving {

/// Per-driver mean minutes: base trip, extra per unit rain, extra per unit darkness.
struct Driver {
    double mu = 0.0;
    double mu_r = 0.0;
    double mu_d = 0.0;
};

struct Trip {
    double rain = 0.0;
    double dark = 0.0;
    std::optional<double> human_time;  // realized minutes, labeled trips only
};

/// Noise and autonomous-vehicle constants, in minutes.
struct AvParams {
    double mu_a = 45.0;
    double sigma_a = 0.001;
    double mu_b = 40.0;
    double sigma_b = 5.0;
    double mu_x = 5.0;
    double mu_y = 5.0;
    double sigma_x = 2.0;
    double sigma_y = 2.0;
    double sigma = 5.0;
    double sigma_r = 2.0;
    double sigma_d = 2.0;

    void validate() const {
        for (double s : {sigma_a, sigma_b, sigma_x, sigma_y, sigma, sigma_r, sigma_d})
            if (!(s > 0.0)) throw std::invalid_argument("AvParams: every sigma must be positive");
    }
};

enum class Action : int { Defer = 0, DriveIndependent = 1, DriveDependent = 2 };
inline constexpr int kNumActions = 3;

inline void check_conditions(double r, double d) {
    if (!(r >= 0.0 && r <= 1.0 && d >= 0.0 && d <= 1.0))
        throw std::invalid_argument("rain and darkness must lie in [0, 1]");
}

inline Driver sample_driver(Rng& rng) {
    std::poisson_distribution<int> base(35.0), rain(5.0), dark(5.0);
    Driver d;
    d.mu = base(rng);
    d.mu_r = rain(rng);
    d.mu_d = dark(rng);
    return d;
}

inline Driver sample_driver(std::uint64_t seed) {
    Rng rng = make_rng(seed, {stream::drivers});
    return sample_driver(rng);
}

/// N(mu, sigma) + r N(mu_r, sigma_r) + d N(mu_d, sigma_d). All three normals
/// are always drawn so the stream position does not depend on (r, d).
inline double sample_human_time(const Driver& drv, double r, double d, const AvParams& p, Rng& rng) {
    check_conditions(r, d);
    std::normal_distribution<double> base(drv.mu, p.sigma), rain(drv.mu_r, p.sigma_r), dark(drv.mu_d, p.sigma_d);
    const double t0 = base(rng);
    const double tr = rain(rng);
    const double td = dark(rng);
    return t0 + r * tr + d * td;
}

inline double sample_av_time(Action action, double r, double d, const AvParams& p, Rng& rng) {
    check_conditions(r, d);
    switch (action) {
        case Action::DriveIndependent: {
            std::normal_distribution<double> a(p.mu_a, p.sigma_a);
            return a(rng);
        }
        case Action::DriveDependent: {
            std::normal_distribution<double> b(p.mu_b, p.sigma_b), x(p.mu_x, p.sigma_x), y(p.mu_y, p.sigma_y);
            const double tb = b(rng);
            const double tx = x(rng);
            const double ty = y(rng);
            return tb + r * tx + d * ty;
        }
        case Action::Defer: break;
    }
    throw std::invalid_argument("sample_av_time: deferring has no vehicle duration");
}

inline double expected_human_time(const Driver& drv, double r, double d) { return drv.mu + r * drv.mu_r + d * drv.mu_d; }

inline double expected_av_time(Action action, double r, double d, const AvParams& p) {
    switch (action) {
        case Action::DriveIndependent: return p.mu_a;
        case Action::DriveDependent: return p.mu_b + r * p.mu_x + d * p.mu_y;
        case Action::Defer: break;
    }
    throw std::invalid_argument("expected_av_time: deferring has no vehicle duration");
}

/// First index of the smallest cost.
inline Action argmin_action(const std::array<double, kNumActions>& cost) {
    return static_cast<Action>(std::min_element(cost.begin(), cost.end()) - cost.begin());
}

inline Action known_mean_choice(const Driver& drv, double r, double d, const AvParams& p) {
    return argmin_action({expected_human_time(drv, r, d), expected_av_time(Action::DriveIndependent, r, d, p),
                          expected_av_time(Action::DriveDependent, r, d, p)});
}

inline double ideal_time(double human, double independent, double dependent) {
    return std::min({human, independent, dependent});
}

// ---------------------------------------------------------------------------
// Datasets

struct WorldSpec {
    int drivers = 10;          // n
    int trips_per_driver = 256;  // k
    int unlabeled = 1000;      // l

    void validate() const {
        if (drivers < 1 || trips_per_driver < 2 || unlabeled < 0)
            throw std::invalid_argument("WorldSpec: need n >= 1, k >= 2, l >= 0");
    }
};

struct World {
    std::vector<Driver> drivers;
    std::vector<std::vector<Trip>> trips;  // per driver
    std::vector<Trip> unlabeled;
    std::uint64_t seed = 0;
};

inline World generate_world(const WorldSpec& spec, const AvParams& params, std::uint64_t seed) {
    spec.validate();
    params.validate();
    World w;
    w.seed = seed;
    Rng drv_rng = make_rng(seed, {stream::drivers});
    for (int j = 0; j < spec.drivers; ++j) w.drivers.push_back(sample_driver(drv_rng));
    for (int j = 0; j < spec.drivers; ++j) {
        Rng rng = make_rng(seed, {stream::trips, static_cast<std::uint64_t>(j)});
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        auto& trips = w.trips.emplace_back();
        for (int t = 0; t < spec.trips_per_driver; ++t) {
            Trip trip;
            trip.rain = u01(rng);
            trip.dark = u01(rng);
            trip.human_time = sample_human_time(w.drivers[j], trip.rain, trip.dark, params, rng);
            trips.push_back(trip);
        }
    }
    Rng urng = make_rng(seed, {stream::unlabeled});
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int t = 0; t < spec.unlabeled; ++t) {
        Trip trip;
        trip.rain = u01(urng);
        trip.dark = u01(urng);
        w.unlabeled.push_back(trip);
    }
    return w;
}

/// Partition of a world around one target driver.
struct DrivingDataset {
    std::vector<Trip> aggregate;  // every other driver's trips
    std::vector<Trip> finetune;
    std::vector<Trip> test;
    std::vector<Trip> unlabeled;
    Driver target;
    int target_index = 0;
    std::vector<std::string> warnings;
};

inline DrivingDataset partition(const World& w, int target) {
    if (target < 0 || target >= static_cast<int>(w.drivers.size()))
        throw std::invalid_argument("target driver index out of range");
    DrivingDataset ds;
    ds.target = w.drivers[target];
    ds.target_index = target;
    for (std::size_t j = 0; j < w.drivers.size(); ++j)
        if (static_cast<int>(j) != target) ds.aggregate.insert(ds.aggregate.end(), w.trips[j].begin(), w.trips[j].end());
    auto [ft, te] = split_specific<Trip>(std::span<const Trip>(w.trips[target]),
                                         derive_seed(w.seed, {stream::split, static_cast<std::uint64_t>(target)}));
    ds.finetune = std::move(ft);
    ds.test = std::move(te);
    ds.unlabeled = w.unlabeled;
    if (ds.aggregate.empty()) ds.warnings.push_back("single-driver world: aggregate set is empty");
    return ds;
}

inline DrivingDataset generate_driving_dataset(const WorldSpec& spec, int target, const AvParams& params,
                                               std::uint64_t seed) {
    if (target < 0 || target >= spec.drivers) throw std::invalid_argument("target driver index out of range");
    return partition(generate_world(spec, params, seed), target);
}

// ---------------------------------------------------------------------------
// Learned policy

struct PolicyOptions {
    bool baseline_uses_specific = true;  // whether "none" also sees the fine-tune split
    int self_train_rounds = 1;
};

struct DrivingPolicy {
    HumanModel time_model;
    Network policy;

    Action decide(double r, double d) const {
        const std::array<double, 2> x{r, d};
        return static_cast<Action>(argmax(policy.forward(x)));
    }
};

inline std::vector<TimeSample> time_samples(std::span<const Trip> trips) {
    std::vector<TimeSample> out;
    out.reserve(trips.size());
    for (const auto& t : trips) {
        if (!t.human_time) throw std::invalid_argument("labeled trip without a human time");
        out.push_back({{t.rain, t.dark}, *t.human_time});
    }
    return out;
}

/// Phase 1 fits the human-time model under `regime`; phase 2 trains a
/// 3-way policy by cross-entropy toward argmin(h(r,d), mu_a, mu_b + r mu_x + d mu_y)
/// over every labeled or unlabeled (r, d) point.
inline DrivingPolicy train_driving_policy(const DrivingDataset& ds, Regime regime, const TrainConfig& config,
                                          const AvParams& params, const PolicyOptions& opt = {}) {
    const auto agg = time_samples(ds.aggregate);
    const auto ft = time_samples(ds.finetune);
    DrivingPolicy out;
    switch (regime) {
        case Regime::None:
            out.time_model = train_time_baseline(agg, ft, config, opt.baseline_uses_specific);
            break;
        case Regime::Finetune:
            out.time_model = train_time_finetuned(agg, ft, config);
            break;
        case Regime::SelfTrain: {
            std::vector<FeatureVector> xs;
            xs.reserve(ds.unlabeled.size());
            for (const auto& t : ds.unlabeled) xs.push_back({t.rain, t.dark});
            out.time_model = self_train_time(ft, xs, config, opt.self_train_rounds);
            break;
        }
    }

    std::vector<Example> examples;
    auto add = [&](std::span<const Trip> trips) {
        for (const auto& t : trips) {
            FeatureVector x{t.rain, t.dark};
            const std::array<double, kNumActions> cost{out.time_model.predict_time(x),
                                                       expected_av_time(Action::DriveIndependent, t.rain, t.dark, params),
                                                       expected_av_time(Action::DriveDependent, t.rain, t.dark, params)};
            examples.push_back({std::move(x), ClassTarget{static_cast<int>(argmin_action(cost))}, 1.0});
        }
    };
    add(ds.aggregate);
    add(ds.finetune);
    add(ds.unlabeled);

    TrainConfig policy_config = config;
    policy_config.seed = derive_seed(config.seed, {stream::policy});
    out.policy = fit_single_phase(examples, kNumActions, policy_config);
    return out;
}

// ---------------------------------------------------------------------------
// Experiment

/// Realized durations of the three options for one test trip.
struct TripDraws {
    double human = 0.0;
    double independent = 0.0;
    double dependent = 0.0;

    double of(Action a) const {
        switch (a) {
            case Action::Defer: return human;
            case Action::DriveIndependent: return independent;
            case Action::DriveDependent: return dependent;
        }
        return human;
    }
    double ideal() const { return ideal_time(human, independent, dependent); }
};

/// Common random numbers: vehicle draws come from a per-trip stream so every
/// policy is scored against identical realizations.
inline std::vector<TripDraws> draw_test_outcomes(const DrivingDataset& ds, const AvParams& params,
                                                 std::uint64_t seed) {
    std::vector<TripDraws> out;
    out.reserve(ds.test.size());
    for (std::size_t t = 0; t < ds.test.size(); ++t) {
        const auto& trip = ds.test[t];
        Rng rng = make_rng(seed, {stream::av_draws, static_cast<std::uint64_t>(ds.target_index), t});
        TripDraws d;
        d.human = trip.human_time.value();
        d.independent = sample_av_time(Action::DriveIndependent, trip.rain, trip.dark, params, rng);
        d.dependent = sample_av_time(Action::DriveDependent, trip.rain, trip.dark, params, rng);
        out.push_back(d);
    }
    return out;
}

struct ExperimentSpec {
    int repetitions = 200;
    WorldSpec world;
    AvParams params;
    TrainConfig config = [] {
        TrainConfig c;
        c.hidden = {32, 32};
        return c;
    }();
    std::vector<Regime> regimes{Regime::None, Regime::Finetune, Regime::SelfTrain};
    PolicyOptions policy;
    std::uint64_t seed = 0;
    unsigned workers = 0;

    void validate() const {
        if (repetitions < 2) throw std::invalid_argument("driving experiment needs at least 2 repetitions");
        if (regimes.empty()) throw std::invalid_argument("driving experiment needs at least one regime");
        world.validate();
        params.validate();
        config.validate();
    }
};

struct DrivingRow {
    int repetition = 0;
    int driver_index = 0;
    std::string regime;  // a learned regime, "known_mean" or "ideal"
    double mean_duration = 0.0;
};

struct RegimeSummary {
    std::string regime;
    double mean_duration = 0.0;
    std::vector<double> repetition_means;
};

struct DrivingReport {
    std::vector<DrivingRow> rows;
    std::vector<RegimeSummary> summaries;  // learned regimes, then known_mean, ideal
    std::optional<stats::TTestResult> finetune_vs_none;
    std::size_t ideal_violations = 0;  // trips where ideal exceeded some policy's realized duration

    const RegimeSummary* summary(std::string_view name) const {
        for (const auto& s : summaries)
            if (s.regime == name) return &s;
        return nullptr;
    }
};

struct RepetitionResult {
    std::vector<DrivingRow> rows;
    std::size_t ideal_violations = 0;
};

inline RepetitionResult run_repetition(const ExperimentSpec& spec, int rep) {
    const std::uint64_t rep_seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(rep)});
    const World world = generate_world(spec.world, spec.params, rep_seed);
    RepetitionResult out;
    for (int i = 0; i < spec.world.drivers; ++i) {
        const auto ds = partition(world, i);
        const auto draws = draw_test_outcomes(ds, spec.params, rep_seed);
        const double n = static_cast<double>(draws.size());

        std::vector<double> ideal(draws.size());
        double ideal_sum = 0.0, known_sum = 0.0;
        for (std::size_t t = 0; t < draws.size(); ++t) {
            ideal[t] = draws[t].ideal();
            ideal_sum += ideal[t];
            const double km = draws[t].of(known_mean_choice(ds.target, ds.test[t].rain, ds.test[t].dark, spec.params));
            known_sum += km;
            out.ideal_violations += ideal[t] > km;
        }

        for (Regime regime : spec.regimes) {
            TrainConfig cfg = spec.config;
            cfg.seed = derive_seed(rep_seed, {static_cast<std::uint64_t>(i), 100});
            const auto policy = train_driving_policy(ds, regime, cfg, spec.params, spec.policy);
            double sum = 0.0;
            for (std::size_t t = 0; t < draws.size(); ++t) {
                const double v = draws[t].of(policy.decide(ds.test[t].rain, ds.test[t].dark));
                sum += v;
                out.ideal_violations += ideal[t] > v;
            }
            out.rows.push_back({rep, i, std::string(to_string(regime)), sum / n});
        }
        out.rows.push_back({rep, i, "known_mean", known_sum / n});
        out.rows.push_back({rep, i, "ideal", ideal_sum / n});
    }
    return out;
}

inline DrivingReport run_driving_experiment(const ExperimentSpec& spec) {
    spec.validate();
    std::vector<RepetitionResult> reps(spec.repetitions);
    parallel_for(
        reps.size(), [&](std::size_t r) { reps[r] = run_repetition(spec, static_cast<int>(r)); }, spec.workers);

    DrivingReport report;
    std::vector<std::string> names;
    for (auto r : spec.regimes) names.emplace_back(to_string(r));
    names.emplace_back("known_mean");
    names.emplace_back("ideal");
    for (const auto& n : names) report.summaries.push_back({n, 0.0, std::vector<double>(spec.repetitions, 0.0)});

    for (int r = 0; r < spec.repetitions; ++r) {
        report.ideal_violations += reps[r].ideal_violations;
        for (const auto& row : reps[r].rows) {
            report.rows.push_back(row);
            for (auto& s : report.summaries)
                if (s.regime == row.regime) s.repetition_means[r] += row.mean_duration / spec.world.drivers;
        }
    }
    for (auto& s : report.summaries) s.mean_duration = stats::mean(s.repetition_means);

    const auto* ft = report.summary("finetune");
    const auto* none = report.summary("none");
    if (ft && none) report.finetune_vs_none = stats::paired_t_test(ft->repetition_means, none->repetition_means);
    return report;
}

/// repetition,driver_index,regime,mean_duration_minutes,p_value. Summary rows
/// use repetition "all"; only the finetune summary carries a p-value.
inline void write_driving_csv(std::ostream& out, const DrivingReport& report) {
    out << "repetition,driver_index,regime,mean_duration_minutes,p_value\n";
    for (const auto& row : report.rows)
        out << row.repetition << ',' << row.driver_index << ',' << row.regime << ','
            << deferlab::detail::format_double(row.mean_duration) << ",\n";
    for (const auto& s : report.summaries) {
        out << "all,," << s.regime << ',' << deferlab::detail::format_double(s.mean_duration) << ',';
        if (s.regime == "finetune" && report.finetune_vs_none)
            out << deferlab::detail::format_double(report.finetune_vs_none->p_value);
        out << '\n';
    }
}

}  // namespace deferlab::driving

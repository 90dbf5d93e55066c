#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deferlab/calib.hpp"
#include "deferlab/classification.hpp"
#include "deferlab/driving.hpp"

namespace deferlab {

/// Invalid configuration: bad key, bad type, or a value out of range.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Experiment { Driving, Classification, Bound };

inline std::string_view to_string(Experiment e) {
    switch (e) {
        case Experiment::Driving: return "driving";
        case Experiment::Classification: return "classification";
        case Experiment::Bound: return "bound";
    }
    return "?";
}

inline Experiment parse_experiment(std::string_view s) {
    if (s == "driving") return Experiment::Driving;
    if (s == "classification") return Experiment::Classification;
    if (s == "bound") return Experiment::Bound;
    throw ConfigError("unknown experiment: " + std::string(s));
}

/// Every key a config file may set, with its default. A null `hidden` picks
/// the per-experiment architecture (32x32 driving, 64x64 classification).
inline nlohmann::json default_config_json() {
    const TrainConfig t;
    const driving::AvParams av;
    const driving::WorldSpec w;
    const classification::ClassificationSpec c;
    const BoundGrid g;
    nlohmann::json j = {
        {"experiment", "driving"},
        {"regimes", {"none", "finetune", "selftrain"}},
        {"seed", 0},
        {"seeds", nlohmann::json::array()},
        {"repetitions", 200},
        {"epochs", t.epochs},
        {"finetune_multiplier", t.finetune_multiplier},
        {"learning_rate", t.learning_rate},
        {"batch_size", t.batch_size},
        {"deferral_cost", t.deferral_cost},
        {"confidence_threshold", t.confidence_threshold},
        {"hidden", nullptr},
        {"self_train_rounds", c.self_train_rounds},
        {"baseline_uses_specific", c.baseline_uses_specific},
        {"mu_a", av.mu_a},
        {"sigma_a", av.sigma_a},
        {"mu_b", av.mu_b},
        {"sigma_b", av.sigma_b},
        {"mu_x", av.mu_x},
        {"mu_y", av.mu_y},
        {"sigma_x", av.sigma_x},
        {"sigma_y", av.sigma_y},
        {"sigma", av.sigma},
        {"sigma_r", av.sigma_r},
        {"sigma_d", av.sigma_d},
        {"n_drivers", w.drivers},
        {"trips_per_driver", w.trips_per_driver},
        {"unlabeled", w.unlabeled},
        {"target_driver", 0},
        {"num_classes", c.num_classes},
        {"dim", c.dim},
        {"spread", c.spread},
        {"separation", c.separation},
        {"aggregate_size", c.aggregate_size},
        {"specific_size", c.specific_size},
        {"unlabeled_size", c.unlabeled_size},
        {"annotators", c.annotators},
        {"annotator_beta_a", c.annotator_beta_a},
        {"annotator_beta_b", c.annotator_beta_b},
        {"experts", c.experts},
        {"train_rejector", c.train_rejector},
        {"trials", g.trials},
        {"confidences", g.confidences},
        {"epsilons", g.epsilons},
        {"noise_kinds", {"gaussian", "uniform", "laplace"}},
        {"min_gap", g.min_gap},
        {"workers", 0},
        {"save_models", true},
        {"output_dir", ""},
    };
    return j;
}

/// Fully resolved run configuration.
struct RunConfig {
    Experiment experiment = Experiment::Driving;
    std::vector<Regime> regimes;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;
    int repetitions = 200;
    TrainConfig train;
    std::optional<std::vector<int>> hidden;
    int self_train_rounds = 1;
    bool baseline_uses_specific = true;
    driving::AvParams av;
    driving::WorldSpec world;
    int target_driver = 0;
    classification::ClassificationSpec classification;
    BoundGrid bound;
    unsigned workers = 0;
    bool save_models = true;
    std::string output_dir;
    nlohmann::json resolved;  // the merged JSON this was parsed from

    driving::ExperimentSpec driving_spec() const {
        driving::ExperimentSpec s;
        s.repetitions = repetitions;
        s.world = world;
        s.params = av;
        s.config = train;
        s.config.hidden = hidden.value_or(std::vector<int>{32, 32});
        s.regimes = regimes;
        s.policy = {baseline_uses_specific, self_train_rounds};
        s.seed = seed;
        s.workers = workers;
        return s;
    }

    classification::ClassificationSpec classification_spec() const {
        auto s = classification;
        s.regimes = regimes;
        s.seeds = seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
        s.config = train;
        s.config.hidden = hidden.value_or(std::vector<int>{64, 64});
        s.self_train_rounds = self_train_rounds;
        s.baseline_uses_specific = baseline_uses_specific;
        s.workers = workers;
        return s;
    }
};

namespace detail {

template <typename T>
T get_as(const nlohmann::json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type: " + j.at(key).dump());
    }
}

inline void check(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace detail

/// Parses "key=value"; the value is read as JSON when it parses, otherwise as
/// a bare string.
inline std::pair<std::string, nlohmann::json> parse_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + kv);
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    auto value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    return {key, value};
}

/// defaults <- file <- overrides. Unknown keys are rejected.
inline nlohmann::json merge_config(const nlohmann::json& file, const std::vector<std::pair<std::string, nlohmann::json>>& overrides) {
    auto j = default_config_json();
    if (!file.is_null()) {
        if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
        for (const auto& [k, v] : file.items()) {
            if (!j.contains(k)) throw ConfigError("unknown config key: " + k);
            j[k] = v;
        }
    }
    for (const auto& [k, v] : overrides) {
        if (!j.contains(k)) throw ConfigError("unknown config key: " + k);
        j[k] = v;
    }
    return j;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using detail::check;
    using detail::get_as;
    RunConfig c;
    c.resolved = j;
    c.experiment = parse_experiment(get_as<std::string>(j, "experiment"));
    for (const auto& r : get_as<std::vector<std::string>>(j, "regimes")) {
        try {
            c.regimes.push_back(parse_regime(r));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    c.seed = get_as<std::uint64_t>(j, "seed");
    c.seeds = get_as<std::vector<std::uint64_t>>(j, "seeds");
    c.repetitions = get_as<int>(j, "repetitions");

    c.train.epochs = get_as<int>(j, "epochs");
    c.train.finetune_multiplier = get_as<double>(j, "finetune_multiplier");
    c.train.learning_rate = get_as<double>(j, "learning_rate");
    c.train.batch_size = get_as<int>(j, "batch_size");
    c.train.deferral_cost = get_as<double>(j, "deferral_cost");
    c.train.confidence_threshold = get_as<double>(j, "confidence_threshold");
    c.train.seed = c.seed;
    if (!j.at("hidden").is_null()) c.hidden = get_as<std::vector<int>>(j, "hidden");
    c.self_train_rounds = get_as<int>(j, "self_train_rounds");
    c.baseline_uses_specific = get_as<bool>(j, "baseline_uses_specific");

    auto& av = c.av;
    av.mu_a = get_as<double>(j, "mu_a");
    av.sigma_a = get_as<double>(j, "sigma_a");
    av.mu_b = get_as<double>(j, "mu_b");
    av.sigma_b = get_as<double>(j, "sigma_b");
    av.mu_x = get_as<double>(j, "mu_x");
    av.mu_y = get_as<double>(j, "mu_y");
    av.sigma_x = get_as<double>(j, "sigma_x");
    av.sigma_y = get_as<double>(j, "sigma_y");
    av.sigma = get_as<double>(j, "sigma");
    av.sigma_r = get_as<double>(j, "sigma_r");
    av.sigma_d = get_as<double>(j, "sigma_d");
    c.world.drivers = get_as<int>(j, "n_drivers");
    c.world.trips_per_driver = get_as<int>(j, "trips_per_driver");
    c.world.unlabeled = get_as<int>(j, "unlabeled");
    c.target_driver = get_as<int>(j, "target_driver");

    auto& cl = c.classification;
    cl.num_classes = get_as<int>(j, "num_classes");
    cl.dim = get_as<int>(j, "dim");
    cl.spread = get_as<double>(j, "spread");
    cl.separation = get_as<double>(j, "separation");
    cl.aggregate_size = get_as<int>(j, "aggregate_size");
    cl.specific_size = get_as<int>(j, "specific_size");
    cl.unlabeled_size = get_as<int>(j, "unlabeled_size");
    cl.annotators = get_as<int>(j, "annotators");
    cl.annotator_beta_a = get_as<double>(j, "annotator_beta_a");
    cl.annotator_beta_b = get_as<double>(j, "annotator_beta_b");
    cl.experts = get_as<std::vector<int>>(j, "experts");
    cl.train_rejector = get_as<bool>(j, "train_rejector");

    c.bound.trials = get_as<std::uint64_t>(j, "trials");
    c.bound.confidences = get_as<std::vector<double>>(j, "confidences");
    c.bound.epsilons = get_as<std::vector<double>>(j, "epsilons");
    c.bound.noises.clear();
    for (const auto& n : get_as<std::vector<std::string>>(j, "noise_kinds")) {
        try {
            c.bound.noises.push_back(parse_noise_kind(n));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    c.bound.min_gap = get_as<double>(j, "min_gap");

    c.workers = get_as<unsigned>(j, "workers");
    c.save_models = get_as<bool>(j, "save_models");
    c.output_dir = get_as<std::string>(j, "output_dir");

    // Validate everything up front, whatever the experiment.
    check(!c.regimes.empty(), "regimes must be non-empty");
    check(c.repetitions >= 2, "repetitions must be >= 2");
    check(c.target_driver >= 0 && c.target_driver < c.world.drivers, "target_driver must lie in [0, n_drivers)");
    check(c.self_train_rounds >= 1, "self_train_rounds must be >= 1");
    check(c.bound.trials >= kMinSimulationTrials, "trials must be >= 10000");
    check(!c.bound.epsilons.empty() && !c.bound.confidences.empty() && !c.bound.noises.empty(),
          "bound grid lists must be non-empty");
    for (double e : c.bound.epsilons) check(e >= 0.0, "epsilons must be >= 0");
    for (double p : c.bound.confidences) check(p >= 0.0 && p <= 1.0, "confidences must lie in [0, 1]");
    try {
        TrainConfig probe = c.train;
        if (c.hidden) probe.hidden = *c.hidden;
        probe.validate();
        c.av.validate();
        c.world.validate();
        c.classification_spec().validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

/// Reads a config file. A run manifest is accepted too: its "config" member
/// is the resolved configuration of the run it describes.
inline nlohmann::json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    if (j.is_object() && j.contains("tool") && j.contains("config")) return j.at("config");
    return j;
}

}  // namespace deferlab

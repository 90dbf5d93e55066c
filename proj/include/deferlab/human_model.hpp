#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "deferlab/data.hpp"
#include "deferlab/nn.hpp"

namespace deferlab {

/// How the human performance model uses specific-individual data.
enum class Regime { None, Finetune, SelfTrain };

inline std::string_view to_string(Regime r) {
    switch (r) {
        case Regime::None: return "none";
        case Regime::Finetune: return "finetune";
        case Regime::SelfTrain: return "selftrain";
    }
    return "?";
}

inline Regime parse_regime(std::string_view s) {
    if (s == "none") return Regime::None;
    if (s == "finetune") return Regime::Finetune;
    if (s == "selftrain") return Regime::SelfTrain;
    throw std::invalid_argument("unknown regime: " + std::string(s));
}

enum class HumanModelKind { CorrectnessClassifier, TimeRegressor };

/// Predicts either whether a human answers a point correctly (output 0 =
/// correct, 1 = incorrect) or how long the human takes. Regressors learn a
/// standardized target; `target_mean`/`target_scale` map it back to minutes.
struct HumanModel {
    Network net;
    HumanModelKind kind = HumanModelKind::CorrectnessClassifier;
    double target_mean = 0.0;
    double target_scale = 1.0;

    static constexpr int kCorrect = 0;
    static constexpr int kIncorrect = 1;

    std::vector<double> correctness_probs(std::span<const double> x) const {
        require(HumanModelKind::CorrectnessClassifier);
        return softmax(net.forward(x));
    }
    bool predicts_correct(std::span<const double> x) const {
        require(HumanModelKind::CorrectnessClassifier);
        return argmax(net.forward(x)) == kCorrect;
    }
    double predict_time(std::span<const double> x) const {
        require(HumanModelKind::TimeRegressor);
        return net.forward(x)[0] * target_scale + target_mean;
    }

    void require(HumanModelKind k) const {
        if (kind != k) throw std::logic_error("human model kind mismatch");
    }
};

/// Target 0 iff the human answered correctly.
inline std::vector<Example> correctness_targets(std::span<const HumanAnnotatedPoint> points) {
    std::vector<Example> out;
    out.reserve(points.size());
    for (const auto& p : points)
        out.push_back({p.x, ClassTarget{p.human_correct() ? HumanModel::kCorrect : HumanModel::kIncorrect}, 1.0});
    return out;
}

/// Per-example inverse-frequency weights over single-label class targets.
inline void apply_class_weights(std::vector<Example>& examples, int num_classes) {
    if (examples.empty()) return;
    std::vector<int> labels;
    labels.reserve(examples.size());
    for (const auto& e : examples) labels.push_back(std::get<ClassTarget>(e.target).label);
    const auto w = inverse_frequency_weights(labels, num_classes);
    for (std::size_t i = 0; i < examples.size(); ++i) examples[i].weight *= w[labels[i]];
}

namespace detail {

inline int input_dim_of(std::span<const Example> a) {
    if (a.empty()) throw std::invalid_argument("no training examples");
    return static_cast<int>(a.front().x.size());
}

}  // namespace detail

/// n epochs on `aggregate` from a fresh init, then round(n*lambda) epochs on
/// `specific` at the same learning rate. Zero fine-tune epochs leaves the
/// phase-one network untouched.
inline Network fit_two_phase(std::span<const Example> aggregate, std::span<const Example> specific,
                             int outputs, const TrainConfig& config) {
    config.validate();
    Network net = Network::glorot(config.layer_dims(detail::input_dim_of(aggregate), outputs), config.seed);
    net = train(std::move(net), aggregate, config.sgd(config.epochs)).net;
    const int ft = config.finetune_epochs();
    if (ft > 0 && !specific.empty()) net = train(std::move(net), specific, config.sgd(ft, stream::finetune)).net;
    return net;
}

inline Network fit_single_phase(std::span<const Example> examples, int outputs, const TrainConfig& config) {
    config.validate();
    Network net = Network::glorot(config.layer_dims(detail::input_dim_of(examples), outputs), config.seed);
    return train(std::move(net), examples, config.sgd(config.epochs)).net;
}

// ---------------------------------------------------------------------------
// Correctness classifier regimes

/// No fine-tuning: one phase on aggregate (plus the specific fine-tune split
/// unless `include_specific` is false).
inline HumanModel train_baseline(std::span<const HumanAnnotatedPoint> aggregate,
                                 std::span<const HumanAnnotatedPoint> specific_finetune, const TrainConfig& config,
                                 bool include_specific = true) {
    if (aggregate.empty()) throw std::invalid_argument("train_baseline: aggregate set is empty");
    auto examples = correctness_targets(aggregate);
    if (include_specific) {
        auto extra = correctness_targets(specific_finetune);
        examples.insert(examples.end(), extra.begin(), extra.end());
    }
    return {fit_single_phase(examples, 2, config), HumanModelKind::CorrectnessClassifier};
}

/// Aggregate phase then class-weighted fine-tuning on the specific split.
inline HumanModel train_finetuned(std::span<const HumanAnnotatedPoint> aggregate,
                                  std::span<const HumanAnnotatedPoint> specific_finetune, const TrainConfig& config) {
    if (aggregate.empty() || specific_finetune.empty())
        throw std::invalid_argument("train_finetuned: aggregate and specific sets must be non-empty");
    const auto agg = correctness_targets(aggregate);
    auto spec = correctness_targets(specific_finetune);
    apply_class_weights(spec, 2);
    return {fit_two_phase(agg, spec, 2, config), HumanModelKind::CorrectnessClassifier};
}

/// Indices whose max class probability reaches tau. tau >= 1 selects nothing.
inline std::vector<std::size_t> select_confident(std::span<const std::vector<double>> probs, double tau) {
    std::vector<std::size_t> keep;
    if (tau >= 1.0) return keep;
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (*std::max_element(probs[i].begin(), probs[i].end()) >= tau) keep.push_back(i);
    return keep;
}

struct SelfTrainResult {
    HumanModel model;
    std::vector<std::size_t> pseudo_label_counts;  // one entry per pseudo-labeling round
};

/// Fit on the specific split, then `rounds` times: pseudo-label confident
/// unlabeled points and refit from the same fresh initialization on
/// specific + pseudo-labeled.
inline SelfTrainResult self_train(std::span<const HumanAnnotatedPoint> specific_finetune,
                                  std::span<const LabeledPoint> unlabeled, const TrainConfig& config, int rounds = 1) {
    if (specific_finetune.empty()) throw std::invalid_argument("self_train: specific set is empty");
    if (rounds < 1) throw std::invalid_argument("self_train: rounds must be >= 1");
    const auto base = correctness_targets(specific_finetune);
    SelfTrainResult result{{fit_single_phase(base, 2, config), HumanModelKind::CorrectnessClassifier}, {}};

    std::vector<std::vector<double>> probs(unlabeled.size());
    for (int r = 0; r < rounds; ++r) {
        for (std::size_t i = 0; i < unlabeled.size(); ++i) probs[i] = result.model.correctness_probs(unlabeled[i].x);
        const auto keep = select_confident(probs, config.confidence_threshold);
        auto examples = base;
        for (auto i : keep) examples.push_back({unlabeled[i].x, ClassTarget{argmax(probs[i])}, 1.0});
        result.pseudo_label_counts.push_back(keep.size());
        result.model.net = fit_single_phase(examples, 2, config);
    }
    return result;
}

/// Gives every truth-only point a human answer from the model: correct ->
/// h = s, incorrect -> h = (s + 1) mod K.
inline std::vector<HumanAnnotatedPoint> impute(const HumanModel& model, std::span<const LabeledPoint> unlabeled,
                                               int num_classes) {
    model.require(HumanModelKind::CorrectnessClassifier);
    if (num_classes < 2) throw std::invalid_argument("impute: need K >= 2");
    std::vector<HumanAnnotatedPoint> out;
    out.reserve(unlabeled.size());
    for (const auto& u : unlabeled) {
        const int h = model.predicts_correct(u.x) ? u.y : (u.y + 1) % num_classes;
        out.push_back({u.x, u.y, h, true});
    }
    return out;
}

/// Fraction of points where the model's correctness call matches h == y.
inline double human_model_accuracy(const HumanModel& model, std::span<const HumanAnnotatedPoint> points) {
    if (points.empty()) throw std::invalid_argument("human_model_accuracy: empty set");
    std::size_t hits = 0;
    for (const auto& p : points) hits += model.predicts_correct(p.x) == p.human_correct();
    return static_cast<double>(hits) / static_cast<double>(points.size());
}

// ---------------------------------------------------------------------------
// Time regressor regimes (driving)

struct TimeSample {
    FeatureVector x;
    double minutes = 0.0;
};

namespace detail {

inline std::pair<double, double> standardizer(std::span<const TimeSample> s) {
    double mean = 0.0;
    for (const auto& t : s) mean += t.minutes;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (const auto& t : s) var += (t.minutes - mean) * (t.minutes - mean);
    var /= static_cast<double>(s.size());
    const double scale = var > 0.0 ? std::sqrt(var) : 1.0;
    return {mean, scale};
}

inline std::vector<Example> regression_examples(std::span<const TimeSample> s, double mean, double scale) {
    std::vector<Example> out;
    out.reserve(s.size());
    for (const auto& t : s) out.push_back({t.x, RegressionTarget{(t.minutes - mean) / scale}, 1.0});
    return out;
}

}  // namespace detail

inline HumanModel train_time_baseline(std::span<const TimeSample> aggregate, std::span<const TimeSample> specific,
                                      const TrainConfig& config, bool include_specific = true) {
    std::vector<TimeSample> pool(aggregate.begin(), aggregate.end());
    if (include_specific) pool.insert(pool.end(), specific.begin(), specific.end());
    if (pool.empty()) throw std::invalid_argument("train_time_baseline: no samples");
    const auto [mean, scale] = detail::standardizer(pool);
    return {fit_single_phase(detail::regression_examples(pool, mean, scale), 1, config), HumanModelKind::TimeRegressor,
            mean, scale};
}

/// Same two-phase schedule as train_finetuned; the standardizer comes from
/// the aggregate phase and is kept through fine-tuning.
inline HumanModel train_time_finetuned(std::span<const TimeSample> aggregate, std::span<const TimeSample> specific,
                                       const TrainConfig& config) {
    if (aggregate.empty() || specific.empty())
        throw std::invalid_argument("train_time_finetuned: aggregate and specific sets must be non-empty");
    const auto [mean, scale] = detail::standardizer(aggregate);
    const auto agg = detail::regression_examples(aggregate, mean, scale);
    const auto spec = detail::regression_examples(specific, mean, scale);
    return {fit_two_phase(agg, spec, 1, config), HumanModelKind::TimeRegressor, mean, scale};
}

/// Regression has no confidence score, so every imputed time is kept.
inline HumanModel self_train_time(std::span<const TimeSample> specific, std::span<const FeatureVector> unlabeled,
                                  const TrainConfig& config, int rounds = 1) {
    if (specific.empty()) throw std::invalid_argument("self_train_time: specific set is empty");
    if (rounds < 1) throw std::invalid_argument("self_train_time: rounds must be >= 1");
    const auto [mean, scale] = detail::standardizer(specific);
    const auto base = detail::regression_examples(specific, mean, scale);
    HumanModel model{fit_single_phase(base, 1, config), HumanModelKind::TimeRegressor, mean, scale};
    for (int r = 0; r < rounds; ++r) {
        auto examples = base;
        for (const auto& x : unlabeled) examples.push_back({x, RegressionTarget{model.net.forward(x)[0]}, 1.0});
        model.net = fit_single_phase(examples, 1, config);
    }
    return model;
}

}  // namespace deferlab

#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "deferlab/data.hpp"
#include "deferlab/human_model.hpp"
#include "deferlab/nn.hpp"

namespace deferlab {

/// Joint classifier/rejector: outputs 0..K-1 predict a class, output K defers.
struct RejectorClassifier {
    Network net;
    int num_classes = 0;

    int defer_index() const noexcept { return num_classes; }
};

struct Decision {
    int label = 0;
    bool deferred = false;
};

struct SystemMetrics {
    double system_accuracy = 0.0;
    double deference_rate = 0.0;
    std::optional<double> deferred_accuracy;       // absent when nothing was deferred
    std::optional<double> machine_accuracy_on_kept;  // absent when everything was deferred
    double human_model_accuracy = 0.0;
    std::size_t evaluated = 0;
    std::size_t deferred = 0;
};

/// Points for the joint loss: aggregate + fine-tune split + unlabeled
/// points whose human answers are imputed by `human_model`.
inline std::vector<HumanAnnotatedPoint> rejector_training_set(std::span<const HumanAnnotatedPoint> aggregate,
                                                              std::span<const HumanAnnotatedPoint> finetune,
                                                              std::span<const LabeledPoint> unlabeled,
                                                              const HumanModel& human_model, int num_classes) {
    std::vector<HumanAnnotatedPoint> out(aggregate.begin(), aggregate.end());
    out.insert(out.end(), finetune.begin(), finetune.end());
    auto imputed = impute(human_model, unlabeled, num_classes);
    out.insert(out.end(), std::make_move_iterator(imputed.begin()), std::make_move_iterator(imputed.end()));
    return out;
}

inline RejectorClassifier train_rejector_classifier(std::span<const HumanAnnotatedPoint> points, int num_classes,
                                                    const TrainConfig& config) {
    if (num_classes < 2) throw std::invalid_argument("train_rejector_classifier: need K >= 2");
    if (points.empty()) throw std::invalid_argument("train_rejector_classifier: no training points");
    std::vector<Example> examples;
    examples.reserve(points.size());
    for (const auto& p : points) {
        if (p.y < 0 || p.y >= num_classes || p.h < 0 || p.h >= num_classes)
            throw std::invalid_argument("train_rejector_classifier: point without a valid label/human answer");
        examples.push_back({p.x, DeferTarget{p.y, p.human_correct(), config.deferral_cost}, 1.0});
    }
    return {fit_single_phase(examples, num_classes + 1, config), num_classes};
}

inline Decision system_predict(const RejectorClassifier& rc, std::span<const double> x, int human_label) {
    if (human_label < 0 || human_label >= rc.num_classes)
        throw std::invalid_argument("system_predict: human label out of range");
    const int a = argmax(rc.net.forward(x));
    if (a == rc.defer_index()) return {human_label, true};
    return {a, false};
}

inline SystemMetrics evaluate(const RejectorClassifier& rc, const HumanModel& human_model,
                              std::span<const HumanAnnotatedPoint> test) {
    if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
    std::size_t correct = 0, deferred = 0, deferred_correct = 0, kept_correct = 0, hm_hits = 0;
    for (const auto& p : test) {
        const auto d = system_predict(rc, p.x, p.h);
        const bool ok = d.label == p.y;
        correct += ok;
        if (d.deferred) {
            ++deferred;
            deferred_correct += ok;
        } else {
            kept_correct += ok;
        }
        hm_hits += human_model.predicts_correct(p.x) == p.human_correct();
    }
    const double n = static_cast<double>(test.size());
    SystemMetrics m;
    m.evaluated = test.size();
    m.deferred = deferred;
    m.system_accuracy = static_cast<double>(correct) / n;
    m.deference_rate = static_cast<double>(deferred) / n;
    if (deferred > 0) m.deferred_accuracy = static_cast<double>(deferred_correct) / static_cast<double>(deferred);
    if (deferred < test.size())
        m.machine_accuracy_on_kept = static_cast<double>(kept_correct) / static_cast<double>(test.size() - deferred);
    m.human_model_accuracy = static_cast<double>(hm_hits) / n;
    return m;
}

/// deference_rate * deferred_accuracy + (1 - deference_rate) * machine_accuracy_on_kept.
inline double recomposed_system_accuracy(const SystemMetrics& m) {
    return m.deference_rate * m.deferred_accuracy.value_or(0.0) +
           (1.0 - m.deference_rate) * m.machine_accuracy_on_kept.value_or(0.0);
}

/// Fraction of `points` the rejector hands to the human.
inline double deference_rate(const RejectorClassifier& rc, std::span<const HumanAnnotatedPoint> points) {
    if (points.empty()) return 0.0;
    std::size_t d = 0;
    for (const auto& p : points) d += argmax(rc.net.forward(p.x)) == rc.defer_index();
    return static_cast<double>(d) / static_cast<double>(points.size());
}

}  // namespace deferlab

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deferlab/data.hpp"
#include "deferlab/defer.hpp"
#include "deferlab/driving.hpp"
#include "deferlab/human_model.hpp"
#include "deferlab/parallel.hpp"

namespace deferlab::classification {


/// Synthetic-expert experiment on the Gaussian-blob stand-in dataset.
struct ClassificationSpec {
    int num_classes = 10;
    int dim = 16;
    double spread = 1.0;
    double separation = 6.0;
    int aggregate_size = 2000;  // m
    int specific_size = 500;    // k (split 50/50)
    int unlabeled_size = 5000;  // p
    int annotators = 20;
    double annotator_beta_a = 18.0;
    double annotator_beta_b = 2.0;
    std::vector<int> experts{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<Regime> regimes{Regime::None, Regime::Finetune, Regime::SelfTrain};
    std::vector<std::uint64_t> seeds{0};
    TrainConfig config;
    int self_train_rounds = 1;
    bool baseline_uses_specific = true;
    bool train_rejector = true;
    unsigned workers = 0;

    void validate() const {
        if (num_classes < 2 || dim < 2) throw std::invalid_argument("classification: need K >= 2 and d >= 2");
        if (!(spread > 0.0)) throw std::invalid_argument("classification: spread must be positive");
        if (specific_size < 2 || aggregate_size < 1 || unlabeled_size < 1)
            throw std::invalid_argument("classification: dataset sizes must be positive (specific >= 2)");
        if (annotators < 1) throw std::invalid_argument("classification: need at least one annotator");
        if (!(annotator_beta_a > 0.0 && annotator_beta_b > 0.0))
            throw std::invalid_argument("classification: annotator Beta parameters must be positive");
        for (int k : experts)
            if (k < 0 || k > num_classes) throw std::invalid_argument("classification: expert k out of [0, K]");
        if (seeds.empty() || experts.empty() || regimes.empty())
            throw std::invalid_argument("classification: seeds, experts and regimes must be non-empty");
        if (self_train_rounds < 1) throw std::invalid_argument("classification: self_train_rounds must be >= 1");
        config.validate();
    }
};

/// Simulated crowd: annotator a answers class c correctly with probability
/// accuracy[a][c] ~ Beta(alpha, beta), otherwise picks a wrong class uniformly.
struct AnnotatorPopulation {
    std::vector<std::vector<double>> accuracy;

    static AnnotatorPopulation sample(int annotators, int num_classes, double a, double b, std::uint64_t seed) {
        Rng rng = make_rng(seed, {stream::annotators, 0});
        std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
        AnnotatorPopulation pop;
        for (int i = 0; i < annotators; ++i) {
            auto& row = pop.accuracy.emplace_back();
            for (int c = 0; c < num_classes; ++c) {
                const double x = ga(rng);
                const double y = gb(rng);
                row.push_back(x / (x + y));
            }
        }
        return pop;
    }

    std::vector<HumanAnnotatedPoint> annotate(std::span<const LabeledPoint> points, std::uint64_t seed) const {
        Rng rng = make_rng(seed, {stream::annotators, 1});
        const int K = static_cast<int>(accuracy.front().size());
        std::uniform_int_distribution<int> who(0, static_cast<int>(accuracy.size()) - 1);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        std::uniform_int_distribution<int> wrong(1, K - 1);
        std::vector<HumanAnnotatedPoint> out;
        out.reserve(points.size());
        for (const auto& p : points) {
            const int a = who(rng);
            const bool ok = u01(rng) < accuracy[a][p.y];
            const int w = wrong(rng);
            out.push_back({p.x, p.y, ok ? p.y : (p.y + w) % K, false});
        }
        return out;
    }
};

/// Blob points partitioned into aggregate (crowd-annotated), the expert's
/// specific split and truth-only points. Everything but the expert's answers
/// depends only on `seed`, so experts are compared on the same world.
inline DeferDataset build_dataset(const ClassificationSpec& spec, int expert_k, std::uint64_t seed) {
    const int total = spec.aggregate_size + spec.specific_size + spec.unlabeled_size;
    BlobSpec blobs{spec.num_classes, spec.dim, (total + spec.num_classes - 1) / spec.num_classes, spec.spread,
                   spec.separation, seed};
    auto points = generate_blob_dataset(blobs);
    points.resize(total);
    const std::span<const LabeledPoint> all(points);
    const auto agg_pts = all.subspan(0, spec.aggregate_size);
    const auto spec_pts = all.subspan(spec.aggregate_size, spec.specific_size);
    const auto unl_pts = all.subspan(spec.aggregate_size + spec.specific_size);

    const auto crowd = AnnotatorPopulation::sample(spec.annotators, spec.num_classes, spec.annotator_beta_a,
                                                   spec.annotator_beta_b, seed);
    DeferDataset ds;
    ds.num_classes = spec.num_classes;
    ds.aggregate = crowd.annotate(agg_pts, seed);
    const SyntheticExpert expert{expert_k, spec.num_classes, derive_seed(seed, {stream::expert,
                                                                            static_cast<std::uint64_t>(expert_k)})};
    auto [ft, te] = split_specific(annotate(expert, spec_pts), seed);
    ds.specific_finetune = std::move(ft);
    ds.specific_test = std::move(te);
    ds.unlabeled.assign(unl_pts.begin(), unl_pts.end());
    return ds;
}

inline HumanModel train_human_model(const DeferDataset& ds, Regime regime, const TrainConfig& config,
                                    int self_train_rounds = 1, bool baseline_uses_specific = true) {
    switch (regime) {
        case Regime::None: return train_baseline(ds.aggregate, ds.specific_finetune, config, baseline_uses_specific);
        case Regime::Finetune: return train_finetuned(ds.aggregate, ds.specific_finetune, config);
        case Regime::SelfTrain: return self_train(ds.specific_finetune, ds.unlabeled, config, self_train_rounds).model;
    }
    throw std::invalid_argument("unknown regime");
}

struct CellResult {
    std::uint64_t seed = 0;
    int expert_k = 0;
    Regime regime = Regime::None;
    double alpha = 1.0;
    SystemMetrics metrics;  // system fields stay zero when the rejector is skipped
    bool has_system = false;
    std::optional<HumanModel> human_model;
    std::optional<RejectorClassifier> rejector;
};

inline CellResult run_cell(const ClassificationSpec& spec, const DeferDataset& ds, std::uint64_t seed, int k,
                           Regime regime, bool keep_models = false) {
    TrainConfig cfg = spec.config;
    cfg.seed = derive_seed(seed, {static_cast<std::uint64_t>(k), 200});
    CellResult cell{seed, k, regime, cfg.deferral_cost, {}, false, std::nullopt, std::nullopt};
    const auto hm = train_human_model(ds, regime, cfg, spec.self_train_rounds, spec.baseline_uses_specific);
    if (spec.train_rejector) {
        const auto points = rejector_training_set(ds.aggregate, ds.specific_finetune, ds.unlabeled, hm, ds.num_classes);
        TrainConfig rc_cfg = cfg;
        rc_cfg.seed = derive_seed(cfg.seed, {stream::policy});
        auto rc = train_rejector_classifier(points, ds.num_classes, rc_cfg);
        cell.metrics = evaluate(rc, hm, ds.specific_test);
        cell.has_system = true;
        if (keep_models) cell.rejector = std::move(rc);
    } else {
        cell.metrics.human_model_accuracy = human_model_accuracy(hm, ds.specific_test);
        cell.metrics.evaluated = ds.specific_test.size();
    }
    if (keep_models) cell.human_model = hm;
    return cell;
}

/// Cells ordered seed-major, then expert, then regime.
inline std::vector<CellResult> run_classification_experiment(const ClassificationSpec& spec,
                                                             bool keep_first_seed_models = false) {
    spec.validate();
    struct Job {
        std::size_t seed_index;
        int k;
        Regime regime;
    };
    std::vector<Job> jobs;
    for (std::size_t s = 0; s < spec.seeds.size(); ++s)
        for (int k : spec.experts)
            for (auto r : spec.regimes) jobs.push_back({s, k, r});

    std::vector<CellResult> cells(jobs.size());
    parallel_for(
        jobs.size(),
        [&](std::size_t j) {
            const auto& job = jobs[j];
            const auto seed = spec.seeds[job.seed_index];
            const auto ds = build_dataset(spec, job.k, seed);
            cells[j] = run_cell(spec, ds, seed, job.k, job.regime, keep_first_seed_models && job.seed_index == 0);
        },
        spec.workers);
    return cells;
}

inline void write_metrics_csv(std::ostream& out, std::span<const CellResult> cells) {
    out << "run_id,regime,expert_k,alpha,seed,system_accuracy,deference_rate,deferred_accuracy,human_model_accuracy\n";
    auto num = [](double v) { return deferlab::detail::format_double(v); };
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        out << i << ',' << to_string(c.regime) << ',' << c.expert_k << ',' << num(c.alpha) << ',' << c.seed
            << ',';
        if (c.has_system) {
            out << num(c.metrics.system_accuracy) << ',' << num(c.metrics.deference_rate) << ',';
            if (c.metrics.deferred_accuracy) out << num(*c.metrics.deferred_accuracy);
        } else {
            out << ",,";
        }
        out << ',' << num(c.metrics.human_model_accuracy) << '\n';
    }
}

/// Pearson correlation, across (seed, expert) pairs, between the change in
/// human-model accuracy and the change in system accuracy when moving from
/// `from` to `to`. Empty when fewer than three pairs or zero variance.
inline std::optional<double> improvement_correlation(std::span<const CellResult> cells, Regime from, Regime to) {
    std::vector<double> dh, ds;
    for (const auto& a : cells) {
        if (a.regime != from || !a.has_system) continue;
        for (const auto& b : cells)
            if (b.regime == to && b.seed == a.seed && b.expert_k == a.expert_k && b.has_system) {
                dh.push_back(b.metrics.human_model_accuracy - a.metrics.human_model_accuracy);
                ds.push_back(b.metrics.system_accuracy - a.metrics.system_accuracy);
            }
    }
    if (dh.size() < 3) return std::nullopt;
    const double mh = stats::mean(dh), msys = stats::mean(ds);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < dh.size(); ++i) {
        sxy += (dh[i] - mh) * (ds[i] - msys);
        sxx += (dh[i] - mh) * (dh[i] - mh);
        syy += (ds[i] - msys) * (ds[i] - msys);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace deferlab::classification

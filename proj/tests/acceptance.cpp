// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "deferlab.hpp"

using namespace deferlab;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
    failures += !pass;
    std::printf("%s criterion %d: %s | %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
    std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void guarded(int id, const std::string& what, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(id, false, what, std::string("exception: ") + e.what());
    }
}

// 1 and 2 share one run of the paper-default driving experiment.
void driving_criteria() {
    driving::ExperimentSpec spec;  // n=10, k=256, l=1000, lambda=2, default constants
    spec.repetitions = 200;
    spec.regimes = {Regime::None, Regime::Finetune};
    spec.seed = 2024;
    const auto t0 = Clock::now();
    const auto rep = driving::run_driving_experiment(spec);
    const double secs = seconds_since(t0);

    const auto& none = *rep.summary("none");
    const auto& ft = *rep.summary("finetune");
    const auto& known = *rep.summary("known_mean");
    const auto& ideal = *rep.summary("ideal");
    const auto& tt = *rep.finetune_vs_none;
    const double gap = none.mean_duration - ft.mean_duration;
    const double room = none.mean_duration - known.mean_duration;
    const bool ok1 = ft.mean_duration < none.mean_duration && tt.p_value < 0.01 && gap >= 0.1 * room && secs <= 900;
    report(1, ok1, "driving: finetune beats none, p < 0.01, gap >= 10% of (none - known_mean), <= 15 min",
           fmt("none %.4f finetune %.4f known_mean %.4f ideal %.4f min; gap %.4f = %.1f%% of %.4f; p = %.3g; %.0f s",
               none.mean_duration, ft.mean_duration, known.mean_duration, ideal.mean_duration, gap,
               100.0 * gap / room, room, tt.p_value, secs));

    // Slack: 99% half-width of the mean paired (none - known_mean) difference.
    std::vector<double> diff(spec.repetitions);
    for (int r = 0; r < spec.repetitions; ++r) diff[r] = none.repetition_means[r] - known.repetition_means[r];
    const double slack = stats::kZ99 * std::sqrt(stats::variance(diff) / spec.repetitions);
    bool per_rep_ideal = true;
    for (int r = 0; r < spec.repetitions; ++r)
        per_rep_ideal = per_rep_ideal && ideal.repetition_means[r] <= known.repetition_means[r] &&
                        ideal.repetition_means[r] <= none.repetition_means[r] &&
                        ideal.repetition_means[r] <= ft.repetition_means[r];
    const bool ok2 = ideal.mean_duration <= known.mean_duration &&
                     known.mean_duration <= none.mean_duration + slack && per_rep_ideal && rep.ideal_violations == 0;
    report(2, ok2, "oracle ordering: ideal <= known_mean <= none + CI slack; ideal pointwise <= every policy",
           fmt("ideal %.4f <= known_mean %.4f <= none %.4f + %.4f; pointwise violations %zu", ideal.mean_duration,
               known.mean_duration, none.mean_duration, slack, rep.ideal_violations));
}

void expert_criterion() {
    const int n = 100000;
    Rng rng(31);
    std::uniform_int_distribution<int> cls(0, 9);
    std::vector<LabeledPoint> pts(n);
    for (auto& p : pts) p.y = cls(rng);
    bool ok = true;
    std::ostringstream detail;
    double worst = 0.0;
    for (int k = 0; k <= 10; ++k) {
        const auto ann = annotate({k, 10, derive_seed(31, {static_cast<std::uint64_t>(k)})}, pts);
        std::size_t hits = 0;
        for (const auto& a : ann) hits += a.human_correct();
        const double acc = static_cast<double>(hits) / n;
        const double p = 0.1 + 0.09 * k;
        const double sigma = std::sqrt(p * (1 - p) / n);
        const double z = sigma > 0 ? std::abs(acc - p) / sigma : (acc == p ? 0.0 : INFINITY);
        worst = std::max(worst, z);
        ok = ok && z <= 3.0;
        if (k == 5) detail << "k=5 accuracy " << acc << "; ";
    }
    detail << "worst |z| = " << worst;
    report(3, ok, "synthetic expert accuracy within 3 binomial sigma of 0.1 + 0.09k, k = 0..10", detail.str());
}

// 4 and 5 share one sweep over seeds and experts.
void human_model_criteria() {
    classification::ClassificationSpec spec;
    spec.config.hidden = {64, 64};
    spec.regimes = {Regime::None, Regime::Finetune};
    spec.train_rejector = false;
    spec.seeds.clear();
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) spec.seeds.push_back(1000 + s);
    const auto t0 = Clock::now();
    const auto cells = classification::run_classification_experiment(spec);
    const double secs = seconds_since(t0);

    std::array<double, 11> none{}, ft{};
    for (const auto& c : cells)
        (c.regime == Regime::None ? none : ft)[c.expert_k] += c.metrics.human_model_accuracy / seeds;

    bool ok4 = true;
    std::ostringstream d4;
    for (int k : {0, 1, 2}) {
        ok4 = ok4 && ft[k] - none[k] >= 0.05;
        d4 << fmt("k=%d none %.3f finetune %.3f; ", k, none[k], ft[k]);
    }
    ok4 = ok4 && std::abs(ft[10] - none[10]) <= 0.02;
    d4 << fmt("k=10 none %.3f finetune %.3f; %d seeds, %.0f s", none[10], ft[10], seeds, secs);
    report(4, ok4, "fine-tuning lifts human-model accuracy >= 0.05 for k <= 2, within 0.02 at k = 10", d4.str());

    bool ok5 = true;
    double margin = INFINITY;
    for (int k = 0; k <= 10; ++k) {
        const double ceiling = 0.9 + 0.01 * k + 0.02;
        ok5 = ok5 && ft[k] <= ceiling;
        margin = std::min(margin, ceiling - ft[k]);
    }
    report(5, ok5, "fine-tuned human-model accuracy (seed mean) <= 0.9 + 0.01k + 0.02 for every k",
           fmt("smallest margin to the ceiling %.4f", margin));
}

void bound_criterion() {
    const BoundGrid grid;
    const auto t0 = Clock::now();
    const auto rows = verify_bound_grid(grid, 7);
    const double secs = seconds_since(t0);
    std::size_t bad = 0;
    double worst = -INFINITY;
    for (const auto& r : rows) {
        bad += !r.pass;
        worst = std::max(worst, r.empirical.rate - r.empirical.ci_halfwidth - r.bound);
    }
    report(6, bad == 0 && rows.size() == 648 && secs <= 120,
           "empirical rate - 99% CI half-width <= min(1, 2 eps^2 / gap^2) on the full grid, 1e6 trials, <= 2 min",
           fmt("%zu cells, %zu violations, max (rate - hw - bound) = %.4g, %.1f s", rows.size(), bad, worst, secs));
}

void grad_criterion() {
    std::ostringstream d;
    bool ok = true;
    for (auto kind : {LossKind::WeightedCrossEntropy, LossKind::Defer, LossKind::SquaredError}) {
        const double err = random_grad_check(kind, 100, 77);
        ok = ok && err < 1e-4;
        d << to_string(kind) << " " << err << "; ";
    }
    report(7, ok, "grad_check max relative error < 1e-4 over 100 random cases per loss", d.str());
}

void loss_identity_criterion() {
    Rng rng(5);
    std::normal_distribution<double> n01(0.0, 3.0);
    std::uniform_real_distribution<double> alpha(0.0, 4.0);
    std::size_t mismatches = 0;
    for (int t = 0; t < 10000; ++t) {
        const int K = 2 + t % 11;
        std::vector<double> z(K + 1);
        for (double& v : z) v = n01(rng);
        const int y = t % K;
        const double ce = weighted_cross_entropy(softmax(z), y, 1.0);
        mismatches += defer_loss(z, y, false, alpha(rng)) != ce;
        mismatches += defer_loss(z, y, true, 0.0) != ce;
    }
    const std::vector<double> u(11, 0.0);
    const double wrong = defer_loss(u, 0, false, 1.0);
    const double right = defer_loss(u, 0, true, 1.0);
    const bool ok = mismatches == 0 && std::abs(wrong - std::log(11.0)) <= 1e-12 &&
                    std::abs(right - 2.0 * std::log(11.0)) <= 1e-12;
    report(8, ok, "defer_loss == cross-entropy exactly when inactive; ln 11 and 2 ln 11 to 1e-12",
           fmt("%zu inexact cases of 20000; |ln 11 err| %.2g, |2 ln 11 err| %.2g", mismatches,
               std::abs(wrong - std::log(11.0)), std::abs(right - 2.0 * std::log(11.0))));
}

void metrics_criterion() {
    Rng rng(9);
    std::uniform_int_distribution<int> size(1, 200), cls(0, 9);
    std::normal_distribution<double> n01(0.0, 1.0);
    const HumanModel hm{Network({4, 2}), HumanModelKind::CorrectnessClassifier};
    double worst = 0.0;
    std::size_t count_mismatch = 0;
    for (int t = 0; t < 1000; ++t) {
        RejectorClassifier rc{Network::glorot({4, 8, 11}, t), 10};
        rc.net.biases(1)[10] = 2.0 * n01(rng);
        std::vector<HumanAnnotatedPoint> pts(size(rng));
        for (auto& p : pts) p = {{n01(rng), n01(rng), n01(rng), n01(rng)}, cls(rng), cls(rng), false};
        const auto m = evaluate(rc, hm, pts);
        worst = std::max(worst, std::abs(recomposed_system_accuracy(m) - m.system_accuracy));
        const double n = static_cast<double>(pts.size());
        const long total = std::lround(m.system_accuracy * n);
        const long parts = std::lround(m.deferred_accuracy.value_or(0) * m.deferred) +
                           std::lround(m.machine_accuracy_on_kept.value_or(0) * (n - m.deferred));
        count_mismatch += total != parts;
    }
    report(9, count_mismatch == 0 && worst <= 1e-12,
           "system_accuracy = dr * deferred_acc + (1 - dr) * machine_acc_on_kept on 1000 random sets",
           fmt("count identity broken in %zu sets; max floating residual %.3g", count_mismatch, worst));
}

void determinism_criterion() {
    namespace fs = std::filesystem;
    std::ostringstream d;
    bool ok = true;

    driving::ExperimentSpec ds;
    ds.repetitions = 2;
    ds.world = {4, 64, 200};
    ds.seed = 7;
    std::ostringstream a, b;
    driving::write_driving_csv(a, driving::run_driving_experiment(ds));
    driving::write_driving_csv(b, driving::run_driving_experiment(ds));
    ok = ok && a.str() == b.str();
    d << "driving csv " << (a.str() == b.str() ? "identical" : "DIFFERS") << "; ";

    classification::ClassificationSpec cs;
    cs.experts = {0, 5, 10};
    cs.aggregate_size = 500;
    cs.specific_size = 200;
    cs.unlabeled_size = 500;
    cs.seeds = {3};
    std::ostringstream c1, c2;
    const auto cells = classification::run_classification_experiment(cs, true);
    classification::write_metrics_csv(c1, cells);
    classification::write_metrics_csv(c2, classification::run_classification_experiment(cs));
    ok = ok && c1.str() == c2.str();
    d << "classification csv " << (c1.str() == c2.str() ? "identical" : "DIFFERS") << "; ";

    const auto dir = fs::temp_directory_path() / "deferlab_acceptance";
    fs::create_directories(dir);
    const auto path = (dir / "rejector.json").string();
    const auto& net = cells.front().rejector->net;
    save_model(path, net);
    const auto back = load_model(path);
    Rng rng(1);
    std::normal_distribution<double> n01(0.0, 2.0);
    std::size_t differing = 0;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x(net.input_dim());
        for (double& v : x) v = n01(rng);
        const auto l1 = net.forward(x), l2 = back.forward(x);
        differing += std::memcmp(l1.data(), l2.data(), l1.size() * sizeof(double)) != 0;
    }
    ok = ok && differing == 0;
    d << "model reload: " << differing << "/100 inputs with differing logits; ";

    auto pts = annotate({4, 10, 2}, generate_blob_dataset({10, 16, 30, 1.0, 6.0, 4}));
    for (std::size_t i = 0; i < pts.size(); i += 3) pts[i].imputed = true;
    const auto csv = (dir / "annotations.csv").string();
    save_annotations(csv, pts, true);
    const auto loaded = load_annotations(csv, 10);
    bool same = loaded.size() == pts.size();
    for (std::size_t i = 0; same && i < pts.size(); ++i)
        same = loaded[i].x == pts[i].x && loaded[i].y == pts[i].y && loaded[i].h == pts[i].h &&
               loaded[i].imputed == pts[i].imputed;
    ok = ok && same;
    d << "annotation export round-trip " << (same ? "lossless" : "LOSSY");
    report(10, ok, "identical (config, seed) gives byte-identical CSVs; save/load reproduces logits bit-identically",
           d.str());
}

}  // namespace

int main() {
    std::printf("deferlab acceptance suite (%s)\n", DEFERLAB_GIT_DESCRIBE);
    guarded(1, "driving headline", driving_criteria);
    guarded(3, "synthetic expert accuracy", expert_criterion);
    guarded(4, "human-model fine-tuning effect", human_model_criteria);
    guarded(6, "calibration bound", bound_criterion);
    guarded(7, "gradient correctness", grad_criterion);
    guarded(8, "loss identities", loss_identity_criterion);
    guarded(9, "metrics decomposition", metrics_criterion);
    guarded(10, "determinism and persistence", determinism_criterion);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}

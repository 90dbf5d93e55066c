#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deferlab/calib.hpp"
#include "deferlab/classification.hpp"
#include "deferlab/config.hpp"
#include "deferlab/driving.hpp"
#include "deferlab/model_io.hpp"

#ifndef DEFERLAB_GIT_DESCRIBE
#define DEFERLAB_GIT_DESCRIBE "unknown"
#endif

namespace deferlab {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

/// --out flag, then the config's output_dir, then $DEFERLAB_OUT, then ./deferlab_out.
inline fs::path resolve_output_dir(const RunConfig& cfg, const std::optional<std::string>& flag) {
    if (flag && !flag->empty()) return *flag;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* env = std::getenv("DEFERLAB_OUT"); env && *env) return env;
    return "deferlab_out";
}

struct RunArtifacts {
    fs::path out_dir;
    std::vector<std::string> files;  // relative to out_dir

    fs::path add(const std::string& rel) {
        files.push_back(rel);
        auto p = out_dir / rel;
        fs::create_directories(p.parent_path());
        return p;
    }
};

inline std::ofstream open_out(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

inline void write_manifest(RunArtifacts& art, const std::string& command, const RunConfig& cfg) {
    nlohmann::json m;
    m["tool"] = "deferlab";
    m["version"] = kVersion;
    m["git_describe"] = DEFERLAB_GIT_DESCRIBE;
    m["command"] = command;
    m["config"] = cfg.resolved;
    m["artifacts"] = art.files;
    auto out = open_out(art.out_dir / "manifest.json");
    out << m.dump(1) << '\n';
}

// ---------------------------------------------------------------------------

inline void write_bound_csv(std::ostream& out, std::span<const BoundRow> rows) {
    using detail::format_double;
    out << "p_h,p_m,epsilon,noise_kind,bound,empirical,ci_halfwidth,pass\n";
    for (const auto& r : rows)
        out << format_double(r.scenario.p_human) << ',' << format_double(r.scenario.p_machine) << ','
            << format_double(r.scenario.epsilon) << ',' << to_string(r.scenario.noise) << ','
            << format_double(r.bound) << ',' << format_double(r.empirical.rate) << ','
            << format_double(r.empirical.ci_halfwidth) << ',' << (r.pass ? "pass" : "fail") << '\n';
}

/// Returns the number of failing cells.
inline std::size_t run_bound(const RunConfig& cfg, RunArtifacts& art, std::ostream& log) {
    const auto rows = verify_bound_grid(cfg.bound, cfg.seed);
    {
        auto out = open_out(art.add("bound_table.csv"));
        write_bound_csv(out, rows);
    }
    std::size_t failures = 0;
    log << std::left << std::setw(6) << "p_H" << std::setw(6) << "p_M" << std::setw(7) << "eps" << std::setw(10)
        << "noise" << std::setw(12) << "bound" << std::setw(12) << "empirical" << std::setw(12) << "ci_half"
        << "result\n";
    for (const auto& r : rows) {
        failures += !r.pass;
        log << std::setw(6) << r.scenario.p_human << std::setw(6) << r.scenario.p_machine << std::setw(7)
            << r.scenario.epsilon << std::setw(10) << to_string(r.scenario.noise) << std::setw(12) << r.bound
            << std::setw(12) << r.empirical.rate << std::setw(12) << r.empirical.ci_halfwidth
            << (r.pass ? "pass" : "FAIL") << '\n';
    }
    log << rows.size() - failures << "/" << rows.size() << " cells within the bound\n";
    return failures;
}

inline void run_driving(const RunConfig& cfg, RunArtifacts& art, std::ostream& log) {
    const auto spec = cfg.driving_spec();
    const auto report = driving::run_driving_experiment(spec);
    {
        auto out = open_out(art.add("driving_results.csv"));
        driving::write_driving_csv(out, report);
    }
    for (const auto& s : report.summaries)
        log << std::left << std::setw(12) << s.regime << " mean trip " << s.mean_duration << " min\n";
    if (report.finetune_vs_none)
        log << "finetune - none: " << report.finetune_vs_none->mean_difference
            << " min, paired t-test p = " << report.finetune_vs_none->p_value << '\n';

    if (cfg.save_models) {
        // Models of repetition 0, target driver 0, retrained with the experiment's seeds.
        const std::uint64_t rep_seed = derive_seed(spec.seed, {0});
        const auto ds = driving::partition(driving::generate_world(spec.world, spec.params, rep_seed), 0);
        TrainConfig tc = spec.config;
        tc.seed = derive_seed(rep_seed, {0, 100});
        for (auto regime : spec.regimes) {
            const auto policy = driving::train_driving_policy(ds, regime, tc, spec.params, spec.policy);
            const std::string stem = "models/driving_" + std::string(to_string(regime));
            save_json(art.add(stem + "_time_model.json").string(), human_model_to_json(policy.time_model));
            save_model(art.add(stem + "_policy.json").string(), policy.policy);
        }
    }
}

inline void run_classification(const RunConfig& cfg, RunArtifacts& art, std::ostream& log) {
    const auto spec = cfg.classification_spec();
    const auto cells = classification::run_classification_experiment(spec, cfg.save_models);
    {
        auto out = open_out(art.add("classification_metrics.csv"));
        classification::write_metrics_csv(out, cells);
    }
    for (const auto& c : cells) {
        if (!c.human_model) continue;
        const std::string stem =
            "models/cls_k" + std::to_string(c.expert_k) + "_" + std::string(to_string(c.regime));
        save_json(art.add(stem + "_human_model.json").string(), human_model_to_json(*c.human_model));
        if (c.rejector) save_model(art.add(stem + "_rejector.json").string(), c.rejector->net);
    }
    log << cells.size() << " cells written\n";
    if (auto r = classification::improvement_correlation(cells, Regime::None, Regime::Finetune))
        log << "corr(delta human-model acc, delta system acc), none -> finetune: " << *r << '\n';
}

/// Writes the synthetic driving world: one row per trip plus driver parameters.
inline void run_gen_driving(const RunConfig& cfg, RunArtifacts& art, std::ostream& log) {
    using detail::format_double;
    const auto world = driving::generate_world(cfg.world, cfg.av, cfg.seed);
    const auto ds = driving::partition(world, cfg.target_driver);
    for (const auto& w : ds.warnings) log << "warning: " << w << '\n';
    {
        auto out = open_out(art.add("drivers.csv"));
        out << "driver_index,mu,mu_r,mu_d\n";
        for (std::size_t j = 0; j < world.drivers.size(); ++j)
            out << j << ',' << format_double(world.drivers[j].mu) << ',' << format_double(world.drivers[j].mu_r)
                << ',' << format_double(world.drivers[j].mu_d) << '\n';
    }
    auto out = open_out(art.add("driving_dataset.csv"));
    out << "role,driver_index,rain,dark,human_time\n";
    auto emit = [&](const char* role, int driver, const driving::Trip& t) {
        out << role << ',' << driver << ',' << format_double(t.rain) << ',' << format_double(t.dark) << ',';
        if (t.human_time) out << format_double(*t.human_time);
        out << '\n';
    };
    for (std::size_t j = 0; j < world.drivers.size(); ++j)
        if (static_cast<int>(j) != cfg.target_driver)
            for (const auto& t : world.trips[j]) emit("aggregate", static_cast<int>(j), t);
    for (const auto& t : ds.finetune) emit("finetune", cfg.target_driver, t);
    for (const auto& t : ds.test) emit("test", cfg.target_driver, t);
    for (const auto& t : ds.unlabeled) emit("unlabeled", -1, t);
    log << "aggregate " << ds.aggregate.size() << ", finetune " << ds.finetune.size() << ", test "
        << ds.test.size() << ", unlabeled " << ds.unlabeled.size() << '\n';
}

/// Runs `command` ("run", "run-driving", "run-classification", "bound",
/// "gen-driving") and writes its artifacts plus manifest.json. Returns the
/// process exit code.
inline int execute(const std::string& command, const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    RunArtifacts art{out_dir, {}};
    fs::create_directories(out_dir);
    int code = 0;
    if (command == "gen-driving") {
        run_gen_driving(cfg, art, log);
    } else {
        switch (cfg.experiment) {
            case Experiment::Driving: run_driving(cfg, art, log); break;
            case Experiment::Classification: run_classification(cfg, art, log); break;
            case Experiment::Bound: code = run_bound(cfg, art, log) == 0 ? 0 : 1; break;
        }
    }
    write_manifest(art, command, cfg);
    log << "artifacts in " << out_dir.string() << '\n';
    return code;
}

}  // namespace deferlab

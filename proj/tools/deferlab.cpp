#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deferlab/config.hpp"
#include "deferlab/gradcheck.hpp"
#include "deferlab/runner.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> repetitions;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file (or a previous run's manifest.json)");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--out", f.out, "output directory (default: $DEFERLAB_OUT or ./deferlab_out)");
    cmd->add_option("--repetitions", f.repetitions, "driving repetitions");
    cmd->add_option("--set", f.sets, "override a config key, key=value (repeatable)");
}

deferlab::RunConfig resolve(const CommonFlags& f, std::optional<std::string> experiment) {
    nlohmann::json file;
    if (!f.config_path.empty()) file = deferlab::read_config_file(f.config_path);
    std::vector<std::pair<std::string, nlohmann::json>> overrides;
    if (experiment) overrides.emplace_back("experiment", *experiment);
    if (f.seed) overrides.emplace_back("seed", *f.seed);
    if (f.repetitions) overrides.emplace_back("repetitions", *f.repetitions);
    for (const auto& s : f.sets) overrides.push_back(deferlab::parse_override(s));
    return deferlab::parse_run_config(deferlab::merge_config(file, overrides));
}

int grad_check_command(const deferlab::RunConfig& cfg, int cases) {
    using deferlab::LossKind;
    bool ok = true;
    for (auto kind : {LossKind::WeightedCrossEntropy, LossKind::Defer, LossKind::SquaredError}) {
        const double err = deferlab::random_grad_check(kind, cases, cfg.seed);
        const bool pass = err < 1e-4;
        ok = ok && pass;
        std::cout << deferlab::to_string(kind) << ": max relative error " << err << " over " << cases << " cases "
                  << (pass ? "pass" : "FAIL") << '\n';
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deferlab: learning-to-defer experiments with human performance models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(deferlab::kVersion) + " (" + DEFERLAB_GIT_DESCRIBE + ")");

    CommonFlags flags;
    std::string experiment;
    int cases = 100;

    auto* run = app.add_subcommand("run", "run the experiment named by --experiment or the config");
    run->add_option("--experiment", experiment, "driving | classification | bound");
    auto* gen = app.add_subcommand("gen-driving", "write a synthetic driving world to CSV");
    auto* rd = app.add_subcommand("run-driving", "driving experiment");
    auto* rc = app.add_subcommand("run-classification", "synthetic-expert classification experiment");
    auto* bd = app.add_subcommand("bound", "verify the calibration-noise misclassification bound");
    auto* gc = app.add_subcommand("grad-check", "finite-difference check of every loss gradient");
    gc->add_option("--cases", cases, "random cases per loss")->check(CLI::PositiveNumber);
    for (auto* c : {run, gen, rd, rc, bd, gc}) add_common(c, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    std::optional<std::string> exp;
    if (name == "run" && !experiment.empty()) exp = experiment;
    if (name == "run-driving") exp = "driving";
    if (name == "run-classification") exp = "classification";
    if (name == "bound") exp = "bound";

    deferlab::RunConfig cfg;
    try {
        cfg = resolve(flags, exp);
    } catch (const deferlab::ConfigError& e) {
        std::cerr << "deferlab: invalid config: " << e.what() << '\n';
        return 2;
    }

    try {
        if (name == "grad-check") return grad_check_command(cfg, cases);
        const auto out_dir = deferlab::resolve_output_dir(cfg, flags.out);
        return deferlab::execute(name, cfg, out_dir, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "deferlab: " << e.what() << '\n';
        return 1;
    }
}

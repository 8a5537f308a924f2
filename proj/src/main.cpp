#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mimo/study.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
    bool verbose = false;
};

// Every subcommand carries the same base flags. The presence marker for
// --seed is a callback rather than an Option pointer because one CommonFlags
// instance serves all subcommands and only the parsed one may fire it.
void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("-c,--config", flags.config_path, "Experiment config (JSON)")
        ->required();
    cmd->add_option("-o,--output-dir", flags.output_dir,
                    "Override the config's output_dir");
    cmd->add_option("-s,--seed", flags.seed, "Rederive all seeds from this master seed")
        ->each([&flags](const std::string&) { flags.seed_given = true; });
    cmd->add_flag("-v,--verbose", flags.verbose, "Progress notes on stderr");
}

mimo::StudyConfig load_config(const CommonFlags& flags) {
    mimo::StudyConfig config = mimo::load_study_config(flags.config_path);
    if (!flags.output_dir.empty()) config.output_dir = flags.output_dir;
    if (const char* root = std::getenv("MIMO_OUTPUT_ROOT");
        root != nullptr && *root != '\0' && config.output_dir.is_relative()) {
        config.output_dir = fs::path(root) / config.output_dir;
    }
    if (flags.seed_given) mimo::apply_seed_override(config, flags.seed);
    config.verbose = flags.verbose;
    mimo::set_workers(config.workers);
    return config;
}

void print_outcome(const std::string& command, const mimo::CommandOutcome& outcome) {
    std::cout << command << (outcome.skipped ? ": up to date" : ": done") << "\n";
    for (const fs::path& file : outcome.files) {
        std::cout << "  " << file.generic_string() << "\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subnetwork-ensemble training and analysis"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string report;
    std::string checkpoint;
    std::string axis;
    std::vector<double> values;
    std::size_t sweep_replicates = 3;
    std::vector<std::size_t> m_list;
    std::size_t bv_replicates = 20;
    std::size_t resolution = 0;
    double margin = 0.0;

    CLI::App* cmd_train = app.add_subcommand("train", "Train a network and checkpoint it");
    add_common(cmd_train, flags);

    CLI::App* cmd_analyze =
        app.add_subcommand("analyze", "Report on a trained checkpoint");
    add_common(cmd_analyze, flags);
    cmd_analyze
        ->add_option("report", report,
                     "One of: diversity, invariance, separation, metrics, sparsity")
        ->required();
    cmd_analyze->add_option("--checkpoint", checkpoint,
                            "Checkpoint file (default: <output_dir>/checkpoint.bin)");

    CLI::App* cmd_sweep =
        app.add_subcommand("sweep", "Train and evaluate along one config axis");
    add_common(cmd_sweep, flags);
    cmd_sweep
        ->add_option("--axis", axis, "One of: M, rho, batch_repetitions, l1, l2")
        ->required();
    cmd_sweep->add_option("--values", values, "Axis values")
        ->required()
        ->delimiter(',');
    cmd_sweep->add_option("--replicates", sweep_replicates, "Training runs per value");

    CLI::App* cmd_bv = app.add_subcommand(
        "bias-variance", "Decompose regression error over resampled training sets");
    add_common(cmd_bv, flags);
    cmd_bv->add_option("--m-list", m_list, "Subnetwork counts to compare")
        ->required()
        ->delimiter(',');
    cmd_bv->add_option("--replicates", bv_replicates, "Resampled training sets per M");

    CLI::App* cmd_landscape = app.add_subcommand(
        "landscape", "Weight-plane section and trajectory projection");
    add_common(cmd_landscape, flags);
    cmd_landscape->add_option("--checkpoint", checkpoint,
                              "Checkpoint file (default: <output_dir>/checkpoint.bin)");
    CLI::Option* resolution_option = cmd_landscape->add_option(
        "--resolution", resolution, "Grid points per plane axis");
    CLI::Option* margin_option = cmd_landscape->add_option(
        "--margin", margin, "Bounding-box expansion fraction");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const mimo::StudyConfig config = load_config(flags);
        const fs::path checkpoint_path =
            checkpoint.empty() ? config.output_dir / "checkpoint.bin"
                               : fs::path(checkpoint);
        mimo::CommandOutcome outcome;
        std::string name;
        if (cmd_train->parsed()) {
            name = "train";
            outcome = mimo::run_train(config);
        } else if (cmd_analyze->parsed()) {
            name = "analyze " + report;
            outcome = mimo::run_analyze(config, report, checkpoint_path);
        } else if (cmd_sweep->parsed()) {
            name = "sweep";
            outcome = mimo::run_sweep(config, axis, values, sweep_replicates);
        } else if (cmd_bv->parsed()) {
            name = "bias-variance";
            outcome = mimo::run_bias_variance(config, m_list, bv_replicates);
        } else {
            name = "landscape";
            const std::size_t r = resolution_option->count() > 0
                                      ? resolution
                                      : config.analysis.landscape_resolution;
            const double m = margin_option->count() > 0
                                 ? margin
                                 : config.analysis.landscape_margin;
            outcome = mimo::run_landscape(config, checkpoint_path, r, m);
        }
        print_outcome(name, outcome);
        return 0;
    } catch (const mimo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mimo::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const mimo::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

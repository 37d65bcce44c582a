#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "loft/config.hpp"
#include "loft/harness.hpp"

namespace {

// Output dir precedence: --out flag, LOFT_LAB_OUT env var, config value.
std::string resolve_outdir(const std::string& flag, const std::string& from_config) {
    if (!flag.empty()) {
        return flag;
    }
    if (const char* env = std::getenv("LOFT_LAB_OUT"); env != nullptr && *env != '\0') {
        return env;
    }
    return from_config;
}

int run_pipeline(const std::string& config_path, bool theory_mode, std::uint64_t seed,
                 bool seed_given, const std::string& out_flag) {
    loft::ExperimentConfig cfg = loft::load_config(config_path);
    if (seed_given) {
        cfg.master_seed = seed;
        cfg.schedule.master_seed = seed;
        cfg.theory.seed = seed;
    }
    if (theory_mode && cfg.mode != loft::RunMode::theory) {
        throw loft::ConfigError("'loft-lab theory' requires a config with mode = theory");
    }
    if (!theory_mode && cfg.mode != loft::RunMode::system) {
        throw loft::ConfigError("'loft-lab run' requires a config with mode = system");
    }
    loft::ResultBundle bundle = theory_mode ? loft::run_theory_suite(cfg)
                                            : loft::run_ticket_pipeline(cfg);
    bundle.config_text = loft::read_text_file(config_path);
    const std::string outdir = resolve_outdir(out_flag, cfg.output_dir);
    const loft::Manifest manifest = loft::emit_outputs(bundle, outdir);
    std::cout << "wrote " << manifest.entries.size() << " artifact(s) to " << outdir
              << " (config " << manifest.config_hash << ", seed " << manifest.master_seed
              << ")\n";
    if (!bundle.all_cells_ok) {
        std::cerr << "some cells failed; see the status column in results.csv\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"loft-lab: filter-wise partitioned pretraining experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string outdir;
    std::uint64_t seed = 0;

    CLI::App* run = app.add_subcommand("run", "ticket pipeline (system mode config)");
    run->add_option("config", config_path, "config file")->required();
    CLI::Option* run_seed = run->add_option("--seed", seed, "master seed override");
    run->add_option("--out", outdir, "output directory override");

    CLI::App* theory = app.add_subcommand("theory", "trajectory suite (theory mode config)");
    theory->add_option("config", config_path, "config file")->required();
    CLI::Option* theory_seed = theory->add_option("--seed", seed, "master seed override");
    theory->add_option("--out", outdir, "output directory override");

    CLI::App* check = app.add_subcommand("check", "run the invariant/oracle battery");

    std::string report_dir;
    CLI::App* report = app.add_subcommand("report", "summary tables from a previous run");
    report->add_option("outdir", report_dir, "output directory of a previous run")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return run_pipeline(config_path, false, seed, run_seed->count() > 0, outdir);
        }
        if (theory->parsed()) {
            return run_pipeline(config_path, true, seed, theory_seed->count() > 0, outdir);
        }
        if (check->parsed()) {
            const int failures = loft::run_self_checks();
            if (failures != 0) {
                std::cerr << failures << " check(s) failed\n";
                return 1;
            }
            return 0;
        }
        if (report->parsed()) {
            std::cout << loft::render_report(report_dir);
            return 0;
        }
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 2;
    }
    return 0;
}

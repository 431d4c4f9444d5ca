#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "fedtrans/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fedtrans: multi-model federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, switch_name, run_dir, plot_csv;
    std::uint64_t seed = 0;
    int threads = 0;

    CLI::App* run = app.add_subcommand("run", "Run an experiment from a config file");
    run->add_option("--config", config_path, "JSON config file")->required();
    CLI::Option* run_seed = run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--out", out_dir, "Output directory (default runs/<run_name>)");
    run->add_option("--threads", threads, "Worker threads for client training");
    bool export_data = false;
    run->add_flag("--export-data", export_data, "Write per-client CSVs into the output dir");

    CLI::App* ablate = app.add_subcommand("ablate", "Run with one component disabled");
    ablate->add_option("--config", config_path, "JSON config file")->required();
    ablate->add_option("--switch", switch_name, "no_transform | no_soft | no_warmup | random_cells")
        ->required();
    CLI::Option* ablate_seed = ablate->add_option("--seed", seed, "Override the config seed");
    ablate->add_option("--out", out_dir, "Output directory (default runs/<run_name>-<switch>)");
    ablate->add_option("--threads", threads, "Worker threads for client training");

    CLI::App* report = app.add_subcommand("report", "Summarize a finished run directory");
    report->add_option("--dir", run_dir, "Run output directory")->required();
    report->add_option("--plot-csv", plot_csv, "Also write a plot-ready loss/cost CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage errors exit 2, --help exits 0
    }

    try {
        fedtrans::RunOptions opts;
        if (*run_seed || *ablate_seed) opts.seed_override = seed;
        opts.out_dir = out_dir;
        opts.threads_override = threads;
        opts.export_data = export_data;
        if (app.got_subcommand("run")) return fedtrans::cmd_run(config_path, opts);
        if (app.got_subcommand("ablate")) return fedtrans::cmd_ablate(config_path, switch_name, opts);
        return fedtrans::cmd_report(run_dir, plot_csv);
    } catch (const fedtrans::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fedtrans::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

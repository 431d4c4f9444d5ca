#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "fedtrans/runtime.hpp"

namespace fedtrans {

// Everything a run needs, loaded from one flat JSON config file.
struct ExperimentConfig {
    std::string run_name = "default";
    std::uint64_t seed = 1;
    bool seed_in_config = false;
    double probe_fraction = 0.10;
    DataConfig data;
    CapacityConfig capacity;
    RunConfig run;              // pristine; ablation applies in make_run_config
    std::string ablation;       // empty or one of the cmd_ablate switches
    std::string data_dir;       // optional: per-client CSVs instead of synthetic data
    std::string capacities_csv; // optional: external capacity/speed table
};

// Parses and validates; unknown or ill-typed keys raise ConfigError naming
// the key. Required keys: num_clients, classes, feature_dim,
// initial_hidden_dims, max_rounds. Everything else has documented defaults.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

// The config after defaults, written into every run directory so a run can
// be reproduced from its own output.
nlohmann::json effective_config_json(const ExperimentConfig& cfg);

World build_world_from(const ExperimentConfig& cfg);

// Records one ablation switch: no_transform, no_soft, no_warmup, random_cells.
// The switch is kept by name (so it survives the effective-config round trip)
// and applied by make_run_config.
void apply_ablation(ExperimentConfig& cfg, const std::string& switch_name);

// The run configuration with the recorded ablation switch applied.
RunConfig make_run_config(const ExperimentConfig& cfg);

struct RunOptions {
    std::optional<std::uint64_t> seed_override;
    std::string out_dir;   // empty: runs/<run_name>
    int threads_override = 0;
    bool export_data = false;
};

int cmd_run(const std::string& config_path, const RunOptions& opts);
int cmd_ablate(const std::string& config_path, const std::string& switch_name, const RunOptions& opts);
int cmd_report(const std::string& run_dir, const std::string& plot_csv_path);

// "1234 MMAC"-style scaling for report output.
std::string format_macs(long long macs);

} // namespace fedtrans

#include "experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "fedtrans/checkpoint.hpp"
#include "fedtrans/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedtrans {

namespace {

class ConfigReader {
  public:
    explicit ConfigReader(const json& j) : j_(j) {
        if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    }

    int get_int(const std::string& key, std::optional<int> def, int lo, int hi) {
        const json* v = fetch(key, def.has_value());
        if (!v) return *def;
        if (!v->is_number_integer()) throw ConfigError("key '" + key + "' must be an integer");
        long long x = v->get<long long>();
        if (x < lo || x > hi) {
            throw ConfigError("key '" + key + "' out of range [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
        }
        return static_cast<int>(x);
    }

    long long get_ll(const std::string& key, std::optional<long long> def, long long lo) {
        const json* v = fetch(key, def.has_value());
        if (!v) return *def;
        if (!v->is_number_integer()) throw ConfigError("key '" + key + "' must be an integer");
        long long x = v->get<long long>();
        if (x < lo) throw ConfigError("key '" + key + "' must be >= " + std::to_string(lo));
        return x;
    }

    double get_double(const std::string& key, std::optional<double> def, double lo, double hi) {
        const json* v = fetch(key, def.has_value());
        if (!v) return *def;
        if (!v->is_number()) throw ConfigError("key '" + key + "' must be a number");
        double x = v->get<double>();
        if (!(x >= lo && x <= hi)) {
            throw ConfigError("key '" + key + "' out of range [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
        }
        return x;
    }

    bool get_bool(const std::string& key, bool def) {
        const json* v = fetch(key, true);
        if (!v) return def;
        if (!v->is_boolean()) throw ConfigError("key '" + key + "' must be a boolean");
        return v->get<bool>();
    }

    std::string get_string(const std::string& key, std::optional<std::string> def) {
        const json* v = fetch(key, def.has_value());
        if (!v) return *def;
        if (!v->is_string()) throw ConfigError("key '" + key + "' must be a string");
        return v->get<std::string>();
    }

    std::vector<int> get_int_array(const std::string& key) {
        const json* v = fetch(key, false);
        if (!v->is_array() || v->empty()) throw ConfigError("key '" + key + "' must be a non-empty array");
        std::vector<int> out;
        for (const auto& e : *v) {
            if (!e.is_number_integer()) throw ConfigError("key '" + key + "' must contain integers");
            out.push_back(e.get<int>());
        }
        return out;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    void reject_unknown() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (seen_.find(it.key()) == seen_.end()) {
                throw ConfigError("unknown config key '" + it.key() + "'");
            }
        }
    }

  private:
    const json* fetch(const std::string& key, bool optional) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            if (!optional) throw ConfigError("missing required config key '" + key + "'");
            return nullptr;
        }
        return &*it;
    }

    const json& j_;
    mutable std::set<std::string> seen_;
};

std::string fmt10(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

ExperimentConfig parse_experiment_config(const json& j) {
    ConfigReader r(j);
    ExperimentConfig cfg;

    cfg.run_name = r.get_string("run_name", std::string("default"));
    cfg.seed_in_config = r.has("seed");
    cfg.seed = static_cast<std::uint64_t>(r.get_ll("seed", 1, 0));
    cfg.probe_fraction = r.get_double("probe_fraction", 0.10, 0.0, 0.5);

    cfg.data.num_clients = r.get_int("num_clients", std::nullopt, 1, 1000000);
    cfg.data.classes = r.get_int("classes", std::nullopt, 2, 10000);
    cfg.data.feature_dim = r.get_int("feature_dim", std::nullopt, 1, 1000000);
    cfg.data.samples_per_client_min = r.get_int("samples_per_client_min", 80, 10, 1 << 30);
    cfg.data.samples_per_client_max =
        r.get_int("samples_per_client_max", std::max(120, cfg.data.samples_per_client_min), 10, 1 << 30);
    if (cfg.data.samples_per_client_max < cfg.data.samples_per_client_min) {
        throw ConfigError("key 'samples_per_client_max' must be >= samples_per_client_min");
    }
    cfg.data.dirichlet_h = r.get_double("dirichlet_h", 0.5, 1e-9, 1e9);
    cfg.data.blob_spread = r.get_double("blob_spread", 0.35, 0.0, 1e9);

    cfg.capacity.capacity_min_macs = r.get_ll("capacity_min_macs", 40, 1);
    cfg.capacity.capacity_max_macs = r.get_ll("capacity_max_macs", 1160, 1);
    if (cfg.capacity.capacity_max_macs < cfg.capacity.capacity_min_macs) {
        throw ConfigError("key 'capacity_max_macs' must be >= capacity_min_macs");
    }
    cfg.capacity.speed_min_macs_per_sec = r.get_double("speed_min_macs_per_s", 1e6, 1e-3, 1e18);
    cfg.capacity.speed_max_macs_per_sec = r.get_double("speed_max_macs_per_s", 1e8, 1e-3, 1e18);
    if (cfg.capacity.speed_max_macs_per_sec < cfg.capacity.speed_min_macs_per_sec) {
        throw ConfigError("key 'speed_max_macs_per_s' must be >= speed_min_macs_per_s");
    }

    cfg.run.initial_hidden_dims = r.get_int_array("initial_hidden_dims");
    cfg.run.max_rounds = r.get_int("max_rounds", std::nullopt, 0, 1 << 30);
    cfg.run.participants_per_round = r.get_int("participants_per_round", 10, 1, 1 << 30);
    cfg.run.local_steps = r.get_int("local_steps", 20, 1, 1 << 30);
    cfg.run.batch_size = r.get_int("batch_size", 10, 1, 1 << 30);
    cfg.run.learning_rate = r.get_double("learning_rate", 0.05, 1e-12, 1e3);

    cfg.run.doc.slope_count = r.get_int("doc_slope_count", 10, 1, 1 << 20);
    cfg.run.doc.slope_step = r.get_int("doc_slope_step", 5, 1, 1 << 20);
    cfg.run.doc.threshold = r.get_double("doc_threshold", 0.003, -1e9, 1e9);
    cfg.run.activeness_window = r.get_int("activeness_window", 5, 1, 1 << 20);
    cfg.run.transform.activeness_threshold = r.get_double("activeness_threshold", 0.9, 1e-9, 1.0);
    cfg.run.transform.widen_factor = r.get_int("widen_factor", 2, 2, 64);
    cfg.run.transform.deepen_count = r.get_int("deepen_count", 1, 1, 64);
    cfg.run.aggregation.decay = r.get_double("share_decay", 0.92, 1e-9, 1.0 - 1e-12);
    cfg.run.aggregation.enable_soft = r.get_bool("enable_soft_aggregation", true);
    cfg.run.train_mac_multiplier = r.get_int("train_mac_multiplier", 3, 1, 100);
    cfg.run.eval_interval = r.get_int("eval_interval", 5, 1, 1 << 20);
    cfg.run.convergence_window = r.get_int("convergence_window", 10, 1, 1 << 20);
    cfg.run.convergence_threshold_pp = r.get_double("convergence_threshold_pp", 1.0, 0.0, 100.0);
    cfg.run.threads = r.get_int("threads", 1, 1, 256);

    cfg.data_dir = r.get_string("data_dir", std::string());
    cfg.capacities_csv = r.get_string("capacities_csv", std::string());
    const std::string ablation = r.get_string("ablation", std::string());

    r.reject_unknown();

    if (!ablation.empty()) apply_ablation(cfg, ablation);
    cfg.data.seed = cfg.seed;
    cfg.run.seed = cfg.seed;
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

json effective_config_json(const ExperimentConfig& cfg) {
    json j;
    j["run_name"] = cfg.run_name;
    j["seed"] = cfg.seed;
    j["probe_fraction"] = cfg.probe_fraction;
    j["num_clients"] = cfg.data.num_clients;
    j["classes"] = cfg.data.classes;
    j["feature_dim"] = cfg.data.feature_dim;
    j["samples_per_client_min"] = cfg.data.samples_per_client_min;
    j["samples_per_client_max"] = cfg.data.samples_per_client_max;
    j["dirichlet_h"] = cfg.data.dirichlet_h;
    j["blob_spread"] = cfg.data.blob_spread;
    j["capacity_min_macs"] = cfg.capacity.capacity_min_macs;
    j["capacity_max_macs"] = cfg.capacity.capacity_max_macs;
    j["speed_min_macs_per_s"] = cfg.capacity.speed_min_macs_per_sec;
    j["speed_max_macs_per_s"] = cfg.capacity.speed_max_macs_per_sec;
    j["initial_hidden_dims"] = cfg.run.initial_hidden_dims;
    j["max_rounds"] = cfg.run.max_rounds;
    j["participants_per_round"] = cfg.run.participants_per_round;
    j["local_steps"] = cfg.run.local_steps;
    j["batch_size"] = cfg.run.batch_size;
    j["learning_rate"] = cfg.run.learning_rate;
    j["doc_slope_count"] = cfg.run.doc.slope_count;
    j["doc_slope_step"] = cfg.run.doc.slope_step;
    j["doc_threshold"] = cfg.run.doc.threshold;
    j["activeness_window"] = cfg.run.activeness_window;
    j["activeness_threshold"] = cfg.run.transform.activeness_threshold;
    j["widen_factor"] = cfg.run.transform.widen_factor;
    j["deepen_count"] = cfg.run.transform.deepen_count;
    j["share_decay"] = cfg.run.aggregation.decay;
    j["enable_soft_aggregation"] = cfg.run.aggregation.enable_soft;
    j["train_mac_multiplier"] = cfg.run.train_mac_multiplier;
    j["eval_interval"] = cfg.run.eval_interval;
    j["convergence_window"] = cfg.run.convergence_window;
    j["convergence_threshold_pp"] = cfg.run.convergence_threshold_pp;
    j["threads"] = cfg.run.threads;
    j["data_dir"] = cfg.data_dir;
    j["capacities_csv"] = cfg.capacities_csv;
    j["ablation"] = cfg.ablation;
    return j;
}

World build_world_from(const ExperimentConfig& cfg) {
    if (cfg.data_dir.empty() && cfg.capacities_csv.empty()) {
        return build_world(cfg.data, cfg.capacity, cfg.probe_fraction);
    }
    World w;
    if (!cfg.data_dir.empty()) {
        Rng split_rng = Rng::derive(cfg.data.seed, {0x706172ULL});
        auto [data, parts] =
            load_client_datasets(cfg.data_dir, cfg.data.num_clients, cfg.data.classes, split_rng);
        w.data = std::move(data);
        w.probe.feature_dim = w.data.feature_dim;
        w.probe.classes = w.data.classes;
        w.clients.resize(static_cast<std::size_t>(cfg.data.num_clients));
        for (int i = 0; i < cfg.data.num_clients; ++i) {
            w.clients[static_cast<std::size_t>(i)].id = i;
            w.clients[static_cast<std::size_t>(i)].data = std::move(parts[static_cast<std::size_t>(i)]);
        }
    } else {
        w = build_world(cfg.data, cfg.capacity, cfg.probe_fraction);
    }
    std::vector<std::pair<long long, double>> caps;
    if (!cfg.capacities_csv.empty()) {
        caps = load_capacities_csv(cfg.capacities_csv);
        if (static_cast<int>(caps.size()) != cfg.data.num_clients) {
            throw ConfigError("capacities_csv has " + std::to_string(caps.size()) + " rows, expected " +
                              std::to_string(cfg.data.num_clients));
        }
    } else if (!cfg.data_dir.empty()) {
        Rng cap_rng = Rng::derive(cfg.data.seed, {0x636170ULL});
        caps = sample_capacities(cfg.capacity, cfg.data.num_clients, cap_rng);
    }
    if (!caps.empty()) {
        for (int i = 0; i < cfg.data.num_clients; ++i) {
            w.clients[static_cast<std::size_t>(i)].capacity_macs = caps[static_cast<std::size_t>(i)].first;
            w.clients[static_cast<std::size_t>(i)].speed_macs_per_sec = caps[static_cast<std::size_t>(i)].second;
        }
    }
    return w;
}

void apply_ablation(ExperimentConfig& cfg, const std::string& switch_name) {
    if (switch_name != "no_transform" && switch_name != "no_soft" && switch_name != "no_warmup" &&
        switch_name != "random_cells") {
        throw ConfigError("unknown ablation switch '" + switch_name + "'");
    }
    cfg.ablation = switch_name;
}

RunConfig make_run_config(const ExperimentConfig& cfg) {
    RunConfig run = cfg.run;
    if (cfg.ablation == "no_transform") {
        run.doc.threshold = -std::numeric_limits<double>::infinity();
    } else if (cfg.ablation == "no_soft") {
        run.aggregation.enable_soft = false;
    } else if (cfg.ablation == "no_warmup") {
        run.warm_start = false;
    } else if (cfg.ablation == "random_cells") {
        run.random_cell_selection = true;
    }
    return run;
}

namespace {

int run_experiment(ExperimentConfig cfg, const RunOptions& opts, const std::string& default_suffix) {
    if (opts.seed_override.has_value()) {
        cfg.seed = *opts.seed_override;
        cfg.data.seed = cfg.seed;
        cfg.run.seed = cfg.seed;
    } else if (!cfg.seed_in_config) {
        if (const char* env = std::getenv("FEDTRANS_SEED")) {
            cfg.seed = static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
            cfg.data.seed = cfg.seed;
            cfg.run.seed = cfg.seed;
        }
    }
    if (opts.threads_override > 0) cfg.run.threads = opts.threads_override;

    fs::path out = opts.out_dir.empty() ? fs::path("runs") / (cfg.run_name + default_suffix)
                                        : fs::path(opts.out_dir);
    fs::create_directories(out);
    fs::create_directories(out / "checkpoints");

    World world = build_world_from(cfg);
    RunResult result = run_training(make_run_config(cfg), world);

    {
        std::ofstream f(out / "effective_config.json");
        f << effective_config_json(cfg).dump(2) << "\n";
    }
    {
        std::ofstream f(out / "metrics.csv");
        write_metrics_csv(result, f);
    }
    {
        std::ofstream f(out / "assignments.csv");
        write_assignments_csv(result, f);
    }
    {
        std::ofstream f(out / "events.log");
        write_event_log(result, f);
    }
    {
        std::ofstream f(out / "summary.txt");
        write_summary(result, f);
    }
    for (const Model& m : result.models) {
        save_checkpoint((out / "checkpoints" / ("model_" + std::to_string(m.id) + ".txt")).string(), m,
                        result.weights.at(m.id));
    }
    {
        std::vector<std::pair<long long, double>> caps;
        for (const ClientRecord& c : world.clients) caps.emplace_back(c.capacity_macs, c.speed_macs_per_sec);
        save_capacities_csv(caps, (out / "clients.csv").string());
    }
    if (opts.export_data) {
        fs::create_directories(out / "data");
        for (const ClientRecord& c : world.clients) {
            std::vector<int> rows = c.data.train;
            rows.insert(rows.end(), c.data.test.begin(), c.data.test.end());
            save_client_csv(world.data, rows, (out / "data" / ("client_" + std::to_string(c.id) + ".csv")).string());
        }
    }

    std::cout << "run " << cfg.run_name << default_suffix << ": " << result.rounds_executed << " rounds, "
              << result.models.size() << " models, mean accuracy " << fmt10(100.0 * result.mean_accuracy)
              << "%, IQR " << fmt10(100.0 * result.iqr_accuracy) << "%, cost " << format_macs(result.total_macs)
              << "\n";
    std::cout << "outputs in " << out.string() << "\n";
    return 0;
}

} // namespace

int cmd_run(const std::string& config_path, const RunOptions& opts) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    return run_experiment(std::move(cfg), opts, "");
}

int cmd_ablate(const std::string& config_path, const std::string& switch_name, const RunOptions& opts) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    apply_ablation(cfg, switch_name);
    return run_experiment(std::move(cfg), opts, "-" + switch_name);
}

std::string format_macs(long long macs) {
    static const char* units[] = {"MAC", "KMAC", "MMAC", "GMAC", "TMAC", "PMAC"};
    double v = static_cast<double>(macs);
    int u = 0;
    while (v >= 1000.0 && u < 5) {
        v /= 1000.0;
        ++u;
    }
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3g %s", v, units[u]);
    return buf;
}

int cmd_report(const std::string& run_dir, const std::string& plot_csv_path) {
    fs::path dir(run_dir);
    std::ifstream summary(dir / "summary.txt");
    if (!summary) throw IoError("missing " + (dir / "summary.txt").string());

    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(summary, line)) {
        auto space = line.find(' ');
        if (space == std::string::npos) continue;
        kv[line.substr(0, space)] = line.substr(space + 1);
    }
    for (const char* key : {"mean_acc", "iqr_acc", "total_macs", "models", "rounds"}) {
        if (kv.find(key) == kv.end()) throw IoError("summary.txt missing key '" + std::string(key) + "'");
    }

    std::ifstream metrics(dir / "metrics.csv");
    if (!metrics) throw IoError("missing " + (dir / "metrics.csv").string());
    if (!std::getline(metrics, line) ||
        line != "round,model_count,largest_macs,mean_loss,doc,cum_macs,round_time_s,comm_mb") {
        throw IoError("metrics.csv: unexpected header");
    }
    struct Row {
        int round;
        double mean_loss;
        long long cum_macs;
    };
    std::vector<Row> rows;
    while (std::getline(metrics, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        while (cols.size() < 8) cols.push_back(""); // trailing empty field
        if (cols.size() != 8) throw IoError("metrics.csv: row with " + std::to_string(cols.size()) + " columns");
        try {
            rows.push_back({std::stoi(cols[0]), std::stod(cols[3]), std::stoll(cols[5])});
        } catch (const std::exception&) {
            throw IoError("metrics.csv: unparseable row '" + line + "'");
        }
    }

    const double mean_acc = std::stod(kv["mean_acc"]);
    const double iqr_acc = std::stod(kv["iqr_acc"]);
    const long long total_macs = std::stoll(kv["total_macs"]);
    std::printf("run report (%s)\n", run_dir.c_str());
    std::printf("  %-16s %.2f %%\n", "mean accuracy", 100.0 * mean_acc);
    std::printf("  %-16s %.2f %%\n", "accuracy IQR", 100.0 * iqr_acc);
    std::printf("  %-16s %s\n", "total cost", format_macs(total_macs).c_str());
    std::printf("  %-16s %s\n", "models", kv["models"].c_str());
    std::printf("  %-16s %s\n", "rounds", kv["rounds"].c_str());
    if (kv.count("total_comm_mb")) {
        std::printf("  %-16s %.1f MB\n", "network", std::stod(kv["total_comm_mb"]));
    }

    if (!plot_csv_path.empty()) {
        std::ofstream plot(plot_csv_path);
        if (!plot) throw IoError("cannot write " + plot_csv_path);
        plot << "round,mean_loss,cum_macs\n";
        for (const Row& r : rows) {
            plot << r.round << "," << fmt10(r.mean_loss) << "," << r.cum_macs << "\n";
        }
    }
    return 0;
}

} // namespace fedtrans

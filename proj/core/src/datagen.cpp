#include "fedtrans/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedtrans/errors.hpp"

namespace fedtrans {

namespace {

void check_config(const DataConfig& cfg) {
    if (cfg.num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (cfg.classes < 2) throw ConfigError("classes must be >= 2");
    if (cfg.feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (cfg.dirichlet_h <= 0.0) throw ConfigError("dirichlet_h must be > 0");
    if (cfg.samples_per_client_min < 10 || cfg.samples_per_client_max < cfg.samples_per_client_min) {
        throw ConfigError("samples_per_client range must satisfy 10 <= min <= max");
    }
}

std::vector<int> pick_rows(const Dataset& data, const std::vector<double>& proportions,
                           int want, std::vector<std::vector<int>>& pools) {
    const int classes = data.classes;
    // Largest-remainder apportionment of `want` across labels.
    std::vector<int> target(static_cast<std::size_t>(classes), 0);
    std::vector<std::pair<double, int>> rema;
    int assigned = 0;
    for (int c = 0; c < classes; ++c) {
        double exact = proportions[static_cast<std::size_t>(c)] * want;
        target[static_cast<std::size_t>(c)] = static_cast<int>(exact);
        assigned += target[static_cast<std::size_t>(c)];
        rema.emplace_back(exact - static_cast<int>(exact), c);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int k = 0; assigned < want && k < classes; ++k) {
        target[static_cast<std::size_t>(rema[static_cast<std::size_t>(k)].second)]++;
        ++assigned;
    }

    std::vector<int> rows;
    rows.reserve(static_cast<std::size_t>(want));
    for (int c = 0; c < classes; ++c) {
        auto& pool = pools[static_cast<std::size_t>(c)];
        int take = std::min(target[static_cast<std::size_t>(c)], static_cast<int>(pool.size()));
        for (int k = 0; k < take; ++k) {
            rows.push_back(pool.back());
            pool.pop_back();
        }
    }
    // Shortfall: top up from the fullest pools.
    while (static_cast<int>(rows.size()) < want) {
        int best = -1;
        for (int c = 0; c < classes; ++c) {
            if (pools[static_cast<std::size_t>(c)].empty()) continue;
            if (best < 0 || pools[static_cast<std::size_t>(c)].size() > pools[static_cast<std::size_t>(best)].size()) {
                best = c;
            }
        }
        if (best < 0) break;
        rows.push_back(pools[static_cast<std::size_t>(best)].back());
        pools[static_cast<std::size_t>(best)].pop_back();
    }
    return rows;
}

} // namespace

Dataset generate_dataset(const DataConfig& cfg) {
    check_config(cfg);
    Rng rng = Rng::derive(cfg.seed, {0x6461746167656eULL}); // "datagen"
    // Sized for per-client demand plus probe holdout and partition slack.
    const long long demand = static_cast<long long>(cfg.num_clients) * cfg.samples_per_client_max;
    const int total = static_cast<int>(static_cast<double>(demand) * 1.35) + cfg.classes;

    Dataset data;
    data.feature_dim = cfg.feature_dim;
    data.classes = cfg.classes;
    data.features = Tensor::matrix(total, cfg.feature_dim);
    data.labels.resize(static_cast<std::size_t>(total));

    Tensor means = Tensor::matrix(cfg.classes, cfg.feature_dim);
    for (double& v : means.data) v = rng.uniform(-1.0, 1.0);

    for (int i = 0; i < total; ++i) {
        const int y = i % cfg.classes;
        data.labels[static_cast<std::size_t>(i)] = y;
        for (int k = 0; k < cfg.feature_dim; ++k) {
            data.features.at(i, k) = means.at(y, k) + cfg.blob_spread * rng.normal();
        }
    }
    return data;
}

std::pair<Dataset, Dataset> split_probe(const Dataset& data, double fraction, Rng& rng) {
    std::vector<int> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const int probe_n = static_cast<int>(fraction * data.size());

    auto gather = [&](int from, int to) {
        Dataset d;
        d.feature_dim = data.feature_dim;
        d.classes = data.classes;
        d.features = Tensor::matrix(to - from, data.feature_dim);
        d.labels.reserve(static_cast<std::size_t>(to - from));
        for (int i = from; i < to; ++i) {
            const int src = order[static_cast<std::size_t>(i)];
            for (int k = 0; k < data.feature_dim; ++k) d.features.at(i - from, k) = data.features.at(src, k);
            d.labels.push_back(data.labels[static_cast<std::size_t>(src)]);
        }
        return d;
    };
    return {gather(0, probe_n), gather(probe_n, data.size())};
}

std::vector<Partition> partition_dirichlet(const Dataset& data, const DataConfig& cfg, Rng& rng) {
    check_config(cfg);
    const int m = cfg.num_clients;
    if (data.size() < m * 10) {
        throw ConfigError("dataset of " + std::to_string(data.size()) + " rows cannot give " +
                          std::to_string(m) + " clients 10 samples each");
    }

    std::vector<std::vector<int>> pools(static_cast<std::size_t>(data.classes));
    for (int i = 0; i < data.size(); ++i) pools[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(i);
    for (auto& pool : pools) rng.shuffle(pool);

    std::vector<int> want(static_cast<std::size_t>(m));
    long long total_want = 0;
    for (int& w : want) {
        w = cfg.samples_per_client_min +
            rng.uniform_int(cfg.samples_per_client_max - cfg.samples_per_client_min + 1);
        total_want += w;
    }
    if (total_want > data.size()) {
        // Scale demand down to what the dataset can actually supply.
        const double scale = static_cast<double>(data.size()) / static_cast<double>(total_want);
        for (int& w : want) w = std::max(10, static_cast<int>(w * scale));
    }

    std::vector<Partition> parts(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        std::vector<int> rows;
        for (int attempt = 0; attempt < 20; ++attempt) {
            std::vector<double> p = rng.dirichlet(cfg.dirichlet_h, data.classes);
            rows = pick_rows(data, p, want[static_cast<std::size_t>(i)], pools);
            if (static_cast<int>(rows.size()) >= 10) break;
            // Starved: return the rows and try fresh proportions.
            for (int r : rows) pools[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(r)])].push_back(r);
            rows.clear();
        }
        if (static_cast<int>(rows.size()) < 10) {
            throw ConfigError("could not give client " + std::to_string(i) + " 10 samples");
        }
        rng.shuffle(rows);
        const int test_n = std::max(1, static_cast<int>(rows.size()) / 5);
        Partition& part = parts[static_cast<std::size_t>(i)];
        part.test.assign(rows.begin(), rows.begin() + test_n);
        part.train.assign(rows.begin() + test_n, rows.end());
    }
    return parts;
}

std::vector<std::pair<long long, double>> sample_capacities(const CapacityConfig& cfg, int m, Rng& rng) {
    if (m < 1) throw ConfigError("need at least one client");
    if (cfg.capacity_min_macs < 1 || cfg.capacity_max_macs < cfg.capacity_min_macs) {
        throw ConfigError("capacity range must satisfy 1 <= min <= max");
    }
    std::vector<std::pair<long long, double>> out(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        long long cap;
        if (i == 0) {
            cap = cfg.capacity_min_macs;
        } else if (i == m - 1) {
            cap = cfg.capacity_max_macs;
        } else {
            cap = static_cast<long long>(rng.log_uniform(static_cast<double>(cfg.capacity_min_macs),
                                                         static_cast<double>(cfg.capacity_max_macs)));
            cap = std::clamp(cap, cfg.capacity_min_macs, cfg.capacity_max_macs);
        }
        double speed = rng.log_uniform(cfg.speed_min_macs_per_sec, cfg.speed_max_macs_per_sec);
        out[static_cast<std::size_t>(i)] = {cap, speed};
    }
    return out;
}

void save_client_csv(const Dataset& data, const std::vector<int>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    for (int k = 0; k < data.feature_dim; ++k) f << "f" << k << ",";
    f << "label\n";
    char buf[32];
    for (int r : rows) {
        for (int k = 0; k < data.feature_dim; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", data.features.at(r, k));
            f << buf << ",";
        }
        f << data.labels[static_cast<std::size_t>(r)] << "\n";
    }
}

Dataset load_client_csv(const std::string& path, int classes) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::string line;
    if (!std::getline(f, line)) throw IoError(path + ": missing header");
    int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
    if (dim < 1) throw IoError(path + ": bad header");

    std::vector<double> values;
    std::vector<int> labels;
    int rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        int col = 0;
        while (std::getline(ss, tok, ',')) {
            if (col < dim) {
                values.push_back(std::stod(tok));
            } else {
                labels.push_back(std::stoi(tok));
            }
            ++col;
        }
        if (col != dim + 1) throw IoError(path + ": row with " + std::to_string(col) + " columns");
        ++rows;
    }
    Dataset d;
    d.feature_dim = dim;
    d.classes = classes;
    d.features = Tensor::matrix(rows, dim);
    d.features.data = std::move(values);
    d.labels = std::move(labels);
    for (int y : d.labels) {
        if (y < 0 || y >= classes) throw IoError(path + ": label out of range");
    }
    return d;
}

void save_capacities_csv(const std::vector<std::pair<long long, double>>& caps, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << "capacity_macs,speed\n";
    char buf[32];
    for (const auto& [cap, speed] : caps) {
        std::snprintf(buf, sizeof buf, "%.17g", speed);
        f << cap << "," << buf << "\n";
    }
}

std::vector<std::pair<long long, double>> load_capacities_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    std::string line;
    if (!std::getline(f, line) || line != "capacity_macs,speed") throw IoError(path + ": bad header");
    std::vector<std::pair<long long, double>> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError(path + ": bad row");
        out.emplace_back(std::stoll(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    }
    return out;
}

std::pair<Dataset, std::vector<Partition>> load_client_datasets(const std::string& dir,
                                                                int num_clients, int classes, Rng& rng) {
    Dataset merged;
    merged.classes = classes;
    std::vector<Partition> parts(static_cast<std::size_t>(num_clients));
    for (int i = 0; i < num_clients; ++i) {
        Dataset d = load_client_csv(dir + "/client_" + std::to_string(i) + ".csv", classes);
        if (i == 0) {
            merged.feature_dim = d.feature_dim;
            merged.features = Tensor::matrix(0, d.feature_dim);
        } else if (d.feature_dim != merged.feature_dim) {
            throw IoError("client files disagree on feature dim");
        }
        const int base = merged.size();
        merged.features.shape[0] += d.size();
        merged.features.data.insert(merged.features.data.end(), d.features.data.begin(), d.features.data.end());
        merged.labels.insert(merged.labels.end(), d.labels.begin(), d.labels.end());

        std::vector<int> rows(static_cast<std::size_t>(d.size()));
        std::iota(rows.begin(), rows.end(), base);
        rng.shuffle(rows);
        const int test_n = std::max(1, static_cast<int>(rows.size()) / 5);
        parts[static_cast<std::size_t>(i)].test.assign(rows.begin(), rows.begin() + test_n);
        parts[static_cast<std::size_t>(i)].train.assign(rows.begin() + test_n, rows.end());
    }
    return {std::move(merged), std::move(parts)};
}

} // namespace fedtrans

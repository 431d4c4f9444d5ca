#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "fedtrans/datagen.hpp"
#include "fedtrans/errors.hpp"
#include "fedtrans/nn.hpp"
#include "helpers.hpp"

using namespace fedtrans;
using namespace testutil;

namespace {

DataConfig small_config() {
    DataConfig cfg;
    cfg.num_clients = 8;
    cfg.classes = 4;
    cfg.feature_dim = 6;
    cfg.samples_per_client_min = 20;
    cfg.samples_per_client_max = 30;
    cfg.dirichlet_h = 0.5;
    cfg.blob_spread = 0.3;
    cfg.seed = 5;
    return cfg;
}

// Mean over clients of the total-variation distance between the client's
// label histogram and the uniform distribution.
double mean_tv_from_uniform(const Dataset& data, const std::vector<Partition>& parts) {
    double total = 0.0;
    for (const Partition& p : parts) {
        std::vector<int> rows = p.train;
        rows.insert(rows.end(), p.test.begin(), p.test.end());
        std::vector<double> hist(static_cast<std::size_t>(data.classes), 0.0);
        for (int r : rows) hist[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(r)])] += 1.0;
        double tv = 0.0;
        for (double h : hist) tv += std::abs(h / rows.size() - 1.0 / data.classes);
        total += 0.5 * tv;
    }
    return total / static_cast<double>(parts.size());
}

} // namespace

TEST_SUITE("datagen") {

TEST_CASE("generate: zero spread collapses each class onto its mean") {
    DataConfig cfg = small_config();
    cfg.blob_spread = 0.0;
    Dataset d = generate_dataset(cfg);
    for (int i = 0; i < d.size(); ++i) {
        const int y = d.labels[static_cast<std::size_t>(i)];
        // Find the first sample of the same class; all must coincide.
        for (int j = 0; j < i; ++j) {
            if (d.labels[static_cast<std::size_t>(j)] != y) continue;
            for (int k = 0; k < d.feature_dim; ++k) CHECK(d.features.at(i, k) == d.features.at(j, k));
            break;
        }
    }
}

TEST_CASE("generate: deterministic under seed") {
    DataConfig cfg = small_config();
    Dataset a = generate_dataset(cfg);
    Dataset b = generate_dataset(cfg);
    CHECK(a.features.data == b.features.data);
    CHECK(a.labels == b.labels);
    cfg.seed = 6;
    Dataset c = generate_dataset(cfg);
    CHECK(a.features.data != c.features.data);
}

TEST_CASE("generate: two well-separated classes are centrally learnable above 95%") {
    DataConfig cfg;
    cfg.num_clients = 4;
    cfg.classes = 2;
    cfg.feature_dim = 8;
    cfg.samples_per_client_min = 60;
    cfg.samples_per_client_max = 60;
    cfg.blob_spread = 0.10;
    cfg.seed = 9;
    Dataset d = generate_dataset(cfg);

    CellIdAllocator ids;
    Model m = build_chain_model(cfg.feature_dim, cfg.classes, {16}, ids);
    Rng wrng(1);
    WeightSet w = init_weights(m, wrng);
    std::vector<int> rows(static_cast<std::size_t>(d.size()));
    for (int i = 0; i < d.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
    Rng trng(2);
    LocalTrainResult res = local_train(m, w, d, rows, 300, 16, 0.05, trng);
    CHECK(accuracy(m, res.weights, d, rows) > 0.95);
}

TEST_CASE("partition: disjoint cover with per-client floors and splits") {
    DataConfig cfg = small_config();
    Dataset d = generate_dataset(cfg);
    Rng rng(11);
    auto parts = partition_dirichlet(d, cfg, rng);
    REQUIRE(parts.size() == static_cast<std::size_t>(cfg.num_clients));

    std::set<int> seen;
    for (const Partition& p : parts) {
        const int n = static_cast<int>(p.train.size() + p.test.size());
        CHECK(n >= 10);
        CHECK(n <= cfg.samples_per_client_max);
        CHECK(static_cast<int>(p.test.size()) == std::max(1, n / 5));
        for (int r : p.train) CHECK(seen.insert(r).second);
        for (int r : p.test) CHECK(seen.insert(r).second);
    }
    for (int r : seen) {
        CHECK(r >= 0);
        CHECK(r < d.size());
    }
}

TEST_CASE("partition: deterministic under seed") {
    DataConfig cfg = small_config();
    Dataset d = generate_dataset(cfg);
    Rng a(3), b(3);
    auto p1 = partition_dirichlet(d, cfg, a);
    auto p2 = partition_dirichlet(d, cfg, b);
    for (std::size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].train == p2[i].train);
        CHECK(p1[i].test == p2[i].test);
    }
}

TEST_CASE("partition: refuses a dataset below the 10-sample floor") {
    DataConfig cfg = small_config();
    Dataset d = generate_dataset(cfg);
    DataConfig big = cfg;
    big.num_clients = d.size(); // 10x the supply
    Rng rng(1);
    CHECK_THROWS_AS(partition_dirichlet(d, big, rng), ConfigError);
}

TEST_CASE("partition: huge concentration approaches the global mix") {
    DataConfig cfg = small_config();
    cfg.num_clients = 10;
    cfg.samples_per_client_min = 200;
    cfg.samples_per_client_max = 200;
    cfg.dirichlet_h = 1e6;
    Dataset d = generate_dataset(cfg);
    Rng rng(13);
    auto parts = partition_dirichlet(d, cfg, rng);
    for (const Partition& p : parts) {
        std::vector<int> rows = p.train;
        rows.insert(rows.end(), p.test.begin(), p.test.end());
        std::vector<double> hist(static_cast<std::size_t>(cfg.classes), 0.0);
        for (int r : rows) hist[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(r)])] += 1.0;
        for (double h : hist) CHECK(std::abs(h / rows.size() - 1.0 / cfg.classes) < 0.05);
    }
}

TEST_CASE("partition: low concentration produces dominant labels") {
    DataConfig cfg = small_config();
    cfg.num_clients = 20;
    cfg.dirichlet_h = 0.1;
    std::vector<double> shares;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        cfg.seed = seed;
        Dataset d = generate_dataset(cfg);
        Rng rng = Rng::derive(seed, {77});
        auto parts = partition_dirichlet(d, cfg, rng);
        for (const Partition& p : parts) {
            std::vector<int> rows = p.train;
            rows.insert(rows.end(), p.test.begin(), p.test.end());
            std::vector<int> hist(static_cast<std::size_t>(cfg.classes), 0);
            for (int r : rows) hist[static_cast<std::size_t>(d.labels[static_cast<std::size_t>(r)])]++;
            shares.push_back(static_cast<double>(*std::max_element(hist.begin(), hist.end())) / rows.size());
        }
    }
    std::sort(shares.begin(), shares.end());
    CHECK(shares[shares.size() / 2] > 0.5); // median dominant-label share
}

TEST_CASE("partition: heterogeneity falls as the concentration grows") {
    DataConfig cfg = small_config();
    cfg.num_clients = 12;
    double tv_by_h[3] = {0.0, 0.0, 0.0};
    const double hs[3] = {0.1, 1.0, 10.0};
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        cfg.seed = static_cast<std::uint64_t>(100 + s);
        Dataset d = generate_dataset(cfg);
        for (int hi = 0; hi < 3; ++hi) {
            DataConfig c2 = cfg;
            c2.dirichlet_h = hs[hi];
            Rng rng = Rng::derive(cfg.seed, {static_cast<std::uint64_t>(hi)});
            auto parts = partition_dirichlet(d, c2, rng);
            tv_by_h[hi] += mean_tv_from_uniform(d, parts) / seeds;
        }
    }
    CHECK(tv_by_h[0] > tv_by_h[1]);
    CHECK(tv_by_h[1] > tv_by_h[2]);
}

TEST_CASE("capacities: two clients pin both extremes") {
    CapacityConfig cfg;
    cfg.capacity_min_macs = 40;
    cfg.capacity_max_macs = 1160;
    Rng rng(1);
    auto caps = sample_capacities(cfg, 2, rng);
    CHECK(caps[0].first == 40);
    CHECK(caps[1].first == 1160);
}

TEST_CASE("capacities: spread is at least 29x and in range") {
    CapacityConfig cfg;
    cfg.capacity_min_macs = 40;
    cfg.capacity_max_macs = 40 * 29;
    Rng rng(2);
    auto caps = sample_capacities(cfg, 40, rng);
    long long mn = caps[0].first, mx = caps[0].first;
    for (const auto& [cap, speed] : caps) {
        mn = std::min(mn, cap);
        mx = std::max(mx, cap);
        CHECK(cap >= cfg.capacity_min_macs);
        CHECK(cap <= cfg.capacity_max_macs);
        CHECK(speed >= cfg.speed_min_macs_per_sec);
        CHECK(speed <= cfg.speed_max_macs_per_sec);
    }
    CHECK(static_cast<double>(mx) / static_cast<double>(mn) >= 29.0);

    Rng r2(2);
    auto again = sample_capacities(cfg, 40, r2);
    CHECK(again == caps);
}

TEST_CASE("probe split: sizes and determinism") {
    DataConfig cfg = small_config();
    Dataset d = generate_dataset(cfg);
    Rng a(7), b(7);
    auto [probe1, rest1] = split_probe(d, 0.1, a);
    auto [probe2, rest2] = split_probe(d, 0.1, b);
    CHECK(probe1.size() == static_cast<int>(0.1 * d.size()));
    CHECK(probe1.size() + rest1.size() == d.size());
    CHECK(probe1.features.data == probe2.features.data);
    CHECK(rest1.labels == rest2.labels);
}

TEST_CASE("csv: client file round-trips bitwise") {
    DataConfig cfg = small_config();
    Dataset d = generate_dataset(cfg);
    std::vector<int> rows{0, 3, 7, 11, 20};
    const std::string path = std::filesystem::temp_directory_path() / "fedtrans_client_test.csv";
    save_client_csv(d, rows, path);
    Dataset back = load_client_csv(path, cfg.classes);
    REQUIRE(back.size() == static_cast<int>(rows.size()));
    CHECK(back.feature_dim == d.feature_dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back.labels[i] == d.labels[static_cast<std::size_t>(rows[i])]);
        for (int k = 0; k < d.feature_dim; ++k) {
            CHECK(back.features.at(static_cast<int>(i), k) == d.features.at(rows[i], k));
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("csv: external per-client datasets load back with splits") {
    DataConfig cfg = small_config();
    Dataset d = generate_dataset(cfg);
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "fedtrans_clients_test";
    fs::create_directories(dir);
    const int clients = 3;
    std::vector<std::vector<int>> rows{{0, 1, 2, 3, 4, 8, 9, 10, 11, 12},
                                       {5, 6, 7, 13, 14, 15, 16, 17, 18, 19},
                                       {20, 21, 22, 23, 24, 25, 26, 27, 28, 29}};
    for (int i = 0; i < clients; ++i) {
        save_client_csv(d, rows[static_cast<std::size_t>(i)],
                        (dir / ("client_" + std::to_string(i) + ".csv")).string());
    }
    Rng rng(3);
    auto [merged, parts] = load_client_datasets(dir.string(), clients, cfg.classes, rng);
    REQUIRE(parts.size() == static_cast<std::size_t>(clients));
    CHECK(merged.size() == 30);
    CHECK(merged.feature_dim == d.feature_dim);
    for (const Partition& p : parts) {
        CHECK(p.train.size() == 8);
        CHECK(p.test.size() == 2);
    }
    // Same seed loads the same splits.
    Rng rng2(3);
    auto [merged2, parts2] = load_client_datasets(dir.string(), clients, cfg.classes, rng2);
    for (int i = 0; i < clients; ++i) {
        CHECK(parts[static_cast<std::size_t>(i)].train == parts2[static_cast<std::size_t>(i)].train);
    }
    fs::remove_all(dir);
}

TEST_CASE("csv: capacities round-trip") {
    std::vector<std::pair<long long, double>> caps{{40, 1.5e6}, {517, 2.25e7}, {1160, 9.875e7}};
    const std::string path = std::filesystem::temp_directory_path() / "fedtrans_caps_test.csv";
    save_capacities_csv(caps, path);
    auto back = load_capacities_csv(path);
    CHECK(back == caps);
    std::filesystem::remove(path);
}

} // TEST_SUITE

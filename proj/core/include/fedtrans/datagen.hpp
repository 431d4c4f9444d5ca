#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedtrans/data.hpp"
#include "fedtrans/rng.hpp"

namespace fedtrans {

struct DataConfig {
    int num_clients = 40;
    int classes = 5;
    int feature_dim = 32;
    int samples_per_client_min = 80;
    int samples_per_client_max = 120;
    double dirichlet_h = 0.5; // lower h, more label skew
    double blob_spread = 0.35;
    std::uint64_t seed = 1;
};

struct CapacityConfig {
    long long capacity_min_macs = 40;
    long long capacity_max_macs = 1160; // >= 29x the minimum
    double speed_min_macs_per_sec = 1e6;
    double speed_max_macs_per_sec = 1e8;
};

// One Gaussian cluster per class: means drawn once in [-1, 1]^d, samples are
// mean + blob_spread * noise. Labels round-robin, sized with enough margin to
// cover the per-client demand plus a probe holdout. Deterministic under seed.
Dataset generate_dataset(const DataConfig& cfg);

// Splits off a probe fraction (shuffled) that never reaches clients.
std::pair<Dataset, Dataset> split_probe(const Dataset& data, double fraction, Rng& rng);

// Dirichlet(h) label proportions per client, drawn without replacement from
// the label pools; proportions are resampled for clients that would end up
// below 10 samples. Each client gets a seeded 80/20 train/test split.
// Partitions cover the dataset rows disjointly (some rows may stay unassigned
// only if total demand is below the dataset size).
std::vector<Partition> partition_dirichlet(const Dataset& data, const DataConfig& cfg, Rng& rng);

// Log-uniform (capacity, speed) pairs; clients 0 and m-1 are pinned to the
// configured extremes so the population always spans the full range.
std::vector<std::pair<long long, double>> sample_capacities(const CapacityConfig& cfg, int m, Rng& rng);

// Per-client CSV: header f0..f{d-1},label.
void save_client_csv(const Dataset& data, const std::vector<int>& rows, const std::string& path);
// Reads one client file back as a standalone dataset (classes inferred by caller).
Dataset load_client_csv(const std::string& path, int classes);

// Two-column CSV: capacity_macs,speed.
void save_capacities_csv(const std::vector<std::pair<long long, double>>& caps, const std::string& path);
std::vector<std::pair<long long, double>> load_capacities_csv(const std::string& path);

// Ingestion seam for external data: one client_<i>.csv per client under dir.
// Returns the merged dataset plus per-client 80/20 partitions.
std::pair<Dataset, std::vector<Partition>> load_client_datasets(const std::string& dir,
                                                                int num_clients, int classes, Rng& rng);

} // namespace fedtrans

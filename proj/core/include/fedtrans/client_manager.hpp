#pragma once

#include <map>
#include <optional>
#include <vector>

#include "fedtrans/data.hpp"
#include "fedtrans/model.hpp"
#include "fedtrans/rng.hpp"

namespace fedtrans {

// A simulated device: hardware budget in MACs per sample, execution speed for
// the round-time model, and its slice of the data.
struct ClientRecord {
    int id = 0;
    long long capacity_macs = 0;
    double speed_macs_per_sec = 1.0;
    Partition data;
};

// Loss-derived utility per (client, model). A client holds an entry exactly
// for the models its capacity admits; new columns copy the parent model's.
class UtilityTable {
  public:
    UtilityTable() = default;
    explicit UtilityTable(int num_clients) : rows_(static_cast<std::size_t>(num_clients)) {}

    int num_clients() const { return static_cast<int>(rows_.size()); }
    bool has(int client, ModelId model) const;
    std::optional<double> get(int client, ModelId model) const;
    void set(int client, ModelId model, double value);
    void add(int client, ModelId model, double delta);
    const std::map<ModelId, double>& row(int client) const {
        return rows_[static_cast<std::size_t>(client)];
    }

  private:
    std::vector<std::map<ModelId, double>> rows_;
};

// n distinct client ids, uniform without replacement. Deterministic per rng.
std::vector<int> select_clients(int registry_size, int n, Rng& rng);

// Ids of models whose MACs fit the client's capacity (inclusive), in creation
// order. Never empty as long as the client admits the initial model.
std::vector<ModelId> compatible_models(const ClientRecord& client, const std::vector<Model>& models);

// Softmax probabilities over utilities, computed with max subtraction and
// clipping to [-50, 50]; invariant under a constant shift of all utilities.
std::vector<double> softmax_probabilities(const std::vector<double>& utilities);

// Draws an index with probability proportional to exp(utility). A single
// candidate is returned directly without consuming randomness.
int sample_model(const std::vector<double>& utilities, Rng& rng);

// Z-score over this round's participants (population std). All zeros when the
// spread is degenerate (< 1e-12) or there is a single participant.
std::map<int, double> standardize_losses(const std::map<int, double>& round_losses);

// U[c][k] -= std_loss * sim(M_k, assigned) for every model k the client can
// run; other entries untouched.
void update_utilities(UtilityTable& table, const ClientRecord& client, ModelId assigned,
                      double std_loss, const std::vector<Model>& models);

// Seeds the child's column from the parent's for every client whose capacity
// admits the child.
void register_model(UtilityTable& table, const std::vector<Model>& models, const Model& child,
                    ModelId parent, const std::vector<ClientRecord>& clients);

} // namespace fedtrans

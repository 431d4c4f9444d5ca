#pragma once

#include <map>
#include <vector>

#include "fedtrans/model.hpp"

namespace fedtrans {

struct AggregationConfig {
    // Per-round decay base for cross-model influence. The desk-scale default
    // is 0.92: transformations here start near round 15, and 0.92^15 ~ 0.3
    // puts the cross-model weight at onset in the same regime a 0.98 decay
    // reaches at the hundreds-of-rounds onset of full-scale runs.
    double decay = 0.92;
    bool enable_soft = true; // off: independent per-model FedAvg
};

struct ClientUpdate {
    int client_id = 0;
    WeightSet weights;
    WeightSet grads;
    long long sample_count = 0;
    double loss = 0.0;
};

// Per-model participant updates for one round.
using RoundUpdates = std::map<ModelId, std::vector<ClientUpdate>>;

// Sample-count weighted mean. Accumulates count_i/total * w_i in list order;
// a single update is returned verbatim. This accumulation order is part of
// the reproducibility contract.
WeightSet fedavg(const std::vector<std::pair<const WeightSet*, long long>>& updates);
WeightSet fedavg_weights(const std::vector<ClientUpdate>& updates);
WeightSet fedavg_grads(const std::vector<ClientUpdate>& updates);

// Reshapes a descendant model's weights onto an ancestor (or the same) model:
// each target cell takes the leading block of the source cell it maps to via
// lineage. Valid because widening appends duplicated units after the
// originals. Unrelated models yield an empty set.
WeightSet crop_weights(const std::vector<Model>& models, const WeightSet& source, const Model& target);

// Expresses an ancestor's weights in a descendant's shape by replaying the
// recorded widen transfers along the lineage. Cells inserted after the
// ancestor's generation are absent from the result. The mapped set computes
// the same function as the input, so right after a warm transformation the
// mapped parent equals the child exactly.
WeightSet map_to_descendant(const std::vector<Model>& models, const WeightSet& source,
                            ModelId descendant);

// Similarity-weighted cross-model averaging. For model j, every model i <= j
// contributes its weights mapped into j's shape along the lineage, weighted
// by decay^round * sim(M_i, M_j) (the self term has weight 1). Cells without
// a counterpart in i (identity insertions after i) take no contribution from
// i. Each entry is a convex combination of the values covering it, models
// never read from larger ids, and as rounds grow every model converges to
// its own FedAvg mean.
std::map<ModelId, WeightSet> soft_aggregate(const std::vector<Model>& models,
                                            const std::map<ModelId, WeightSet>& per_model_weights,
                                            int round, const AggregationConfig& cfg);

// FedAvg per participating model (others keep their previous weights),
// then soft aggregation across models when enabled.
std::map<ModelId, WeightSet> update_weights(const std::vector<Model>& models,
                                            const std::map<ModelId, WeightSet>& previous,
                                            const RoundUpdates& round_updates, int round,
                                            const AggregationConfig& cfg);

} // namespace fedtrans

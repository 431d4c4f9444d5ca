#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedtrans/rng.hpp"
#include "fedtrans/tensor.hpp"

namespace fedtrans {

using CellId = int;
using ModelId = int;

enum class Activation { Relu, None };

enum class OriginKind { Initial, WidenedFrom, InsertedIdentity };

// How a cell came into being. Widened cells point at the cell they replaced;
// unchanged cells keep their id across models, so lineage is recoverable by
// asking whether the parent model still contains the id.
struct CellOrigin {
    OriginKind kind = OriginKind::Initial;
    CellId source = -1; // valid only for WidenedFrom

    static CellOrigin initial() { return {OriginKind::Initial, -1}; }
    static CellOrigin widened_from(CellId c) { return {OriginKind::WidenedFrom, c}; }
    static CellOrigin inserted() { return {OriginKind::InsertedIdentity, -1}; }
};

// A dense layer, the unit of transformation.
struct Cell {
    CellId id = 0;
    int in_dim = 0;
    int out_dim = 0;
    Activation activation = Activation::Relu;
    CellOrigin origin;
};

// Hands out run-unique cell ids. Owned by whoever builds models (the
// simulation, or a test); never global, so identical runs mint identical ids.
struct CellIdAllocator {
    CellId next = 0;
    CellId fresh() { return next++; }
};

// How one widen reshaped the weight tensors when this model was created:
// which source unit each widened row copies, and the per-entry fractions that
// divided the successor's weights among the copies. Ancestor weights are
// mapped into this model's shape by replaying these records, which keeps
// cross-model weight sharing aligned with the function-preserving transfer.
struct WidenTransfer {
    CellId old_cell = -1;
    CellId new_cell = -1;
    CellId successor = -1;
    std::vector<int> unit_src; // widened position -> source unit
    Tensor fraction;           // successor_out x widened_out, rows sum to 1 per source group
};

struct Model {
    ModelId id = 0;
    std::vector<Cell> cells;
    std::optional<ModelId> parent_id;
    // Matching degree of each cell against the parent model: 1 inherited
    // unchanged, param ratio if widened, 0 if inserted, -1 if weights lost.
    std::map<CellId, double> per_cell_mc;
    int created_round = 0;
    // Widen records of the transformation that created this model.
    std::vector<WidenTransfer> widen_transfers;

    bool has_cell(CellId id) const;
    const Cell& cell(CellId id) const;
    int cell_index(CellId id) const; // -1 if absent
    int input_dim() const { return cells.front().in_dim; }
    int output_dim() const { return cells.back().out_dim; }
};

// Per-model parameter storage, keyed by cell id.
struct CellWeights {
    Tensor weight; // out_dim x in_dim
    Tensor bias;   // out_dim
};

struct WeightSet {
    ModelId model_id = 0;
    std::map<CellId, CellWeights> cells;

    bool all_finite() const;
};

// Forward multiply-accumulates per sample: sum of in_dim * out_dim over cells.
long long mac_count(const Model& model);

long long param_count(const Cell& cell);
long long param_count(const Model& model);

// Throws DimensionError when structural invariants are violated
// (dimension chaining, final cell linear, weight shapes).
void validate_model(const Model& model);
void validate_weights(const Model& model, const WeightSet& weights);

// Dense chain: feature_dim -> hidden[0] -> ... -> class_count, ReLU on all
// but the final cell.
Model build_chain_model(int feature_dim, int class_count,
                        const std::vector<int>& hidden_dims, CellIdAllocator& ids);

// He-uniform weights (limit sqrt(6/fan_in)); biases uniform in +-1/sqrt(fan_in).
WeightSet init_weights(const Model& model, Rng& rng);

const char* to_string(Activation a);
const char* to_string(OriginKind k);

} // namespace fedtrans

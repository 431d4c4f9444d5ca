#pragma once

#include <deque>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "fedtrans/model.hpp"
#include "fedtrans/rng.hpp"

namespace fedtrans {

// Degree-of-convergence settings: the mean of the last `slope_count` training
// loss slopes, each taken over a `slope_step` observation span. A model is
// ready to transform when the value drops to `threshold` or below.
struct DocConfig {
    int slope_count = 10;     // how many consecutive slopes are averaged
    int slope_step = 5;       // observation span of each slope
    double threshold = 0.003; // transformation fires at doc <= threshold
};

// Loss history of the tracked (largest) model. Observations are appended only
// for rounds in which the model actually trained, so gaps in participation do
// not distort the slopes.
class DocTracker {
  public:
    DocTracker() = default;
    explicit DocTracker(DocConfig cfg) : cfg_(cfg) {}

    void push(double loss) { losses_.push_back(loss); }
    void reset() { losses_.clear(); }
    const DocConfig& config() const { return cfg_; }
    const std::vector<double>& history() const { return losses_; }

  private:
    DocConfig cfg_;
    std::vector<double> losses_;
};

// None until the history holds slope_count + slope_step observations.
// Positive values mean the loss is still falling.
std::optional<double> compute_doc(const DocTracker& tracker);

// Per-cell |grad| / |weight| scores over a sliding window of rounds.
struct ActivenessTracker {
    int window = 5;
    std::map<CellId, std::deque<double>> history;

    void reset() { history.clear(); }
};

// Pushes this round's scores (Frobenius norm of the aggregate weight gradient
// over the weight norm, biases excluded) and returns the per-cell mean over
// the buffered window. A zero-norm cell scores 0.
std::map<CellId, double> cell_activeness(ActivenessTracker& tracker, const Model& model,
                                         const WeightSet& round_grads, const WeightSet& weights);

// Cells whose activeness reaches threshold * max, excluding the final cell.
// Never empty: falls back to the most active non-final cell.
std::vector<CellId> select_cells(const Model& model,
                                 const std::map<CellId, double>& activeness, double threshold);

enum class CellOp { Widen, Deepen };

struct TransformConfig {
    double activeness_threshold = 0.9; // fraction of the max activeness
    int widen_factor = 2;
    int deepen_count = 1;
    // Next operation per cell, widen first; flipped after each application.
    // Tracking survives widening: the state moves to the replacement cell id.
    std::map<CellId, CellOp> next_op;

    CellOp op_for(CellId id) const {
        auto it = next_op.find(id);
        return it == next_op.end() ? CellOp::Widen : it->second;
    }
};

// Grows cell `cell_id` to factor * out_dim units. Original units keep their
// positions; the added units copy rows/biases of units sampled uniformly with
// replacement. Every successor column feeding a unit is divided by that
// unit's total replication count, so the network output is preserved.
std::pair<Model, WeightSet> widen_cell(const Model& model, const WeightSet& weights,
                                       CellId cell_id, int factor, Rng& rng, CellIdAllocator& ids);

// Deterministic variant: `added_units` lists the source unit of each new row.
// `split_weights`, when given (positive, shaped successor_out x widened_out),
// divides each successor weight among the copies of its source unit in
// proportion to the entries instead of evenly. Copies of a unit always sum
// back to the original weight, so the output is preserved exactly either way;
// per-entry uneven splits give duplicated units independent gradient
// directions immediately, where even splits leave them locked in identical
// trajectories.
std::pair<Model, WeightSet> widen_cell_with_units(const Model& model, const WeightSet& weights,
                                                  CellId cell_id, const std::vector<int>& added_units,
                                                  CellIdAllocator& ids,
                                                  const Tensor* split_weights = nullptr,
                                                  WidenTransfer* record = nullptr);

// Inserts `count` identity cells (identity weight, zero bias, ReLU) right
// after `cell_id`. Requires the cell to be ReLU-activated, since only then is
// ReLU(I x) = x guaranteed.
std::pair<Model, WeightSet> deepen_cell(const Model& model, const WeightSet& weights,
                                        CellId cell_id, int count, CellIdAllocator& ids);

struct TransformResult {
    Model child;
    WeightSet weights;
    std::vector<std::pair<CellId, CellOp>> ops; // parent cell id -> applied op
};

// Applies each selected cell's pending op to the parent (the current largest
// model), flips the op, records matching degrees, and transfers weights
// function-preservingly. Returns nullopt when the result would exceed
// max_capacity_macs. With warm_start=false the child is re-initialized from
// rng instead of inheriting. With random_cell=true the selection is replaced
// by one uniformly drawn non-final cell.
std::optional<TransformResult> transform_model(const Model& parent, const WeightSet& parent_weights,
                                               const std::map<CellId, double>& activeness,
                                               TransformConfig& cfg, CellIdAllocator& ids, Rng& rng,
                                               long long max_capacity_macs, ModelId child_id, int round,
                                               bool warm_start = true, bool random_cell = false);

// True iff doc is defined, doc <= threshold, and the cheapest single widen of
// the largest model still fits under max_capacity_macs.
bool should_transform(std::optional<double> doc, double threshold, const Model& largest,
                      long long max_capacity_macs, int widen_factor);

// MACs of the cheapest single-cell widen; nullopt when no cell can widen.
std::optional<long long> minimal_widen_macs(const Model& model, int widen_factor);

// Finds the cell of `ancestor` that `cell` (a cell of model `from`) descends
// from, walking the parent chain. nullopt for inserted cells.
std::optional<CellId> ancestor_cell_at(const std::vector<Model>& models, ModelId from,
                                       CellId cell, ModelId ancestor);

// Architectural similarity in [0, 1]: per-cell matching degrees composed
// multiplicatively along the lineage, averaged over the descendant's cells,
// clamped at zero. 1 for identical models, 0 for unrelated ones.
double model_similarity(const std::vector<Model>& models, ModelId a, ModelId b);

const char* to_string(CellOp op);

} // namespace fedtrans

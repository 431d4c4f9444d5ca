#include "fedtrans/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedtrans/errors.hpp"

namespace fedtrans {

std::optional<double> compute_doc(const DocTracker& tracker) {
    const DocConfig& cfg = tracker.config();
    const std::vector<double>& h = tracker.history();
    const int n = static_cast<int>(h.size());
    if (n < cfg.slope_count + cfg.slope_step) return std::nullopt;
    const int r = n - 1;
    double sum = 0.0;
    for (int k = 0; k < cfg.slope_count; ++k) {
        sum += (h[static_cast<std::size_t>(r - k - cfg.slope_step)] - h[static_cast<std::size_t>(r - k)]) /
               cfg.slope_step;
    }
    return sum / cfg.slope_count;
}

std::map<CellId, double> cell_activeness(ActivenessTracker& tracker, const Model& model,
                                         const WeightSet& round_grads, const WeightSet& weights) {
    for (const Cell& c : model.cells) {
        const Tensor& g = round_grads.cells.at(c.id).weight;
        const Tensor& w = weights.cells.at(c.id).weight;
        double gn = 0.0, wn = 0.0;
        for (double v : g.data) gn += v * v;
        for (double v : w.data) wn += v * v;
        gn = std::sqrt(gn);
        wn = std::sqrt(wn);
        double score = wn > 0.0 ? gn / wn : 0.0;
        auto& buf = tracker.history[c.id];
        buf.push_back(score);
        while (static_cast<int>(buf.size()) > tracker.window) buf.pop_front();
    }
    std::map<CellId, double> means;
    for (const Cell& c : model.cells) {
        const auto& buf = tracker.history.at(c.id);
        double sum = 0.0;
        for (double v : buf) sum += v;
        means[c.id] = buf.empty() ? 0.0 : sum / static_cast<double>(buf.size());
    }
    return means;
}

std::vector<CellId> select_cells(const Model& model,
                                 const std::map<CellId, double>& activeness, double threshold) {
    if (activeness.empty()) throw DimensionError("select_cells: empty activeness map");
    if (model.cells.size() < 2) throw DimensionError("select_cells: model has no transformable cell");
    double max_act = 0.0;
    for (const auto& [id, a] : activeness) max_act = std::max(max_act, a);

    const CellId final_id = model.cells.back().id;
    std::vector<CellId> picked;
    for (const Cell& c : model.cells) {
        if (c.id == final_id) continue;
        auto it = activeness.find(c.id);
        if (it == activeness.end()) continue;
        if (it->second >= threshold * max_act) picked.push_back(c.id);
    }
    if (picked.empty()) {
        // Threshold excluded everything (the max sat on the final cell);
        // fall back to the most active non-final cell, lowest index on ties.
        CellId best = -1;
        double best_act = -1.0;
        for (const Cell& c : model.cells) {
            if (c.id == final_id) continue;
            auto it = activeness.find(c.id);
            double a = it == activeness.end() ? 0.0 : it->second;
            if (a > best_act) {
                best_act = a;
                best = c.id;
            }
        }
        picked.push_back(best);
    }
    return picked;
}

std::pair<Model, WeightSet> widen_cell(const Model& model, const WeightSet& weights,
                                       CellId cell_id, int factor, Rng& rng, CellIdAllocator& ids) {
    const Cell& c = model.cell(cell_id);
    if (factor < 2) throw DimensionError("widen factor must be >= 2");
    std::vector<int> added(static_cast<std::size_t>((factor - 1) * c.out_dim));
    for (int& u : added) u = rng.uniform_int(c.out_dim);
    return widen_cell_with_units(model, weights, cell_id, added, ids);
}

std::pair<Model, WeightSet> widen_cell_with_units(const Model& model, const WeightSet& weights,
                                                  CellId cell_id, const std::vector<int>& added_units,
                                                  CellIdAllocator& ids,
                                                  const Tensor* split_weights, WidenTransfer* record) {
    const int idx = model.cell_index(cell_id);
    if (idx < 0) throw DimensionError("widen: no such cell " + std::to_string(cell_id));
    if (idx == static_cast<int>(model.cells.size()) - 1) {
        throw DimensionError("widen: cannot widen the final cell (fixed output width)");
    }
    const Cell& old_cell = model.cells[static_cast<std::size_t>(idx)];
    const Cell& old_succ = model.cells[static_cast<std::size_t>(idx) + 1];
    const int old_out = old_cell.out_dim;
    const int new_out = old_out + static_cast<int>(added_units.size());
    for (int u : added_units) {
        if (u < 0 || u >= old_out) throw DimensionError("widen: sampled unit out of range");
    }

    // Replication counts include the retained original.
    std::vector<int> repl(static_cast<std::size_t>(old_out), 1);
    for (int u : added_units) repl[static_cast<std::size_t>(u)]++;
    // unit_src[j] = original unit that position j in the widened cell copies.
    std::vector<int> unit_src(static_cast<std::size_t>(new_out));
    for (int j = 0; j < old_out; ++j) unit_src[static_cast<std::size_t>(j)] = j;
    for (std::size_t k = 0; k < added_units.size(); ++k) {
        unit_src[static_cast<std::size_t>(old_out) + k] = added_units[k];
    }

    Model out_model = model;
    Cell widened = old_cell;
    widened.id = ids.fresh();
    widened.out_dim = new_out;
    widened.origin = CellOrigin::widened_from(old_cell.id);
    out_model.cells[static_cast<std::size_t>(idx)] = widened;
    out_model.cells[static_cast<std::size_t>(idx) + 1].in_dim = new_out;

    WeightSet out_w;
    out_w.model_id = weights.model_id;
    for (const auto& [id, cw] : weights.cells) {
        if (id != old_cell.id && id != old_succ.id) out_w.cells.emplace(id, cw);
    }

    const CellWeights& oldw = weights.cells.at(old_cell.id);
    CellWeights neww;
    neww.weight = Tensor::matrix(new_out, old_cell.in_dim);
    neww.bias = Tensor::vec(new_out);
    for (int j = 0; j < new_out; ++j) {
        const int src = unit_src[static_cast<std::size_t>(j)];
        for (int k = 0; k < old_cell.in_dim; ++k) neww.weight.at(j, k) = oldw.weight.at(src, k);
        neww.bias.at(j) = oldw.bias.at(src);
    }
    out_w.cells.emplace(widened.id, std::move(neww));

    // Each successor weight reading a duplicated unit is divided among the
    // unit's copies: evenly by default, or per entry by the split weights.
    // Copies always sum back to the original weight, so the cell's
    // contribution to the network is unchanged.
    if (split_weights && (split_weights->rows() != old_succ.out_dim || split_weights->cols() != new_out)) {
        throw DimensionError("widen: split weights must be successor_out x widened_out");
    }
    Tensor fraction = Tensor::matrix(old_succ.out_dim, new_out);
    for (int r = 0; r < old_succ.out_dim; ++r) {
        std::vector<double> group_total(static_cast<std::size_t>(old_out), 0.0);
        if (split_weights) {
            for (int j = 0; j < new_out; ++j) {
                const double sw = split_weights->at(r, j);
                if (sw <= 0.0) throw DimensionError("widen: split weights must be positive");
                group_total[static_cast<std::size_t>(unit_src[static_cast<std::size_t>(j)])] += sw;
            }
        }
        for (int j = 0; j < new_out; ++j) {
            const int src = unit_src[static_cast<std::size_t>(j)];
            fraction.at(r, j) = split_weights
                                    ? split_weights->at(r, j) / group_total[static_cast<std::size_t>(src)]
                                    : 1.0 / repl[static_cast<std::size_t>(src)];
        }
    }
    const CellWeights& oldsw = weights.cells.at(old_succ.id);
    CellWeights newsw;
    newsw.weight = Tensor::matrix(old_succ.out_dim, new_out);
    newsw.bias = oldsw.bias;
    for (int r = 0; r < old_succ.out_dim; ++r) {
        for (int j = 0; j < new_out; ++j) {
            newsw.weight.at(r, j) =
                oldsw.weight.at(r, unit_src[static_cast<std::size_t>(j)]) * fraction.at(r, j);
        }
    }
    out_w.cells.emplace(old_succ.id, std::move(newsw));

    if (record) {
        record->old_cell = old_cell.id;
        record->new_cell = widened.id;
        record->successor = old_succ.id;
        record->unit_src = unit_src;
        record->fraction = std::move(fraction);
    }
    validate_model(out_model);
    validate_weights(out_model, out_w);
    return {std::move(out_model), std::move(out_w)};
}

std::pair<Model, WeightSet> deepen_cell(const Model& model, const WeightSet& weights,
                                        CellId cell_id, int count, CellIdAllocator& ids) {
    const int idx = model.cell_index(cell_id);
    if (idx < 0) throw DimensionError("deepen: no such cell " + std::to_string(cell_id));
    if (count < 1) throw DimensionError("deepen count must be >= 1");
    const Cell& c = model.cells[static_cast<std::size_t>(idx)];
    if (c.activation != Activation::Relu) {
        throw DimensionError("deepen: identity insertion after a linear cell is not output-preserving");
    }
    Model out_model = model;
    WeightSet out_w = weights;
    const int d = c.out_dim;
    for (int k = 0; k < count; ++k) {
        Cell ins{ids.fresh(), d, d, Activation::Relu, CellOrigin::inserted()};
        out_model.cells.insert(out_model.cells.begin() + idx + 1 + k, ins);
        CellWeights cw;
        cw.weight = Tensor::identity(d);
        cw.bias = Tensor::vec(d);
        out_w.cells.emplace(ins.id, std::move(cw));
    }
    validate_model(out_model);
    validate_weights(out_model, out_w);
    return {std::move(out_model), std::move(out_w)};
}

std::optional<long long> minimal_widen_macs(const Model& model, int widen_factor) {
    const long long base = mac_count(model);
    std::optional<long long> best;
    for (std::size_t i = 0; i + 1 < model.cells.size(); ++i) {
        const Cell& c = model.cells[i];
        const Cell& succ = model.cells[i + 1];
        const long long grown = static_cast<long long>(c.in_dim) * c.out_dim * widen_factor +
                                static_cast<long long>(c.out_dim) * widen_factor * succ.out_dim;
        const long long old_pair = static_cast<long long>(c.in_dim) * c.out_dim +
                                   static_cast<long long>(c.out_dim) * succ.out_dim;
        const long long macs = base - old_pair + grown;
        if (!best || macs < *best) best = macs;
    }
    return best;
}

bool should_transform(std::optional<double> doc, double threshold, const Model& largest,
                      long long max_capacity_macs, int widen_factor) {
    if (!doc.has_value()) return false;
    if (*doc > threshold) return false;
    auto macs = minimal_widen_macs(largest, widen_factor);
    return macs.has_value() && *macs <= max_capacity_macs;
}

std::optional<TransformResult> transform_model(const Model& parent, const WeightSet& parent_weights,
                                               const std::map<CellId, double>& activeness,
                                               TransformConfig& cfg, CellIdAllocator& ids, Rng& rng,
                                               long long max_capacity_macs, ModelId child_id, int round,
                                               bool warm_start, bool random_cell) {
    std::vector<CellId> selected;
    if (random_cell) {
        const int non_final = static_cast<int>(parent.cells.size()) - 1;
        if (non_final < 1) throw DimensionError("transform: no transformable cell");
        selected.push_back(parent.cells[static_cast<std::size_t>(rng.uniform_int(non_final))].id);
    } else {
        selected = select_cells(parent, activeness, cfg.activeness_threshold);
    }

    Model child = parent;
    child.widen_transfers.clear();
    WeightSet child_w = parent_weights;
    std::vector<std::pair<CellId, CellOp>> ops;
    std::map<CellId, CellId> widened_to_parent; // new cell id -> parent cell id
    std::vector<CellId> inserted;

    for (CellId cell : selected) {
        const CellOp op = cfg.op_for(cell);
        if (op == CellOp::Widen) {
            const std::size_t idx = static_cast<std::size_t>(child.cell_index(cell));
            const Cell& cur = child.cells[idx];
            const Cell& succ = child.cells[idx + 1];
            std::vector<int> added(static_cast<std::size_t>((cfg.widen_factor - 1) * cur.out_dim));
            for (int& u : added) u = rng.uniform_int(cur.out_dim);
            // Uneven per-entry successor splits keep the transfer function-
            // preserving while giving each copy of a unit its own gradient
            // direction from the first step.
            Tensor splits = Tensor::matrix(succ.out_dim, cur.out_dim + static_cast<int>(added.size()));
            for (double& s : splits.data) s = 0.25 + rng.uniform();
            WidenTransfer rec;
            auto [m, w] = widen_cell_with_units(child, child_w, cell, added, ids, &splits, &rec);
            child = std::move(m);
            child_w = std::move(w);
            child.widen_transfers.push_back(std::move(rec));
            const CellId new_id = child.cells[idx].id;
            widened_to_parent[new_id] = cell;
            // Alternation state follows the cell through its id change.
            cfg.next_op.erase(cell);
            cfg.next_op[new_id] = CellOp::Deepen;
        } else {
            const std::size_t idx = static_cast<std::size_t>(child.cell_index(cell));
            auto [m, w] = deepen_cell(child, child_w, cell, cfg.deepen_count, ids);
            for (int k = 0; k < cfg.deepen_count; ++k) inserted.push_back(m.cells[idx + 1 + static_cast<std::size_t>(k)].id);
            child = std::move(m);
            child_w = std::move(w);
            cfg.next_op[cell] = CellOp::Widen;
        }
        ops.emplace_back(cell, op);
    }

    if (mac_count(child) > max_capacity_macs) return std::nullopt;

    child.id = child_id;
    child.parent_id = parent.id;
    child.created_round = round;
    child.per_cell_mc.clear();
    for (const Cell& c : child.cells) {
        auto wit = widened_to_parent.find(c.id);
        if (wit != widened_to_parent.end()) {
            const Cell& pc = parent.cell(wit->second);
            child.per_cell_mc[c.id] =
                static_cast<double>(param_count(pc)) / static_cast<double>(param_count(c));
        } else if (std::find(inserted.begin(), inserted.end(), c.id) != inserted.end()) {
            child.per_cell_mc[c.id] = 0.0;
        } else {
            child.per_cell_mc[c.id] = 1.0;
        }
    }
    child_w.model_id = child_id;

    if (!warm_start) {
        child_w = init_weights(child, rng);
        child_w.model_id = child_id;
        // Without the warm transfer no cell inherits anything: re-initialized
        // cells lose their parent weights (matching degree -1); insertions
        // stay at 0. Similarity to every ancestor collapses to zero, so the
        // re-initialized model neither borrows weights nor utility signals.
        for (auto& [cid, mc] : child.per_cell_mc) {
            if (mc != 0.0) mc = -1.0;
        }
    }

    TransformResult res;
    res.child = std::move(child);
    res.weights = std::move(child_w);
    res.ops = std::move(ops);
    return res;
}

std::optional<CellId> ancestor_cell_at(const std::vector<Model>& models, ModelId from,
                                       CellId cell, ModelId ancestor) {
    ModelId cur = from;
    CellId cur_cell = cell;
    while (cur != ancestor) {
        const Model& m = models[static_cast<std::size_t>(cur)];
        if (!m.parent_id.has_value()) return std::nullopt; // ran past the root: unrelated
        const Model& pm = models[static_cast<std::size_t>(*m.parent_id)];
        if (!pm.has_cell(cur_cell)) {
            const Cell& c = m.cell(cur_cell);
            if (c.origin.kind == OriginKind::WidenedFrom) {
                cur_cell = c.origin.source;
            } else {
                return std::nullopt; // inserted here, no ancestor
            }
        }
        cur = *m.parent_id;
    }
    return cur_cell;
}

namespace {

bool is_ancestor(const std::vector<Model>& models, ModelId anc, ModelId desc) {
    ModelId cur = desc;
    while (true) {
        if (cur == anc) return true;
        const auto& p = models[static_cast<std::size_t>(cur)].parent_id;
        if (!p.has_value()) return false;
        cur = *p;
    }
}

// Product of per-generation matching degrees for one cell of the descendant.
// Inserted (0) and lost (-1) generations end the trace: nothing was inherited
// across them, so deeper generations cannot contribute credit (and two lost
// generations must not cancel into a positive score).
double composed_mc(const std::vector<Model>& models, ModelId desc, CellId cell, ModelId anc) {
    double acc = 1.0;
    ModelId cur = desc;
    CellId cur_cell = cell;
    while (cur != anc) {
        const Model& m = models[static_cast<std::size_t>(cur)];
        const Model& pm = models[static_cast<std::size_t>(*m.parent_id)];
        auto it = m.per_cell_mc.find(cur_cell);
        const double mc = it == m.per_cell_mc.end() ? 1.0 : it->second;
        acc *= mc;
        if (mc <= 0.0) return acc;
        if (!pm.has_cell(cur_cell)) {
            const Cell& c = m.cell(cur_cell);
            if (c.origin.kind != OriginKind::WidenedFrom) {
                return acc; // born here without inherited weights; nothing above to trace
            }
            cur_cell = c.origin.source;
        }
        cur = *m.parent_id;
    }
    return acc;
}

} // namespace

double model_similarity(const std::vector<Model>& models, ModelId a, ModelId b) {
    if (a == b) return 1.0;
    ModelId anc, desc;
    if (is_ancestor(models, a, b)) {
        anc = a;
        desc = b;
    } else if (is_ancestor(models, b, a)) {
        anc = b;
        desc = a;
    } else {
        return 0.0; // no lineage path
    }
    const Model& d = models[static_cast<std::size_t>(desc)];
    double sum = 0.0;
    for (const Cell& c : d.cells) sum += composed_mc(models, desc, c.id, anc);
    const double mean = sum / static_cast<double>(d.cells.size());
    return std::max(0.0, mean);
}

const char* to_string(CellOp op) {
    return op == CellOp::Widen ? "widen" : "deepen";
}

} // namespace fedtrans

#include "fedtrans/aggregator.hpp"

#include <cmath>
#include <string>

#include "fedtrans/errors.hpp"
#include "fedtrans/transformer.hpp"

namespace fedtrans {

WeightSet fedavg(const std::vector<std::pair<const WeightSet*, long long>>& updates) {
    if (updates.empty()) throw DimensionError("fedavg over no updates");
    long long total = 0;
    for (const auto& [w, n] : updates) {
        if (n <= 0) throw DimensionError("fedavg: sample counts must be positive");
        total += n;
    }
    if (updates.size() == 1) return *updates.front().first;
    WeightSet out = *updates.front().first;
    const double r0 = static_cast<double>(updates.front().second) / static_cast<double>(total);
    for (auto& [id, cw] : out.cells) {
        for (double& v : cw.weight.data) v *= r0;
        for (double& v : cw.bias.data) v *= r0;
    }
    for (std::size_t i = 1; i < updates.size(); ++i) {
        const WeightSet& w = *updates[i].first;
        const double r = static_cast<double>(updates[i].second) / static_cast<double>(total);
        for (auto& [id, cw] : out.cells) {
            auto it = w.cells.find(id);
            if (it == w.cells.end() || !it->second.weight.same_shape(cw.weight)) {
                throw DimensionError("fedavg: update shapes differ on cell " + std::to_string(id));
            }
            for (std::size_t k = 0; k < cw.weight.data.size(); ++k) cw.weight.data[k] += r * it->second.weight.data[k];
            for (std::size_t k = 0; k < cw.bias.data.size(); ++k) cw.bias.data[k] += r * it->second.bias.data[k];
        }
    }
    return out;
}

WeightSet fedavg_weights(const std::vector<ClientUpdate>& updates) {
    std::vector<std::pair<const WeightSet*, long long>> v;
    v.reserve(updates.size());
    for (const ClientUpdate& u : updates) v.emplace_back(&u.weights, u.sample_count);
    return fedavg(v);
}

WeightSet fedavg_grads(const std::vector<ClientUpdate>& updates) {
    std::vector<std::pair<const WeightSet*, long long>> v;
    v.reserve(updates.size());
    for (const ClientUpdate& u : updates) v.emplace_back(&u.grads, u.sample_count);
    return fedavg(v);
}

WeightSet crop_weights(const std::vector<Model>& models, const WeightSet& source, const Model& target) {
    const Model& src_model = models.at(static_cast<std::size_t>(source.model_id));
    WeightSet out;
    out.model_id = target.id;
    for (const Cell& tc : target.cells) {
        // Find the source cell descending from tc.
        CellId matched = -1;
        for (const Cell& sc : src_model.cells) {
            auto anc = ancestor_cell_at(models, src_model.id, sc.id, target.id);
            if (anc.has_value() && *anc == tc.id) {
                matched = sc.id;
                break;
            }
        }
        if (matched < 0) continue;
        const CellWeights& sw = source.cells.at(matched);
        if (sw.weight.rows() < tc.out_dim || sw.weight.cols() < tc.in_dim) {
            throw DimensionError("crop: source cell smaller than target cell " + std::to_string(tc.id));
        }
        CellWeights cw;
        cw.weight = Tensor::matrix(tc.out_dim, tc.in_dim);
        cw.bias = Tensor::vec(tc.out_dim);
        for (int r = 0; r < tc.out_dim; ++r) {
            for (int c = 0; c < tc.in_dim; ++c) cw.weight.at(r, c) = sw.weight.at(r, c);
            cw.bias.at(r) = sw.bias.at(r);
        }
        out.cells.emplace(tc.id, std::move(cw));
    }
    return out;
}

WeightSet map_to_descendant(const std::vector<Model>& models, const WeightSet& source,
                            ModelId descendant) {
    // Collect the lineage path source -> descendant.
    std::vector<ModelId> path;
    ModelId cur = descendant;
    while (cur != source.model_id) {
        path.push_back(cur);
        const auto& p = models.at(static_cast<std::size_t>(cur)).parent_id;
        if (!p.has_value()) return WeightSet{}; // unrelated
        cur = *p;
    }

    WeightSet mapped = source;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        const Model& gen = models[static_cast<std::size_t>(*it)];
        for (const WidenTransfer& wt : gen.widen_transfers) {
            const int new_out = static_cast<int>(wt.unit_src.size());
            auto old_it = mapped.cells.find(wt.old_cell);
            if (old_it != mapped.cells.end()) {
                CellWeights grown;
                grown.weight = Tensor::matrix(new_out, old_it->second.weight.cols());
                grown.bias = Tensor::vec(new_out);
                for (int j = 0; j < new_out; ++j) {
                    const int src = wt.unit_src[static_cast<std::size_t>(j)];
                    for (int c = 0; c < old_it->second.weight.cols(); ++c) {
                        grown.weight.at(j, c) = old_it->second.weight.at(src, c);
                    }
                    grown.bias.at(j) = old_it->second.bias.at(src);
                }
                mapped.cells.erase(old_it);
                mapped.cells.emplace(wt.new_cell, std::move(grown));
            }
            auto succ_it = mapped.cells.find(wt.successor);
            if (succ_it != mapped.cells.end()) {
                const Tensor& old_w = succ_it->second.weight;
                Tensor grown = Tensor::matrix(old_w.rows(), new_out);
                for (int r = 0; r < old_w.rows(); ++r) {
                    for (int j = 0; j < new_out; ++j) {
                        grown.at(r, j) =
                            old_w.at(r, wt.unit_src[static_cast<std::size_t>(j)]) * wt.fraction.at(r, j);
                    }
                }
                succ_it->second.weight = std::move(grown);
            }
        }
    }
    mapped.model_id = descendant;
    return mapped;
}

std::map<ModelId, WeightSet> soft_aggregate(const std::vector<Model>& models,
                                            const std::map<ModelId, WeightSet>& per_model_weights,
                                            int round, const AggregationConfig& cfg) {
    std::map<ModelId, WeightSet> out;
    const double cross = std::pow(cfg.decay, round);
    for (const Model& mj : models) {
        const WeightSet& own = per_model_weights.at(mj.id);
        std::map<CellId, CellWeights> num;
        std::map<CellId, std::pair<Tensor, Tensor>> den; // per-entry normalizers
        for (const Cell& cell : mj.cells) {
            CellWeights n;
            n.weight = Tensor::matrix(cell.out_dim, cell.in_dim);
            n.bias = Tensor::vec(cell.out_dim);
            num.emplace(cell.id, std::move(n));
            den.emplace(cell.id, std::make_pair(Tensor::matrix(cell.out_dim, cell.in_dim),
                                                Tensor::vec(cell.out_dim)));
        }

        // Strictly smaller models flow in through the lineage mapping;
        // larger models never do.
        for (const Model& mi : models) {
            if (mi.id >= mj.id) break;
            const double sim = model_similarity(models, mi.id, mj.id);
            if (sim <= 0.0) continue;
            WeightSet mapped = map_to_descendant(models, per_model_weights.at(mi.id), mj.id);
            if (mapped.cells.empty()) continue;
            const double g = cross * sim;
            for (auto& [cell_id, cw] : mapped.cells) {
                auto nit = num.find(cell_id);
                if (nit == num.end()) continue;
                auto& [den_w, den_b] = den.at(cell_id);
                for (std::size_t k = 0; k < cw.weight.data.size(); ++k) {
                    nit->second.weight.data[k] += g * cw.weight.data[k];
                    den_w.data[k] += g;
                }
                for (std::size_t k = 0; k < cw.bias.data.size(); ++k) {
                    nit->second.bias.data[k] += g * cw.bias.data[k];
                    den_b.data[k] += g;
                }
            }
        }

        WeightSet next;
        next.model_id = mj.id;
        for (const Cell& cell : mj.cells) {
            const CellWeights& base = own.cells.at(cell.id);
            CellWeights& n = num.at(cell.id);
            auto& [den_w, den_b] = den.at(cell.id);
            for (std::size_t k = 0; k < n.weight.data.size(); ++k) {
                n.weight.data[k] = (n.weight.data[k] + base.weight.data[k]) / (den_w.data[k] + 1.0);
            }
            for (std::size_t k = 0; k < n.bias.data.size(); ++k) {
                n.bias.data[k] = (n.bias.data[k] + base.bias.data[k]) / (den_b.data[k] + 1.0);
            }
            next.cells.emplace(cell.id, std::move(n));
        }
        out.emplace(mj.id, std::move(next));
    }
    return out;
}

std::map<ModelId, WeightSet> update_weights(const std::vector<Model>& models,
                                            const std::map<ModelId, WeightSet>& previous,
                                            const RoundUpdates& round_updates, int round,
                                            const AggregationConfig& cfg) {
    std::map<ModelId, WeightSet> averaged;
    for (const Model& m : models) {
        auto it = round_updates.find(m.id);
        if (it == round_updates.end() || it->second.empty()) {
            averaged.emplace(m.id, previous.at(m.id));
        } else {
            averaged.emplace(m.id, fedavg_weights(it->second));
        }
    }
    if (!cfg.enable_soft) return averaged;
    return soft_aggregate(models, averaged, round, cfg);
}

} // namespace fedtrans

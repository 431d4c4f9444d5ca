#include "fedtrans/model.hpp"

#include <cmath>
#include <string>

#include "fedtrans/errors.hpp"

namespace fedtrans {

bool Model::has_cell(CellId id) const {
    return cell_index(id) >= 0;
}

const Cell& Model::cell(CellId id) const {
    int idx = cell_index(id);
    if (idx < 0) throw DimensionError("model " + std::to_string(this->id) + " has no cell " + std::to_string(id));
    return cells[static_cast<std::size_t>(idx)];
}

int Model::cell_index(CellId id) const {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

bool WeightSet::all_finite() const {
    for (const auto& [id, cw] : cells) {
        if (!cw.weight.all_finite() || !cw.bias.all_finite()) return false;
    }
    return true;
}

long long mac_count(const Model& model) {
    long long macs = 0;
    for (const Cell& c : model.cells) {
        macs += static_cast<long long>(c.in_dim) * c.out_dim;
    }
    return macs;
}

long long param_count(const Cell& cell) {
    return static_cast<long long>(cell.in_dim) * cell.out_dim + cell.out_dim;
}

long long param_count(const Model& model) {
    long long n = 0;
    for (const Cell& c : model.cells) n += param_count(c);
    return n;
}

void validate_model(const Model& model) {
    if (model.cells.empty()) throw DimensionError("model has no cells");
    for (std::size_t i = 0; i + 1 < model.cells.size(); ++i) {
        if (model.cells[i].out_dim != model.cells[i + 1].in_dim) {
            throw DimensionError("cell " + std::to_string(model.cells[i].id) + " out_dim " +
                                 std::to_string(model.cells[i].out_dim) + " != next in_dim " +
                                 std::to_string(model.cells[i + 1].in_dim));
        }
    }
    if (model.cells.back().activation != Activation::None) {
        throw DimensionError("final cell must have linear activation");
    }
    for (const Cell& c : model.cells) {
        if (c.in_dim <= 0 || c.out_dim <= 0) throw DimensionError("cell with non-positive dims");
    }
}

void validate_weights(const Model& model, const WeightSet& weights) {
    if (weights.cells.size() != model.cells.size()) {
        throw DimensionError("weight set covers " + std::to_string(weights.cells.size()) +
                             " cells, model has " + std::to_string(model.cells.size()));
    }
    for (const Cell& c : model.cells) {
        auto it = weights.cells.find(c.id);
        if (it == weights.cells.end()) throw DimensionError("missing weights for cell " + std::to_string(c.id));
        const CellWeights& cw = it->second;
        if (cw.weight.rows() != c.out_dim || cw.weight.cols() != c.in_dim) {
            throw DimensionError("weight shape mismatch on cell " + std::to_string(c.id));
        }
        if (cw.bias.rows() != c.out_dim || cw.bias.shape.size() != 1) {
            throw DimensionError("bias shape mismatch on cell " + std::to_string(c.id));
        }
    }
}

Model build_chain_model(int feature_dim, int class_count,
                        const std::vector<int>& hidden_dims, CellIdAllocator& ids) {
    if (feature_dim <= 0 || class_count < 2) throw DimensionError("need feature_dim > 0 and class_count >= 2");
    if (hidden_dims.empty()) throw DimensionError("need at least one hidden cell");
    Model m;
    int in = feature_dim;
    for (int h : hidden_dims) {
        if (h <= 0) throw DimensionError("hidden dim must be positive");
        m.cells.push_back(Cell{ids.fresh(), in, h, Activation::Relu, CellOrigin::initial()});
        in = h;
    }
    m.cells.push_back(Cell{ids.fresh(), in, class_count, Activation::None, CellOrigin::initial()});
    validate_model(m);
    return m;
}

WeightSet init_weights(const Model& model, Rng& rng) {
    WeightSet w;
    w.model_id = model.id;
    for (const Cell& c : model.cells) {
        CellWeights cw;
        cw.weight = Tensor::matrix(c.out_dim, c.in_dim);
        cw.bias = Tensor::vec(c.out_dim);
        const double limit = std::sqrt(6.0 / c.in_dim);
        for (double& v : cw.weight.data) v = rng.uniform(-limit, limit);
        // Small nonzero biases keep pre-activations off the exact ReLU kink
        // even when a whole upstream layer is inactive for a sample.
        const double bias_limit = 1.0 / std::sqrt(static_cast<double>(c.in_dim));
        for (double& v : cw.bias.data) v = rng.uniform(-bias_limit, bias_limit);
        w.cells.emplace(c.id, std::move(cw));
    }
    return w;
}

const char* to_string(Activation a) {
    return a == Activation::Relu ? "relu" : "none";
}

const char* to_string(OriginKind k) {
    switch (k) {
        case OriginKind::Initial: return "initial";
        case OriginKind::WidenedFrom: return "widened";
        case OriginKind::InsertedIdentity: return "inserted";
    }
    return "?";
}

} // namespace fedtrans

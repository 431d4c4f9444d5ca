#pragma once

#include <cmath>
#include <vector>

#include "fedtrans/data.hpp"
#include "fedtrans/model.hpp"
#include "fedtrans/nn.hpp"

namespace testutil {

using namespace fedtrans;

// feature_dim -> hidden... -> classes chain with ids from the allocator.
inline Model chain(CellIdAllocator& ids, int feature_dim, std::vector<int> hidden, int classes) {
    return build_chain_model(feature_dim, classes, hidden, ids);
}

inline WeightSet zero_weights(const Model& m) {
    WeightSet w;
    w.model_id = m.id;
    for (const Cell& c : m.cells) {
        CellWeights cw;
        cw.weight = Tensor::matrix(c.out_dim, c.in_dim);
        cw.bias = Tensor::vec(c.out_dim);
        w.cells.emplace(c.id, std::move(cw));
    }
    return w;
}

inline void set_cell(WeightSet& w, CellId id, const std::vector<std::vector<double>>& rows,
                     const std::vector<double>& bias) {
    CellWeights& cw = w.cells.at(id);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            cw.weight.at(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
        }
    }
    for (std::size_t r = 0; r < bias.size(); ++r) cw.bias.at(static_cast<int>(r)) = bias[r];
}

inline Batch single_input(const std::vector<double>& x, int label = 0) {
    Batch b;
    b.features = Tensor::matrix(1, static_cast<int>(x.size()));
    for (std::size_t k = 0; k < x.size(); ++k) b.features.at(0, static_cast<int>(k)) = x[k];
    b.labels = {label};
    return b;
}

inline Batch random_batch(Rng& rng, int n, int dim, int classes) {
    Batch b;
    b.features = Tensor::matrix(n, dim);
    for (double& v : b.features.data) v = rng.uniform(-1.0, 1.0);
    b.labels.resize(static_cast<std::size_t>(n));
    for (int& y : b.labels) y = rng.uniform_int(classes);
    return b;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double mx = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) mx = std::max(mx, std::abs(a.data[i] - b.data[i]));
    return mx;
}

inline bool bitwise_equal(const WeightSet& a, const WeightSet& b) {
    if (a.cells.size() != b.cells.size()) return false;
    for (const auto& [id, cw] : a.cells) {
        auto it = b.cells.find(id);
        if (it == b.cells.end()) return false;
        if (cw.weight.data != it->second.weight.data) return false;
        if (cw.bias.data != it->second.bias.data) return false;
    }
    return true;
}

// Independent loss evaluation for finite differences: forward() plus a local
// cross-entropy, no reuse of the backprop path.
inline double eval_loss(const Model& m, const WeightSet& w, const Batch& batch) {
    Tensor logits = forward(m, w, batch);
    double total = 0.0;
    for (int b = 0; b < batch.size(); ++b) {
        double mx = logits.at(b, 0);
        for (int k = 1; k < logits.cols(); ++k) mx = std::max(mx, logits.at(b, k));
        double sum = 0.0;
        for (int k = 0; k < logits.cols(); ++k) sum += std::exp(logits.at(b, k) - mx);
        total += std::log(sum) - (logits.at(b, batch.labels[static_cast<std::size_t>(b)]) - mx);
    }
    return total / batch.size();
}

struct FdCheck {
    int total = 0;
    int within = 0;
    double worst = 0.0;
};

// Central finite differences with the given step against analytic gradients.
inline FdCheck finite_difference_check(const Model& m, WeightSet w, const Batch& batch,
                                       double step, double rel_tol) {
    FdCheck res;
    LossGrads lg = loss_and_grads(m, w, batch);
    for (auto& [id, cw] : w.cells) {
        auto probe = [&](Tensor& t, const Tensor& analytic) {
            for (std::size_t i = 0; i < t.data.size(); ++i) {
                const double orig = t.data[i];
                t.data[i] = orig + step;
                const double up = eval_loss(m, w, batch);
                t.data[i] = orig - step;
                const double down = eval_loss(m, w, batch);
                t.data[i] = orig;
                const double fd = (up - down) / (2.0 * step);
                const double a = analytic.data[i];
                const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
                res.total++;
                res.worst = std::max(res.worst, rel);
                if (rel <= rel_tol) res.within++;
            }
        };
        probe(cw.weight, lg.grads.cells.at(id).weight);
        probe(cw.bias, lg.grads.cells.at(id).bias);
    }
    return res;
}

} // namespace testutil

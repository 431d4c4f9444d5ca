#include "fedtrans/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedtrans/errors.hpp"

namespace fedtrans {

namespace {

// z = a W^T + b for one cell; a is batch x in, result batch x out.
Tensor affine(const Tensor& a, const CellWeights& cw) {
    const int batch = a.rows();
    const int in = a.cols();
    const int out = cw.weight.rows();
    Tensor z = Tensor::matrix(batch, out);
    for (int b = 0; b < batch; ++b) {
        for (int u = 0; u < out; ++u) {
            double acc = 0.0;
            for (int k = 0; k < in; ++k) acc += a.at(b, k) * cw.weight.at(u, k);
            z.at(b, u) = acc + cw.bias.at(u);
        }
    }
    return z;
}

Tensor relu(const Tensor& z) {
    Tensor a = z;
    for (double& v : a.data) v = v > 0.0 ? v : 0.0;
    return a;
}

void check_batch(const Model& model, const Batch& batch) {
    if (batch.size() < 1) throw DimensionError("empty batch");
    if (batch.features.rows() != batch.size() || batch.features.cols() != model.input_dim()) {
        throw DimensionError("batch features are " + std::to_string(batch.features.rows()) + "x" +
                             std::to_string(batch.features.cols()) + ", model expects in_dim " +
                             std::to_string(model.input_dim()));
    }
    for (int y : batch.labels) {
        if (y < 0 || y >= model.output_dim()) throw DimensionError("label out of range");
    }
}

} // namespace

Batch make_batch(const Dataset& data, const std::vector<int>& indices) {
    Batch b;
    b.features = Tensor::matrix(static_cast<int>(indices.size()), data.feature_dim);
    b.labels.reserve(indices.size());
    int row = 0;
    for (int idx : indices) {
        for (int k = 0; k < data.feature_dim; ++k) b.features.at(row, k) = data.features.at(idx, k);
        b.labels.push_back(data.labels[static_cast<std::size_t>(idx)]);
        ++row;
    }
    return b;
}

Tensor forward(const Model& model, const WeightSet& weights, const Batch& batch) {
    check_batch(model, batch);
    validate_weights(model, weights);
    Tensor a = batch.features;
    for (const Cell& c : model.cells) {
        Tensor z = affine(a, weights.cells.at(c.id));
        a = c.activation == Activation::Relu ? relu(z) : std::move(z);
    }
    return a;
}

LossGrads loss_and_grads(const Model& model, const WeightSet& weights, const Batch& batch) {
    check_batch(model, batch);
    validate_weights(model, weights);
    const int batch_n = batch.size();
    const int layers = static_cast<int>(model.cells.size());

    // Forward, keeping pre-activations per cell.
    std::vector<Tensor> pre(static_cast<std::size_t>(layers));
    std::vector<Tensor> act(static_cast<std::size_t>(layers + 1));
    act[0] = batch.features;
    for (int l = 0; l < layers; ++l) {
        const Cell& c = model.cells[static_cast<std::size_t>(l)];
        pre[l] = affine(act[l], weights.cells.at(c.id));
        act[l + 1] = c.activation == Activation::Relu ? relu(pre[l]) : pre[l];
    }

    // Mean cross-entropy with max-subtracted logsumexp; d_logits in place.
    const Tensor& logits = act[static_cast<std::size_t>(layers)];
    const int classes = logits.cols();
    Tensor dz = Tensor::matrix(batch_n, classes);
    double loss_sum = 0.0;
    for (int b = 0; b < batch_n; ++b) {
        double mx = logits.at(b, 0);
        for (int k = 1; k < classes; ++k) mx = std::max(mx, logits.at(b, k));
        double sum = 0.0;
        for (int k = 0; k < classes; ++k) sum += std::exp(logits.at(b, k) - mx);
        const int y = batch.labels[static_cast<std::size_t>(b)];
        loss_sum += std::log(sum) - (logits.at(b, y) - mx);
        for (int k = 0; k < classes; ++k) {
            double p = std::exp(logits.at(b, k) - mx) / sum;
            dz.at(b, k) = (p - (k == y ? 1.0 : 0.0)) / batch_n;
        }
    }
    double loss = loss_sum / batch_n;
    if (!std::isfinite(loss)) throw NumericError("non-finite training loss");

    // Backward.
    LossGrads out;
    out.loss = loss;
    out.grads.model_id = weights.model_id;
    for (int l = layers - 1; l >= 0; --l) {
        const Cell& c = model.cells[static_cast<std::size_t>(l)];
        const CellWeights& cw = weights.cells.at(c.id);
        const Tensor& a_in = act[static_cast<std::size_t>(l)];
        CellWeights g;
        g.weight = Tensor::matrix(c.out_dim, c.in_dim);
        g.bias = Tensor::vec(c.out_dim);
        for (int u = 0; u < c.out_dim; ++u) {
            double gb = 0.0;
            for (int b = 0; b < batch_n; ++b) gb += dz.at(b, u);
            g.bias.at(u) = gb;
            for (int k = 0; k < c.in_dim; ++k) {
                double gw = 0.0;
                for (int b = 0; b < batch_n; ++b) gw += dz.at(b, u) * a_in.at(b, k);
                g.weight.at(u, k) = gw;
            }
        }
        if (l > 0) {
            // da = dz W, masked by the previous cell's ReLU.
            const Cell& prev = model.cells[static_cast<std::size_t>(l - 1)];
            Tensor da = Tensor::matrix(batch_n, c.in_dim);
            for (int b = 0; b < batch_n; ++b) {
                for (int k = 0; k < c.in_dim; ++k) {
                    double acc = 0.0;
                    for (int u = 0; u < c.out_dim; ++u) acc += dz.at(b, u) * cw.weight.at(u, k);
                    da.at(b, k) = acc;
                }
            }
            if (prev.activation == Activation::Relu) {
                const Tensor& zprev = pre[static_cast<std::size_t>(l - 1)];
                for (int b = 0; b < batch_n; ++b) {
                    for (int k = 0; k < c.in_dim; ++k) {
                        if (zprev.at(b, k) <= 0.0) da.at(b, k) = 0.0;
                    }
                }
            }
            dz = std::move(da);
        }
        out.grads.cells.emplace(c.id, std::move(g));
    }
    return out;
}

WeightSet sgd_step(const WeightSet& weights, const WeightSet& grads, double lr) {
    WeightSet next;
    next.model_id = weights.model_id;
    for (const auto& [id, cw] : weights.cells) {
        auto git = grads.cells.find(id);
        if (git == grads.cells.end()) throw DimensionError("gradient missing cell " + std::to_string(id));
        const CellWeights& g = git->second;
        if (!g.weight.same_shape(cw.weight) || !g.bias.same_shape(cw.bias)) {
            throw DimensionError("gradient shape mismatch on cell " + std::to_string(id));
        }
        CellWeights n;
        n.weight = cw.weight;
        n.bias = cw.bias;
        for (std::size_t i = 0; i < n.weight.data.size(); ++i) n.weight.data[i] -= lr * g.weight.data[i];
        for (std::size_t i = 0; i < n.bias.data.size(); ++i) n.bias.data[i] -= lr * g.bias.data[i];
        next.cells.emplace(id, std::move(n));
    }
    return next;
}

LocalTrainResult local_train(const Model& model, const WeightSet& weights,
                             const Dataset& data, const std::vector<int>& train_rows,
                             int steps, int batch_size, double lr, Rng& rng) {
    if (train_rows.empty()) throw DimensionError("client has no training samples");
    if (steps < 1 || batch_size < 1) throw DimensionError("steps and batch_size must be >= 1");

    LocalTrainResult res;
    res.weights = weights;
    double loss_sum = 0.0;
    const int n = static_cast<int>(train_rows.size());
    std::vector<int> batch_rows(static_cast<std::size_t>(batch_size));

    for (int s = 0; s < steps; ++s) {
        for (int& r : batch_rows) r = train_rows[static_cast<std::size_t>(rng.uniform_int(n))];
        Batch batch = make_batch(data, batch_rows);
        LossGrads lg = loss_and_grads(model, res.weights, batch);
        loss_sum += lg.loss;
        if (s == 0) {
            res.avg_grad = lg.grads;
        } else {
            for (auto& [id, g] : res.avg_grad.cells) {
                const CellWeights& step_g = lg.grads.cells.at(id);
                for (std::size_t i = 0; i < g.weight.data.size(); ++i) g.weight.data[i] += step_g.weight.data[i];
                for (std::size_t i = 0; i < g.bias.data.size(); ++i) g.bias.data[i] += step_g.bias.data[i];
            }
        }
        res.weights = sgd_step(res.weights, lg.grads, lr);
    }
    for (auto& [id, g] : res.avg_grad.cells) {
        for (double& v : g.weight.data) v /= steps;
        for (double& v : g.bias.data) v /= steps;
    }
    res.avg_grad.model_id = weights.model_id;
    res.avg_loss = loss_sum / steps;
    return res;
}

double accuracy(const Model& model, const WeightSet& weights,
                const Dataset& data, const std::vector<int>& rows) {
    if (rows.empty()) return 0.0;
    Batch batch = make_batch(data, rows);
    Tensor logits = forward(model, weights, batch);
    int correct = 0;
    for (int b = 0; b < batch.size(); ++b) {
        int best = 0;
        for (int k = 1; k < logits.cols(); ++k) {
            if (logits.at(b, k) > logits.at(b, best)) best = k;
        }
        if (best == batch.labels[static_cast<std::size_t>(b)]) ++correct;
    }
    return static_cast<double>(correct) / batch.size();
}

} // namespace fedtrans

#pragma once

#include <vector>

#include "fedtrans/data.hpp"
#include "fedtrans/model.hpp"
#include "fedtrans/rng.hpp"

namespace fedtrans {

// Dense forward pass. Returns logits (batch x class_count). Deterministic.
Tensor forward(const Model& model, const WeightSet& weights, const Batch& batch);

struct LossGrads {
    double loss = 0.0;  // mean softmax cross-entropy over the batch
    WeightSet grads;    // shape-matches the weight set
};

// Analytic gradients of the mean cross-entropy. Throws NumericError when the
// loss is non-finite (divergence); callers drop that client update.
LossGrads loss_and_grads(const Model& model, const WeightSet& weights, const Batch& batch);

// w' = w - lr * g, elementwise.
WeightSet sgd_step(const WeightSet& weights, const WeightSet& grads, double lr);

struct LocalTrainResult {
    WeightSet weights;
    WeightSet avg_grad;
    double avg_loss = 0.0;
};

// Runs `steps` mini-batch SGD steps, each batch sampled with replacement from
// the given rows via the caller's rng. Pure function of its inputs: the same
// rng state yields bitwise-identical results.
LocalTrainResult local_train(const Model& model, const WeightSet& weights,
                             const Dataset& data, const std::vector<int>& train_rows,
                             int steps, int batch_size, double lr, Rng& rng);

// Fraction of rows whose argmax logit equals the label (ties -> lowest index).
double accuracy(const Model& model, const WeightSet& weights,
                const Dataset& data, const std::vector<int>& rows);

} // namespace fedtrans

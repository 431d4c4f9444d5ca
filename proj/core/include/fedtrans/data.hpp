#pragma once

#include <vector>

#include "fedtrans/tensor.hpp"

namespace fedtrans {

// A labelled feature table. Clients hold index lists into one shared dataset.
struct Dataset {
    int feature_dim = 0;
    int classes = 0;
    Tensor features; // n x feature_dim
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
};

// Per-client train/test row indices into a Dataset.
struct Partition {
    std::vector<int> train;
    std::vector<int> test;
};

struct Batch {
    Tensor features; // batch x feature_dim
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
};

// Gathers the given dataset rows into a batch.
Batch make_batch(const Dataset& data, const std::vector<int>& indices);

} // namespace fedtrans

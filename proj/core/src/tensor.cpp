#include "fedtrans/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace fedtrans {

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
}

Tensor Tensor::matrix(int rows, int cols) {
    return zeros({rows, cols});
}

Tensor Tensor::vec(int n) {
    return zeros({n});
}

Tensor Tensor::identity(int n) {
    Tensor t = matrix(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace fedtrans

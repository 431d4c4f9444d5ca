#include <doctest.h>

#include <cmath>
#include <limits>

#include "fedtrans/datagen.hpp"
#include "fedtrans/errors.hpp"
#include "fedtrans/nn.hpp"
#include "fedtrans/transformer.hpp"
#include "helpers.hpp"

using namespace fedtrans;
using namespace testutil;

TEST_SUITE("model_core") {

TEST_CASE("forward: single linear cell computes wx + b") {
    CellIdAllocator ids;
    Model m = chain(ids, 1, {1}, 2);
    // Collapse to effectively one linear path: hidden w=2, output picks it up.
    WeightSet w = zero_weights(m);
    set_cell(w, m.cells[0].id, {{2.0}}, {0.0});
    set_cell(w, m.cells[1].id, {{1.0}, {0.0}}, {0.0, 0.0});
    Tensor out = forward(m, w, single_input({3.0}));
    CHECK(out.at(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("forward: relu clamps negative pre-activations") {
    CellIdAllocator ids;
    Model m = chain(ids, 1, {1}, 2);
    WeightSet w = zero_weights(m);
    set_cell(w, m.cells[0].id, {{1.0}}, {0.0});
    set_cell(w, m.cells[1].id, {{1.0}, {0.0}}, {0.0, 0.0});
    Tensor out = forward(m, w, single_input({-5.0}));
    CHECK(out.at(0, 0) == 0.0);
}

TEST_CASE("forward: two-cell hand example sums relu branches") {
    CellIdAllocator ids;
    Model m = chain(ids, 1, {2}, 2);
    WeightSet w = zero_weights(m);
    set_cell(w, m.cells[0].id, {{1.0}, {2.0}}, {0.0, 0.0});
    set_cell(w, m.cells[1].id, {{1.0, 1.0}, {0.0, 0.0}}, {0.0, 0.0});
    Tensor out = forward(m, w, single_input({1.0}));
    CHECK(out.at(0, 0) == doctest::Approx(3.0).epsilon(1e-12)); // relu(1) + relu(2)
}

TEST_CASE("forward: dimension mismatch raises") {
    CellIdAllocator ids;
    Model m = chain(ids, 3, {2}, 2);
    WeightSet w = zero_weights(m);
    CHECK_THROWS_AS(forward(m, w, single_input({1.0, 2.0})), DimensionError);
}

TEST_CASE("loss: uniform logits give ln(C)") {
    CellIdAllocator ids;
    for (int classes : {2, 5, 11}) {
        Model m = chain(ids, 4, {3}, classes);
        WeightSet w = zero_weights(m); // all-zero weights -> identical logits
        Rng rng(7);
        Batch b = random_batch(rng, 6, 4, classes);
        LossGrads lg = loss_and_grads(m, w, b);
        CHECK(lg.loss == doctest::Approx(std::log(static_cast<double>(classes))).epsilon(1e-12));
    }
}

TEST_CASE("loss: dominant true-label margin drives loss to zero") {
    CellIdAllocator ids;
    Model m = chain(ids, 1, {1}, 5);
    WeightSet w = zero_weights(m);
    set_cell(w, m.cells[1].id, {{0.0}, {0.0}, {0.0}, {0.0}, {0.0}}, {50.0, 0.0, 0.0, 0.0, 0.0});
    LossGrads lg = loss_and_grads(m, w, single_input({0.0}, 0));
    CHECK(lg.loss >= 0.0);
    CHECK(lg.loss < 1e-12);
}

TEST_CASE("loss: label out of range raises") {
    CellIdAllocator ids;
    Model m = chain(ids, 1, {1}, 2);
    WeightSet w = zero_weights(m);
    CHECK_THROWS_AS(loss_and_grads(m, w, single_input({1.0}, 2)), DimensionError);
}

TEST_CASE("loss: non-finite weights raise NumericError") {
    CellIdAllocator ids;
    Model m = chain(ids, 1, {1}, 2);
    WeightSet w = zero_weights(m);
    set_cell(w, m.cells[0].id, {{std::numeric_limits<double>::infinity()}}, {0.0});
    set_cell(w, m.cells[1].id, {{1.0}, {-1.0}}, {0.0, 0.0});
    CHECK_THROWS_AS(loss_and_grads(m, w, single_input({1.0}, 0)), NumericError);
}

TEST_CASE("grads: analytic matches central finite differences") {
    Rng rng(42);
    for (int trial = 0; trial < 3; ++trial) {
        CellIdAllocator ids;
        Model m = chain(ids, 4, {6, 5}, 3);
        Rng wrng = Rng::derive(42, {static_cast<std::uint64_t>(trial)});
        WeightSet w = init_weights(m, wrng);
        Batch b = random_batch(rng, 5, 4, 3);
        FdCheck fd = finite_difference_check(m, w, b, 1e-6, 1e-5);
        CHECK(fd.within >= static_cast<int>(0.99 * fd.total));
    }
}

TEST_CASE("sgd_step: w' = w - lr g") {
    CellIdAllocator ids;
    Model m = chain(ids, 1, {1}, 2);
    WeightSet w = zero_weights(m);
    set_cell(w, m.cells[0].id, {{1.0}}, {0.0});
    WeightSet g = zero_weights(m);
    set_cell(g, m.cells[0].id, {{0.5}}, {0.0});
    WeightSet next = sgd_step(w, g, 0.1);
    CHECK(next.cells.at(m.cells[0].id).weight.at(0, 0) == doctest::Approx(0.95).epsilon(1e-15));

    WeightSet same = sgd_step(w, zero_weights(m), 0.1);
    CHECK(bitwise_equal(same, w));
}

TEST_CASE("sgd_step: one step on a quadratic strictly decreases it") {
    // loss(w) = (w - 3)^2, gradient 2(w - 3), from w = 0 with lr 0.1.
    const double w0 = 0.0, lr = 0.1;
    const double g = 2.0 * (w0 - 3.0);
    const double w1 = w0 - lr * g;
    CHECK(w1 == doctest::Approx(0.6));
    CHECK((w1 - 3.0) * (w1 - 3.0) < (w0 - 3.0) * (w0 - 3.0));
}

TEST_CASE("sgd_step: shape mismatch raises") {
    CellIdAllocator ids;
    Model m = chain(ids, 1, {1}, 2);
    Model m2 = chain(ids, 1, {2}, 2);
    WeightSet w = zero_weights(m);
    CHECK_THROWS_AS(sgd_step(w, zero_weights(m2), 0.1), DimensionError);
}

TEST_CASE("local_train: one step on a one-sample client equals loss_and_grads + sgd_step") {
    CellIdAllocator ids;
    Model m = chain(ids, 2, {3}, 2);
    Rng wrng(5);
    WeightSet w = init_weights(m, wrng);

    Dataset data;
    data.feature_dim = 2;
    data.classes = 2;
    data.features = Tensor::matrix(1, 2);
    data.features.at(0, 0) = 0.3;
    data.features.at(0, 1) = -0.7;
    data.labels = {1};

    Rng lrng(9);
    LocalTrainResult res = local_train(m, w, data, {0}, 1, 1, 0.05, lrng);

    Batch b = make_batch(data, {0});
    LossGrads lg = loss_and_grads(m, w, b);
    WeightSet expect = sgd_step(w, lg.grads, 0.05);
    CHECK(bitwise_equal(res.weights, expect));
    CHECK(res.avg_loss == lg.loss);
    CHECK(bitwise_equal(res.avg_grad, lg.grads));
}

TEST_CASE("local_train: identical seeds give bitwise identical outputs") {
    CellIdAllocator ids;
    Model m = chain(ids, 3, {4}, 3);
    Rng wrng(11);
    WeightSet w = init_weights(m, wrng);
    DataConfig dc;
    dc.num_clients = 1;
    dc.classes = 3;
    dc.feature_dim = 3;
    Dataset data;
    data.feature_dim = 3;
    data.classes = 3;
    Rng drng(17);
    data.features = Tensor::matrix(30, 3);
    for (double& v : data.features.data) v = drng.uniform(-1.0, 1.0);
    data.labels.resize(30);
    for (int& y : data.labels) y = drng.uniform_int(3);
    std::vector<int> rows(30);
    for (int i = 0; i < 30; ++i) rows[static_cast<std::size_t>(i)] = i;

    Rng a(123), b(123);
    LocalTrainResult ra = local_train(m, w, data, rows, 10, 4, 0.05, a);
    LocalTrainResult rb = local_train(m, w, data, rows, 10, 4, 0.05, b);
    CHECK(bitwise_equal(ra.weights, rb.weights));
    CHECK(bitwise_equal(ra.avg_grad, rb.avg_grad));
    CHECK(ra.avg_loss == rb.avg_loss);
}

TEST_CASE("local_train: separable blobs train below the initial loss") {
    CellIdAllocator ids;
    Model m = chain(ids, 2, {8}, 2);
    Rng wrng(3);
    WeightSet w = init_weights(m, wrng);

    Dataset data;
    data.feature_dim = 2;
    data.classes = 2;
    data.features = Tensor::matrix(40, 2);
    data.labels.resize(40);
    Rng drng(29);
    for (int i = 0; i < 40; ++i) {
        const int y = i % 2;
        data.labels[static_cast<std::size_t>(i)] = y;
        data.features.at(i, 0) = (y == 0 ? -2.0 : 2.0) + 0.3 * drng.normal();
        data.features.at(i, 1) = (y == 0 ? 2.0 : -2.0) + 0.3 * drng.normal();
    }
    std::vector<int> rows(40);
    for (int i = 0; i < 40; ++i) rows[static_cast<std::size_t>(i)] = i;

    const double initial = eval_loss(m, w, make_batch(data, rows));
    Rng lrng(31);
    LocalTrainResult res = local_train(m, w, data, rows, 20, 10, 0.05, lrng);
    CHECK(res.avg_loss < initial);
    const double after = eval_loss(m, res.weights, make_batch(data, rows));
    CHECK(after < initial);
}

TEST_CASE("local_train: empty client data raises") {
    CellIdAllocator ids;
    Model m = chain(ids, 1, {1}, 2);
    WeightSet w = zero_weights(m);
    Dataset data;
    data.feature_dim = 1;
    data.classes = 2;
    Rng rng(1);
    CHECK_THROWS_AS(local_train(m, w, data, {}, 1, 1, 0.1, rng), DimensionError);
}

TEST_CASE("mac_count: definition and additivity") {
    CellIdAllocator ids;
    Model one;
    one.cells.push_back(Cell{ids.fresh(), 4, 3, Activation::None, CellOrigin::initial()});
    CHECK(mac_count(one) == 12);

    Model two = chain(ids, 4, {3}, 2);
    CHECK(mac_count(two) == 12 + 6);
}

TEST_CASE("mac_count: widening the hidden cell doubles its fan-out contribution") {
    CellIdAllocator ids;
    Model m = chain(ids, 4, {3}, 2);
    Rng rng(1);
    WeightSet w = init_weights(m, rng);
    auto [wm, ww] = widen_cell(m, w, m.cells[0].id, 2, rng, ids);
    CHECK(mac_count(wm) == 4 * 6 + 6 * 2);
    CHECK(mac_count(wm) > mac_count(m));
}

TEST_CASE("forward is deterministic") {
    CellIdAllocator ids;
    Model m = chain(ids, 5, {7, 4}, 3);
    Rng wrng(77);
    WeightSet w = init_weights(m, wrng);
    Rng brng(78);
    Batch b = random_batch(brng, 9, 5, 3);
    Tensor o1 = forward(m, w, b);
    Tensor o2 = forward(m, w, b);
    CHECK(o1.data == o2.data);
}

} // TEST_SUITE

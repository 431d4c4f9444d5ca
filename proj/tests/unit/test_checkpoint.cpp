#include <doctest.h>

#include <sstream>

#include "fedtrans/checkpoint.hpp"
#include "fedtrans/errors.hpp"
#include "fedtrans/transformer.hpp"
#include "helpers.hpp"

using namespace fedtrans;
using namespace testutil;

namespace {

// A transformed model exercises every origin kind and the mc map.
std::pair<Model, WeightSet> sample_model_with_history() {
    CellIdAllocator ids;
    Model m = chain(ids, 5, {3, 4}, 3);
    m.id = 0;
    Rng rng(2718);
    WeightSet w = init_weights(m, rng);
    TransformConfig cfg;
    cfg.next_op[m.cells[1].id] = CellOp::Deepen;
    std::map<CellId, double> act{{m.cells[0].id, 1.0}, {m.cells[1].id, 0.98}, {m.cells[2].id, 0.0}};
    auto res = transform_model(m, w, act, cfg, ids, rng, 1 << 20, 1, 42);
    REQUIRE(res.has_value());
    return {res->child, res->weights};
}

} // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("round-trip: topology, lineage and weights are restored bit-exactly") {
    auto [model, weights] = sample_model_with_history();
    const std::string text = checkpoint_string(model, weights);

    std::istringstream in(text);
    auto [back_model, back_weights] = load_checkpoint(in);

    CHECK(back_model.id == model.id);
    CHECK(back_model.parent_id == model.parent_id);
    CHECK(back_model.created_round == model.created_round);
    REQUIRE(back_model.cells.size() == model.cells.size());
    for (std::size_t i = 0; i < model.cells.size(); ++i) {
        CHECK(back_model.cells[i].id == model.cells[i].id);
        CHECK(back_model.cells[i].in_dim == model.cells[i].in_dim);
        CHECK(back_model.cells[i].out_dim == model.cells[i].out_dim);
        CHECK(back_model.cells[i].activation == model.cells[i].activation);
        CHECK(back_model.cells[i].origin.kind == model.cells[i].origin.kind);
        CHECK(back_model.cells[i].origin.source == model.cells[i].origin.source);
    }
    CHECK(back_model.per_cell_mc == model.per_cell_mc);
    REQUIRE(back_model.widen_transfers.size() == model.widen_transfers.size());
    for (std::size_t i = 0; i < model.widen_transfers.size(); ++i) {
        const WidenTransfer& a = model.widen_transfers[i];
        const WidenTransfer& b = back_model.widen_transfers[i];
        CHECK(a.old_cell == b.old_cell);
        CHECK(a.new_cell == b.new_cell);
        CHECK(a.successor == b.successor);
        CHECK(a.unit_src == b.unit_src);
        CHECK(a.fraction.data == b.fraction.data);
    }
    CHECK(bitwise_equal(back_weights, weights));

    // Save -> load -> save is byte identical.
    CHECK(checkpoint_string(back_model, back_weights) == text);
}

TEST_CASE("round-trip: awkward doubles survive the text format") {
    CellIdAllocator ids;
    Model m = chain(ids, 2, {2}, 2);
    WeightSet w = zero_weights(m);
    set_cell(w, m.cells[0].id, {{0.1, 1.0 / 3.0}, {-0.0, 5e-324}}, {1e308, -2.2250738585072014e-308});
    set_cell(w, m.cells[1].id, {{1e-17, 2.0}, {3.0, 4.0}}, {0.0, 0.0});
    std::istringstream in(checkpoint_string(m, w));
    auto [bm, bw] = load_checkpoint(in);
    CHECK(bitwise_equal(bw, w));
}

TEST_CASE("rejects unknown headers and truncated files") {
    auto [model, weights] = sample_model_with_history();
    std::string text = checkpoint_string(model, weights);

    std::istringstream bad_magic("fedtrans-model v9\n" + text.substr(text.find('\n') + 1));
    CHECK_THROWS_AS(load_checkpoint(bad_magic), IoError);

    std::istringstream truncated(text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(truncated), IoError);

    std::istringstream garbage("not a checkpoint at all\n");
    CHECK_THROWS_AS(load_checkpoint(garbage), IoError);
}

TEST_CASE("rejects non-finite weights") {
    CellIdAllocator ids;
    Model m = chain(ids, 2, {2}, 2);
    WeightSet w = zero_weights(m);
    set_cell(w, m.cells[0].id, {{std::numeric_limits<double>::quiet_NaN(), 0.0}, {0.0, 0.0}}, {0.0, 0.0});
    std::string text = checkpoint_string(m, w);
    std::istringstream in(text);
    CHECK_THROWS_AS(load_checkpoint(in), IoError);
}

} // TEST_SUITE

#include <benchmark/benchmark.h>

#include <limits>

#include "fedtrans/nn.hpp"
#include "fedtrans/runtime.hpp"
#include "fedtrans/transformer.hpp"

using namespace fedtrans;

namespace {

struct Fixture {
    CellIdAllocator ids;
    Model model;
    WeightSet weights;
    Dataset data;
    std::vector<int> rows;

    explicit Fixture(int width) {
        model = build_chain_model(32, 5, {width, width}, ids);
        Rng rng(7);
        weights = init_weights(model, rng);
        data.feature_dim = 32;
        data.classes = 5;
        const int n = 256;
        data.features = Tensor::matrix(n, 32);
        for (double& v : data.features.data) v = rng.uniform(-1.0, 1.0);
        data.labels.resize(n);
        for (int& y : data.labels) y = rng.uniform_int(5);
        rows.resize(n);
        for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
    }
};

} // namespace

static void BM_Forward(benchmark::State& state) {
    Fixture f(static_cast<int>(state.range(0)));
    std::vector<int> batch_rows(f.rows.begin(), f.rows.begin() + 10);
    Batch b = make_batch(f.data, batch_rows);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(f.model, f.weights, b));
    }
}
BENCHMARK(BM_Forward)->Arg(4)->Arg(16)->Arg(64);

static void BM_LossAndGrads(benchmark::State& state) {
    Fixture f(static_cast<int>(state.range(0)));
    std::vector<int> batch_rows(f.rows.begin(), f.rows.begin() + 10);
    Batch b = make_batch(f.data, batch_rows);
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_and_grads(f.model, f.weights, b));
    }
}
BENCHMARK(BM_LossAndGrads)->Arg(4)->Arg(16)->Arg(64);

static void BM_LocalTrain(benchmark::State& state) {
    Fixture f(16);
    for (auto _ : state) {
        Rng rng(11);
        benchmark::DoNotOptimize(local_train(f.model, f.weights, f.data, f.rows, 20, 10, 0.05, rng));
    }
}
BENCHMARK(BM_LocalTrain);

static void BM_WidenCell(benchmark::State& state) {
    Fixture f(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        Rng rng(3);
        CellIdAllocator ids = f.ids;
        benchmark::DoNotOptimize(widen_cell(f.model, f.weights, f.model.cells[0].id, 2, rng, ids));
    }
}
BENCHMARK(BM_WidenCell)->Arg(16)->Arg(64);

static void BM_SoftAggregate(benchmark::State& state) {
    // A four-model widening lineage with drifted weights.
    CellIdAllocator ids;
    Model m = build_chain_model(32, 5, {8}, ids);
    m.id = 0;
    Rng rng(5);
    WeightSet w = init_weights(m, rng);
    std::vector<Model> models{m};
    std::map<ModelId, WeightSet> weights;
    weights.emplace(0, w);
    TransformConfig cfg;
    for (int k = 1; k <= 3; ++k) {
        const Model& parent = models.back();
        std::map<CellId, double> act;
        for (const Cell& c : parent.cells) act[c.id] = 1.0;
        auto res = transform_model(parent, weights.at(parent.id), act, cfg, ids, rng,
                                   std::numeric_limits<long long>::max(), k, k * 10);
        models.push_back(res->child);
        weights.emplace(res->child.id, res->weights);
    }
    for (auto& [id, ws] : weights) {
        for (auto& [cid, cw] : ws.cells) {
            for (double& v : cw.weight.data) v += 0.01 * id;
        }
    }
    AggregationConfig agg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(soft_aggregate(models, weights, 40, agg));
    }
}
BENCHMARK(BM_SoftAggregate);

static void BM_RunRound(benchmark::State& state) {
    DataConfig d;
    d.num_clients = 20;
    d.classes = 5;
    d.feature_dim = 32;
    d.samples_per_client_min = 40;
    d.samples_per_client_max = 60;
    d.seed = 1;
    CapacityConfig c;
    c.capacity_min_macs = 40;
    c.capacity_max_macs = 1160;
    World world = build_world(d, c);
    RunConfig r;
    r.participants_per_round = 5;
    r.initial_hidden_dims = {1};
    r.max_rounds = 1 << 30;
    for (auto _ : state) {
        state.PauseTiming();
        Simulation sim(r, world);
        state.ResumeTiming();
        for (int i = 0; i < 10; ++i) benchmark::DoNotOptimize(sim.run_round());
    }
}
BENCHMARK(BM_RunRound)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

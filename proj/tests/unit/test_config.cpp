#include <doctest.h>

#include <cmath>

#include "experiment.hpp"
#include "fedtrans/errors.hpp"

using namespace fedtrans;
using nlohmann::json;

namespace {

json minimal_config() {
    return json{{"num_clients", 16},
                {"classes", 4},
                {"feature_dim", 8},
                {"initial_hidden_dims", json::array({2})},
                {"max_rounds", 20}};
}

} // namespace

TEST_SUITE("config") {

TEST_CASE("minimal config fills documented defaults") {
    ExperimentConfig cfg = parse_experiment_config(minimal_config());
    CHECK(cfg.run_name == "default");
    CHECK(cfg.seed == 1);
    CHECK(cfg.data.num_clients == 16);
    CHECK(cfg.run.participants_per_round == 10);
    CHECK(cfg.run.learning_rate == 0.05);
    CHECK(cfg.run.local_steps == 20);
    CHECK(cfg.run.batch_size == 10);
    CHECK(cfg.run.doc.slope_count == 10);
    CHECK(cfg.run.doc.slope_step == 5);
    CHECK(cfg.run.doc.threshold == 0.003);
    CHECK(cfg.run.transform.activeness_threshold == 0.9);
    CHECK(cfg.run.transform.widen_factor == 2);
    CHECK(cfg.run.transform.deepen_count == 1);
    CHECK(cfg.run.aggregation.decay == 0.92);
    CHECK(cfg.run.aggregation.enable_soft);
    CHECK(cfg.run.activeness_window == 5);
    CHECK(cfg.run.train_mac_multiplier == 3);
    CHECK(cfg.run.warm_start);
    CHECK_FALSE(cfg.run.random_cell_selection);
    CHECK(cfg.data.seed == cfg.seed);
    CHECK(cfg.run.seed == cfg.seed);
}

TEST_CASE("missing required keys name the key") {
    for (const char* key : {"num_clients", "classes", "feature_dim", "initial_hidden_dims", "max_rounds"}) {
        json j = minimal_config();
        j.erase(key);
        try {
            parse_experiment_config(j);
            FAIL("expected ConfigError for missing ", key);
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(key) != std::string::npos);
        }
    }
}

TEST_CASE("unknown keys are rejected by name") {
    json j = minimal_config();
    j["learning_rte"] = 0.05;
    try {
        parse_experiment_config(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("learning_rte") != std::string::npos);
    }
}

TEST_CASE("type and range violations are rejected") {
    json j = minimal_config();
    j["learning_rate"] = "fast";
    CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
    j = minimal_config();
    j["classes"] = 1;
    CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
    j = minimal_config();
    j["samples_per_client_min"] = 50;
    j["samples_per_client_max"] = 20;
    CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
    j = minimal_config();
    j["initial_hidden_dims"] = json::array();
    CHECK_THROWS_AS(parse_experiment_config(j), ConfigError);
}

TEST_CASE("effective config reparses to the same values") {
    json j = minimal_config();
    j["seed"] = 777;
    j["dirichlet_h"] = 0.25;
    j["enable_soft_aggregation"] = false;
    ExperimentConfig cfg = parse_experiment_config(j);
    json eff = effective_config_json(cfg);
    ExperimentConfig back = parse_experiment_config(eff);
    CHECK(back.seed == 777);
    CHECK(back.data.dirichlet_h == 0.25);
    CHECK_FALSE(back.run.aggregation.enable_soft);
    CHECK(effective_config_json(back) == eff);
}

TEST_CASE("ablation switches map to the documented knobs") {
    ExperimentConfig cfg = parse_experiment_config(minimal_config());
    apply_ablation(cfg, "no_transform");
    RunConfig run = make_run_config(cfg);
    CHECK(std::isinf(run.doc.threshold));
    CHECK(run.doc.threshold < 0);

    cfg = parse_experiment_config(minimal_config());
    apply_ablation(cfg, "no_soft");
    CHECK_FALSE(make_run_config(cfg).aggregation.enable_soft);

    cfg = parse_experiment_config(minimal_config());
    apply_ablation(cfg, "no_warmup");
    CHECK_FALSE(make_run_config(cfg).warm_start);

    cfg = parse_experiment_config(minimal_config());
    apply_ablation(cfg, "random_cells");
    CHECK(make_run_config(cfg).random_cell_selection);

    cfg = parse_experiment_config(minimal_config());
    CHECK_THROWS_AS(apply_ablation(cfg, "no_such_switch"), ConfigError);
}

TEST_CASE("ablation survives the effective-config round trip") {
    ExperimentConfig cfg = parse_experiment_config(minimal_config());
    apply_ablation(cfg, "no_transform");
    json eff = effective_config_json(cfg);
    CHECK(eff["ablation"] == "no_transform");
    ExperimentConfig back = parse_experiment_config(eff);
    CHECK(back.ablation == "no_transform");
    CHECK(std::isinf(make_run_config(back).doc.threshold));
    // The stored threshold stays finite and serializable.
    CHECK(std::isfinite(back.run.doc.threshold));
}

TEST_CASE("macs formatting scales units") {
    CHECK(format_macs(950) == "950 MAC");
    CHECK(format_macs(2500) == "2.5 KMAC");
    CHECK(format_macs(3'200'000) == "3.2 MMAC");
    CHECK(format_macs(7'800'000'000LL) == "7.8 GMAC");
}

} // TEST_SUITE

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedtrans/aggregator.hpp"
#include "fedtrans/client_manager.hpp"
#include "fedtrans/datagen.hpp"
#include "fedtrans/model.hpp"
#include "fedtrans/transformer.hpp"

namespace fedtrans {

struct RunConfig {
    int participants_per_round = 10;
    int max_rounds = 300;
    double learning_rate = 0.05;
    int local_steps = 20;
    int batch_size = 10;
    std::vector<int> initial_hidden_dims = {1};
    std::uint64_t seed = 1;

    DocConfig doc;                 // slope window, step, threshold
    int activeness_window = 5;
    TransformConfig transform;     // selection threshold, widen factor, deepen count
    AggregationConfig aggregation; // decay, soft on/off

    // Training cost per sample as a multiple of forward MACs (fwd + bwd).
    int train_mac_multiplier = 3;

    // Validation cadence and the convergence rule: a model has converged when
    // its probe accuracy has not improved by more than threshold_pp points
    // for `convergence_window` consecutive evaluations.
    int eval_interval = 5;
    int convergence_window = 10;
    double convergence_threshold_pp = 1.0;

    int threads = 1;

    // Ablation switches.
    bool warm_start = true;        // off: children are re-initialized
    bool random_cell_selection = false;
};

// The simulated population plus held-out probe data.
struct World {
    Dataset data;
    Dataset probe;
    std::vector<ClientRecord> clients;
};

// Builds dataset, probe holdout, Dirichlet partitions and capacities from the
// data seed. Fails if the capacity floor cannot run a model at all.
World build_world(const DataConfig& data_cfg, const CapacityConfig& cap_cfg,
                  double probe_fraction = 0.10);

// Seed derivation used by the round loop; public so reference implementations
// can reproduce the exact same streams.
std::uint64_t round_selection_seed(std::uint64_t run_seed, int round);
std::uint64_t client_stream_seed(std::uint64_t run_seed, int round, int client);
std::uint64_t transform_stream_seed(std::uint64_t run_seed, int round);
std::uint64_t model_init_seed(std::uint64_t run_seed);

struct TransformationEvent {
    int round = 0;
    ModelId parent = 0;
    ModelId child = 0;
    std::vector<std::pair<CellId, CellOp>> ops;
    long long child_macs = 0;
    double parent_probe_loss = 0.0;
    double child_probe_loss = 0.0;
};

struct RoundReport {
    int round = 0;
    int model_count = 0;
    long long largest_macs = 0;
    std::map<ModelId, double> model_mean_loss;
    std::map<ModelId, int> participant_counts;
    std::map<ModelId, double> utility_mean;
    double mean_loss = 0.0;
    std::optional<double> doc;
    std::optional<TransformationEvent> transformation;
    long long round_macs = 0;
    long long cum_macs = 0;
    double round_time_s = 0.0;
    double comm_mb = 0.0;
};

struct ClientEval {
    int client = 0;
    ModelId model = 0;
    double accuracy = 0.0;
};

struct RunResult {
    std::vector<Model> models;
    std::map<ModelId, WeightSet> weights;
    UtilityTable utilities;
    std::vector<ClientEval> client_eval;
    double mean_accuracy = 0.0;
    double iqr_accuracy = 0.0;
    long long total_macs = 0;
    double total_comm_mb = 0.0;
    int rounds_executed = 0;
    std::vector<RoundReport> rounds;
    std::vector<std::string> events;
};

// One simulation instance; run_round() advances one Algorithm-1 round:
// select -> assign -> local train -> utility update -> aggregate ->
// convergence check -> transform.
class Simulation {
  public:
    Simulation(const RunConfig& cfg, const World& world);

    RoundReport run_round();
    bool finished() const;
    RunResult finish();

    int round() const { return round_; }
    const std::vector<Model>& models() const { return models_; }
    const std::map<ModelId, WeightSet>& weights() const { return weights_; }
    const UtilityTable& utilities() const { return utilities_; }
    const std::vector<std::string>& events() const { return events_; }

  private:
    void evaluate_models();
    bool all_models_converged() const;
    bool can_still_transform() const;

    RunConfig cfg_;
    const World& world_;
    CellIdAllocator ids_;
    std::vector<Model> models_;
    std::map<ModelId, WeightSet> weights_;
    UtilityTable utilities_;
    DocTracker doc_tracker_;
    ActivenessTracker act_tracker_;
    std::map<CellId, double> last_activeness_;
    long long max_capacity_ = 0;
    Batch probe_batch_;

    int round_ = 0;
    long long cum_macs_ = 0;
    double cum_comm_mb_ = 0.0;
    std::map<ModelId, int> evals_seen_;
    std::map<ModelId, int> last_improvement_;
    std::map<ModelId, double> best_val_;
    std::vector<RoundReport> reports_;
    std::vector<std::string> events_;
};

RunResult run_training(const RunConfig& cfg, const World& world);

// Per-client evaluation: the highest-utility compatible model (ties go to the
// smaller id), scored on the client's local test split.
std::vector<ClientEval> final_evaluate(const std::vector<Model>& models,
                                       const std::map<ModelId, WeightSet>& weights,
                                       const UtilityTable& utilities, const World& world);

double mean_of(const std::vector<double>& xs);
// Interquartile range with linearly interpolated quartiles.
double iqr_of(std::vector<double> xs);

// One row per round: round,model_count,largest_macs,mean_loss,doc,cum_macs,
// round_time_s,comm_mb.
void write_metrics_csv(const RunResult& result, std::ostream& out);
// Assignment histogram and utility snapshot per (round, model).
void write_assignments_csv(const RunResult& result, std::ostream& out);
void write_summary(const RunResult& result, std::ostream& out);
void write_event_log(const RunResult& result, std::ostream& out);

} // namespace fedtrans

#include "fedtrans/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <thread>

#include "fedtrans/errors.hpp"
#include "fedtrans/nn.hpp"

namespace fedtrans {

namespace {

constexpr std::uint64_t kSelectTag = 0x73656c6563ULL;
constexpr std::uint64_t kClientTag = 0x636c69656eULL;
constexpr std::uint64_t kTransformTag = 0x7472616e73ULL;
constexpr std::uint64_t kInitTag = 0x696e6974ULL;

std::string fmt10(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, n);
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

struct ClientOutcome {
    int client = -1;
    ModelId model = -1;
    bool ok = false;
    std::string error;
    LocalTrainResult result;
};

} // namespace

std::uint64_t round_selection_seed(std::uint64_t run_seed, int round) {
    Rng r = Rng::derive(run_seed, {kSelectTag, static_cast<std::uint64_t>(round)});
    return r.next_u64();
}

std::uint64_t client_stream_seed(std::uint64_t run_seed, int round, int client) {
    Rng r = Rng::derive(run_seed, {kClientTag, static_cast<std::uint64_t>(round),
                                   static_cast<std::uint64_t>(client)});
    return r.next_u64();
}

std::uint64_t transform_stream_seed(std::uint64_t run_seed, int round) {
    Rng r = Rng::derive(run_seed, {kTransformTag, static_cast<std::uint64_t>(round)});
    return r.next_u64();
}

std::uint64_t model_init_seed(std::uint64_t run_seed) {
    Rng r = Rng::derive(run_seed, {kInitTag});
    return r.next_u64();
}

World build_world(const DataConfig& data_cfg, const CapacityConfig& cap_cfg, double probe_fraction) {
    World w;
    Dataset full = generate_dataset(data_cfg);
    Rng probe_rng = Rng::derive(data_cfg.seed, {0x70726f6265ULL});
    auto [probe, rest] = split_probe(full, probe_fraction, probe_rng);
    w.probe = std::move(probe);
    w.data = std::move(rest);

    Rng part_rng = Rng::derive(data_cfg.seed, {0x706172ULL});
    std::vector<Partition> parts = partition_dirichlet(w.data, data_cfg, part_rng);

    Rng cap_rng = Rng::derive(data_cfg.seed, {0x636170ULL});
    auto caps = sample_capacities(cap_cfg, data_cfg.num_clients, cap_rng);

    w.clients.resize(static_cast<std::size_t>(data_cfg.num_clients));
    for (int i = 0; i < data_cfg.num_clients; ++i) {
        ClientRecord& c = w.clients[static_cast<std::size_t>(i)];
        c.id = i;
        c.capacity_macs = caps[static_cast<std::size_t>(i)].first;
        c.speed_macs_per_sec = caps[static_cast<std::size_t>(i)].second;
        c.data = std::move(parts[static_cast<std::size_t>(i)]);
    }
    return w;
}

Simulation::Simulation(const RunConfig& cfg, const World& world) : cfg_(cfg), world_(world) {
    if (cfg_.participants_per_round < 1) throw ConfigError("participants_per_round must be >= 1");
    if (cfg_.participants_per_round > static_cast<int>(world_.clients.size())) {
        throw ConfigError("participants_per_round exceeds the client population");
    }
    if (cfg_.max_rounds < 0) throw ConfigError("max_rounds must be >= 0");

    Model initial = build_chain_model(world_.data.feature_dim, world_.data.classes,
                                      cfg_.initial_hidden_dims, ids_);
    initial.id = 0;
    Rng init_rng(model_init_seed(cfg_.seed));
    WeightSet w0 = init_weights(initial, init_rng);

    const long long initial_macs = mac_count(initial);
    for (const ClientRecord& c : world_.clients) {
        if (c.capacity_macs < initial_macs) {
            throw ConfigError("client " + std::to_string(c.id) + " capacity " +
                              std::to_string(c.capacity_macs) + " cannot run the initial model (" +
                              std::to_string(initial_macs) + " MACs)");
        }
        if (c.data.train.empty()) throw ConfigError("client " + std::to_string(c.id) + " has no training data");
        max_capacity_ = std::max(max_capacity_, c.capacity_macs);
    }

    models_.push_back(std::move(initial));
    weights_.emplace(0, std::move(w0));
    utilities_ = UtilityTable(static_cast<int>(world_.clients.size()));
    for (const ClientRecord& c : world_.clients) utilities_.set(c.id, 0, 0.0);

    doc_tracker_ = DocTracker(cfg_.doc);
    act_tracker_.window = cfg_.activeness_window;

    const int probe_n = std::min(64, world_.probe.size());
    std::vector<int> probe_rows(static_cast<std::size_t>(probe_n));
    std::iota(probe_rows.begin(), probe_rows.end(), 0);
    if (probe_n > 0) probe_batch_ = make_batch(world_.probe, probe_rows);
}

RoundReport Simulation::run_round() {
    const int t = round_;
    Rng select_rng(round_selection_seed(cfg_.seed, t));
    std::vector<int> participants =
        select_clients(static_cast<int>(world_.clients.size()), cfg_.participants_per_round, select_rng);

    // Local training: pure per-client work on private rng streams, so the
    // schedule cannot affect results.
    std::vector<ClientOutcome> outcomes(participants.size());
    parallel_for(static_cast<int>(participants.size()), cfg_.threads, [&](int i) {
        ClientOutcome& out = outcomes[static_cast<std::size_t>(i)];
        const int cid = participants[static_cast<std::size_t>(i)];
        const ClientRecord& client = world_.clients[static_cast<std::size_t>(cid)];
        out.client = cid;
        try {
            Rng crng(client_stream_seed(cfg_.seed, t, cid));
            std::vector<ModelId> compat = compatible_models(client, models_);
            std::vector<double> utils;
            utils.reserve(compat.size());
            for (ModelId m : compat) utils.push_back(utilities_.get(cid, m).value_or(0.0));
            out.model = compat[static_cast<std::size_t>(sample_model(utils, crng))];
            out.result = local_train(models_[static_cast<std::size_t>(out.model)], weights_.at(out.model),
                                     world_.data, client.data.train, cfg_.local_steps, cfg_.batch_size,
                                     cfg_.learning_rate, crng);
            out.ok = true;
        } catch (const NumericError& e) {
            out.ok = false;
            out.error = e.what();
        }
    });

    RoundReport report;
    report.round = t;

    RoundUpdates updates;
    std::map<int, double> round_losses;
    std::map<int, ModelId> assigned;
    long long round_macs = 0;
    double round_time = 0.0;
    double comm_mb = 0.0;

    for (const ClientOutcome& out : outcomes) {
        const ClientRecord& client = world_.clients[static_cast<std::size_t>(out.client)];
        if (!out.ok) {
            events_.push_back("client_error round=" + std::to_string(t) + " client=" +
                              std::to_string(out.client) + " model=" + std::to_string(out.model) +
                              " error=" + out.error);
            continue;
        }
        const Model& m = models_[static_cast<std::size_t>(out.model)];
        const long long model_macs = mac_count(m);
        events_.push_back("assign round=" + std::to_string(t) + " client=" + std::to_string(out.client) +
                          " model=" + std::to_string(out.model) + " macs=" + std::to_string(model_macs) +
                          " capacity=" + std::to_string(client.capacity_macs));

        ClientUpdate u;
        u.client_id = out.client;
        u.weights = out.result.weights;
        u.grads = out.result.avg_grad;
        u.sample_count = static_cast<long long>(client.data.train.size());
        u.loss = out.result.avg_loss;
        updates[out.model].push_back(std::move(u));

        round_losses[out.client] = out.result.avg_loss;
        assigned[out.client] = out.model;
        report.participant_counts[out.model]++;

        const long long client_macs = model_macs * cfg_.batch_size * cfg_.local_steps * cfg_.train_mac_multiplier;
        round_macs += client_macs;
        round_time = std::max(round_time, static_cast<double>(client_macs) / client.speed_macs_per_sec);
        // Download + upload of the assigned model, plus one scalar loss.
        comm_mb += (2.0 * static_cast<double>(param_count(m)) * 8.0 + 8.0) / 1e6;
    }

    // Utility updates from standardized losses.
    std::map<int, double> std_losses = standardize_losses(round_losses);
    for (const auto& [cid, z] : std_losses) {
        update_utilities(utilities_, world_.clients[static_cast<std::size_t>(cid)], assigned.at(cid), z, models_);
    }

    // FedAvg per model, then cross-model soft aggregation.
    weights_ = update_weights(models_, weights_, updates, t, cfg_.aggregation);
    for (const auto& [mid, w] : weights_) {
        if (!w.all_finite()) throw NumericError("aggregated weights diverged for model " + std::to_string(mid));
    }

    // Convergence and activeness feed off the current largest model.
    const Model& largest = models_.back();
    auto upd_it = updates.find(largest.id);
    if (upd_it != updates.end() && !upd_it->second.empty()) {
        WeightSet agg_grad = fedavg_grads(upd_it->second);
        last_activeness_ = cell_activeness(act_tracker_, largest, agg_grad, weights_.at(largest.id));
        double loss_sum = 0.0;
        for (const ClientUpdate& u : upd_it->second) loss_sum += u.loss;
        doc_tracker_.push(loss_sum / static_cast<double>(upd_it->second.size()));
    }
    report.doc = compute_doc(doc_tracker_);

    if (should_transform(report.doc, cfg_.doc.threshold, largest, max_capacity_, cfg_.transform.widen_factor) &&
        !last_activeness_.empty()) {
        Rng trng(transform_stream_seed(cfg_.seed, t));
        auto transformed =
            transform_model(largest, weights_.at(largest.id), last_activeness_, cfg_.transform, ids_, trng,
                            max_capacity_, static_cast<ModelId>(models_.size()), t, cfg_.warm_start,
                            cfg_.random_cell_selection);
        if (transformed.has_value()) {
            TransformationEvent ev;
            ev.round = t;
            ev.parent = largest.id;
            ev.child = transformed->child.id;
            ev.ops = transformed->ops;
            ev.child_macs = mac_count(transformed->child);
            if (probe_batch_.size() > 0) {
                ev.parent_probe_loss = loss_and_grads(largest, weights_.at(largest.id), probe_batch_).loss;
                ev.child_probe_loss =
                    loss_and_grads(transformed->child, transformed->weights, probe_batch_).loss;
            }

            register_model(utilities_, models_, transformed->child, largest.id, world_.clients);
            weights_.emplace(transformed->child.id, std::move(transformed->weights));
            models_.push_back(std::move(transformed->child));
            doc_tracker_.reset();
            act_tracker_.reset();
            last_activeness_.clear();

            std::string ops_str;
            for (const auto& [cell, op] : ev.ops) {
                if (!ops_str.empty()) ops_str += ",";
                ops_str += "cell" + std::to_string(cell) + ":" + to_string(op);
            }
            events_.push_back("transform round=" + std::to_string(t) + " parent=" + std::to_string(ev.parent) +
                              " child=" + std::to_string(ev.child) + " ops=" + ops_str + " macs=" +
                              std::to_string(ev.child_macs) + " parent_probe_loss=" + fmt10(ev.parent_probe_loss) +
                              " child_probe_loss=" + fmt10(ev.child_probe_loss));
            report.transformation = std::move(ev);
        }
    }

    // Periodic probe evaluation drives the convergence stopping rule.
    if (cfg_.eval_interval > 0 && (t + 1) % cfg_.eval_interval == 0) evaluate_models();

    cum_macs_ += round_macs;
    cum_comm_mb_ += comm_mb;
    report.model_count = static_cast<int>(models_.size());
    report.largest_macs = mac_count(models_.back());
    report.round_macs = round_macs;
    report.cum_macs = cum_macs_;
    report.round_time_s = round_time;
    report.comm_mb = comm_mb;
    if (!round_losses.empty()) {
        double sum = 0.0;
        for (const auto& [c, l] : round_losses) sum += l;
        report.mean_loss = sum / static_cast<double>(round_losses.size());
    }
    for (const auto& [mid, clients] : updates) {
        double sum = 0.0;
        for (const ClientUpdate& u : clients) sum += u.loss;
        report.model_mean_loss[mid] = sum / static_cast<double>(clients.size());
    }
    for (const Model& m : models_) {
        double sum = 0.0;
        int n = 0;
        for (const ClientRecord& c : world_.clients) {
            auto u = utilities_.get(c.id, m.id);
            if (u.has_value()) {
                sum += *u;
                ++n;
            }
        }
        if (n > 0) report.utility_mean[m.id] = sum / n;
    }

    reports_.push_back(report);
    ++round_;
    return report;
}

void Simulation::evaluate_models() {
    if (world_.probe.size() == 0) return;
    std::vector<int> rows(static_cast<std::size_t>(world_.probe.size()));
    std::iota(rows.begin(), rows.end(), 0);
    for (const Model& m : models_) {
        const double acc = accuracy(m, weights_.at(m.id), world_.probe, rows);
        int& seen = evals_seen_[m.id];
        ++seen;
        auto best = best_val_.find(m.id);
        const double prev_best = best == best_val_.end() ? -1.0 : best->second;
        if (acc > prev_best + cfg_.convergence_threshold_pp / 100.0) {
            best_val_[m.id] = acc;
            last_improvement_[m.id] = seen;
        }
    }
}

bool Simulation::all_models_converged() const {
    for (const Model& m : models_) {
        auto seen = evals_seen_.find(m.id);
        if (seen == evals_seen_.end()) return false;
        auto improved = last_improvement_.find(m.id);
        const int last = improved == last_improvement_.end() ? 0 : improved->second;
        if (seen->second - last < cfg_.convergence_window) return false;
    }
    return true;
}

bool Simulation::can_still_transform() const {
    auto macs = minimal_widen_macs(models_.back(), cfg_.transform.widen_factor);
    return macs.has_value() && *macs <= max_capacity_;
}

bool Simulation::finished() const {
    if (round_ >= cfg_.max_rounds) return true;
    return !can_still_transform() && all_models_converged();
}

RunResult Simulation::finish() {
    RunResult res;
    res.client_eval = final_evaluate(models_, weights_, utilities_, world_);
    for (const ClientEval& e : res.client_eval) {
        events_.push_back(
            "evaluate client=" + std::to_string(e.client) + " model=" + std::to_string(e.model) +
            " macs=" + std::to_string(mac_count(models_[static_cast<std::size_t>(e.model)])) +
            " capacity=" + std::to_string(world_.clients[static_cast<std::size_t>(e.client)].capacity_macs) +
            " accuracy=" + fmt10(e.accuracy));
    }
    std::vector<double> accs;
    accs.reserve(res.client_eval.size());
    for (const ClientEval& e : res.client_eval) accs.push_back(e.accuracy);
    res.mean_accuracy = mean_of(accs);
    res.iqr_accuracy = iqr_of(accs);
    res.total_macs = cum_macs_;
    res.total_comm_mb = cum_comm_mb_;
    res.rounds_executed = round_;
    res.models = models_;
    res.weights = weights_;
    res.utilities = utilities_;
    res.rounds = reports_;
    res.events = events_;
    return res;
}

RunResult run_training(const RunConfig& cfg, const World& world) {
    Simulation sim(cfg, world);
    while (!sim.finished()) sim.run_round();
    return sim.finish();
}

std::vector<ClientEval> final_evaluate(const std::vector<Model>& models,
                                       const std::map<ModelId, WeightSet>& weights,
                                       const UtilityTable& utilities, const World& world) {
    std::vector<ClientEval> out;
    out.reserve(world.clients.size());
    for (const ClientRecord& c : world.clients) {
        std::vector<ModelId> compat = compatible_models(c, models);
        ModelId pick = compat.front();
        double best = utilities.get(c.id, pick).value_or(0.0);
        for (ModelId m : compat) {
            const double u = utilities.get(c.id, m).value_or(0.0);
            if (u > best) { // strict: ties keep the smaller id
                best = u;
                pick = m;
            }
        }
        ClientEval e;
        e.client = c.id;
        e.model = pick;
        e.accuracy = accuracy(models[static_cast<std::size_t>(pick)], weights.at(pick), world.data, c.data.test);
        out.push_back(e);
    }
    return out;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double iqr_of(std::vector<double> xs) {
    if (xs.size() < 2) return 0.0;
    std::sort(xs.begin(), xs.end());
    auto quantile = [&](double p) {
        const double h = p * static_cast<double>(xs.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(h);
        const double frac = h - static_cast<double>(lo);
        if (lo + 1 >= xs.size()) return xs.back();
        return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
    };
    return quantile(0.75) - quantile(0.25);
}

void write_metrics_csv(const RunResult& result, std::ostream& out) {
    out << "round,model_count,largest_macs,mean_loss,doc,cum_macs,round_time_s,comm_mb\n";
    for (const RoundReport& r : result.rounds) {
        out << r.round << "," << r.model_count << "," << r.largest_macs << "," << fmt10(r.mean_loss) << ",";
        if (r.doc.has_value()) out << fmt10(*r.doc);
        out << "," << r.cum_macs << "," << fmt10(r.round_time_s) << "," << fmt10(r.comm_mb) << "\n";
    }
}

void write_assignments_csv(const RunResult& result, std::ostream& out) {
    out << "round,model_id,participants,mean_utility\n";
    for (const RoundReport& r : result.rounds) {
        for (const auto& [mid, mean_u] : r.utility_mean) {
            auto pit = r.participant_counts.find(mid);
            out << r.round << "," << mid << "," << (pit == r.participant_counts.end() ? 0 : pit->second)
                << "," << fmt10(mean_u) << "\n";
        }
    }
}

void write_summary(const RunResult& result, std::ostream& out) {
    out << "mean_acc " << fmt10(result.mean_accuracy) << "\n";
    out << "iqr_acc " << fmt10(result.iqr_accuracy) << "\n";
    out << "total_macs " << result.total_macs << "\n";
    out << "models " << result.models.size() << "\n";
    out << "rounds " << result.rounds_executed << "\n";
    out << "total_comm_mb " << fmt10(result.total_comm_mb) << "\n";
}

void write_event_log(const RunResult& result, std::ostream& out) {
    for (const std::string& e : result.events) out << e << "\n";
}

} // namespace fedtrans

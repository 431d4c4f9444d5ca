#include "fedtrans/client_manager.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedtrans/errors.hpp"
#include "fedtrans/transformer.hpp"

namespace fedtrans {

bool UtilityTable::has(int client, ModelId model) const {
    const auto& row = rows_.at(static_cast<std::size_t>(client));
    return row.find(model) != row.end();
}

std::optional<double> UtilityTable::get(int client, ModelId model) const {
    const auto& row = rows_.at(static_cast<std::size_t>(client));
    auto it = row.find(model);
    if (it == row.end()) return std::nullopt;
    return it->second;
}

void UtilityTable::set(int client, ModelId model, double value) {
    rows_.at(static_cast<std::size_t>(client))[model] = value;
}

void UtilityTable::add(int client, ModelId model, double delta) {
    rows_.at(static_cast<std::size_t>(client))[model] += delta;
}

std::vector<int> select_clients(int registry_size, int n, Rng& rng) {
    if (n > registry_size) throw ConfigError("cannot select " + std::to_string(n) + " clients out of " +
                                             std::to_string(registry_size));
    if (n < 0) throw ConfigError("negative selection size");
    std::vector<int> ids(static_cast<std::size_t>(registry_size));
    std::iota(ids.begin(), ids.end(), 0);
    // Partial Fisher-Yates: the first n slots are the draw.
    for (int i = 0; i < n; ++i) {
        int j = i + rng.uniform_int(registry_size - i);
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    ids.resize(static_cast<std::size_t>(n));
    return ids;
}

std::vector<ModelId> compatible_models(const ClientRecord& client, const std::vector<Model>& models) {
    std::vector<ModelId> out;
    for (const Model& m : models) {
        if (mac_count(m) <= client.capacity_macs) out.push_back(m.id);
    }
    return out;
}

std::vector<double> softmax_probabilities(const std::vector<double>& utilities) {
    if (utilities.empty()) throw DimensionError("softmax over empty utility list");
    std::vector<double> u = utilities;
    for (double& v : u) v = std::clamp(v, -50.0, 50.0);
    double mx = *std::max_element(u.begin(), u.end());
    double sum = 0.0;
    for (double& v : u) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : u) v /= sum;
    return u;
}

int sample_model(const std::vector<double>& utilities, Rng& rng) {
    if (utilities.empty()) throw DimensionError("sample_model with no compatible model");
    if (utilities.size() == 1) return 0;
    std::vector<double> p = softmax_probabilities(utilities);
    double x = rng.uniform();
    double cum = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        cum += p[k];
        if (x < cum) return static_cast<int>(k);
    }
    return static_cast<int>(p.size()) - 1;
}

std::map<int, double> standardize_losses(const std::map<int, double>& round_losses) {
    std::map<int, double> out;
    const std::size_t n = round_losses.size();
    if (n == 0) return out;
    double mean = 0.0;
    for (const auto& [c, l] : round_losses) mean += l;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& [c, l] : round_losses) var += (l - mean) * (l - mean);
    double std = std::sqrt(var / static_cast<double>(n));
    for (const auto& [c, l] : round_losses) {
        out[c] = std < 1e-12 ? 0.0 : (l - mean) / std;
    }
    return out;
}

void update_utilities(UtilityTable& table, const ClientRecord& client, ModelId assigned,
                      double std_loss, const std::vector<Model>& models) {
    for (const Model& m : models) {
        if (mac_count(m) > client.capacity_macs) continue;
        double sim = model_similarity(models, m.id, assigned);
        table.add(client.id, m.id, -std_loss * sim);
    }
}

void register_model(UtilityTable& table, const std::vector<Model>& models, const Model& child,
                    ModelId parent, const std::vector<ClientRecord>& clients) {
    const long long child_macs = mac_count(child);
    for (const ClientRecord& c : clients) {
        if (child_macs > c.capacity_macs) continue;
        auto parent_u = table.get(c.id, parent);
        // A client that can run the child can run the (smaller) parent.
        table.set(c.id, child.id, parent_u.value_or(0.0));
    }
    (void)models;
}

} // namespace fedtrans

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedfv/model.hpp"
#include "fedfv/rng.hpp"
#include "fedfv/vec.hpp"

namespace fedfv {

// Server-side trace of the latest pseudo-gradient of every client that has
// ever reported, together with the round it was produced in.
class GradientHistory {
public:
    struct Entry {
        Vec grad;
        int round = -1;
    };

    void update(int client_id, Vec grad, int round) {
        auto it = entries_.find(client_id);
        if (it != entries_.end() && round <= it->second.round)
            throw std::invalid_argument("GradientHistory: round must increase on overwrite");
        entries_[client_id] = Entry{std::move(grad), round};
    }

    const std::map<int, Entry>& entries() const { return entries_; }

    bool contains(int client_id) const { return entries_.count(client_id) > 0; }

    const Entry& at(int client_id) const { return entries_.at(client_id); }

private:
    std::map<int, Entry> entries_;
};

enum class Algorithm { FedAvg, FedFV };
enum class OrderMode { LossAscending, Random, Reverse };

struct FedFVConfig {
    double alpha = 0.1;            // fraction of highest-loss clients exempt from projection
    int tau = 0;                   // how many past rounds of history to consult
    int sample_count = 10;         // clients selected per round
    double dropout_prob = 0.0;     // independent per-client drop probability
    int total_rounds = 300;
    std::vector<double> weights;   // sampling probabilities p_k, sum to 1
};

inline void validate(const FedFVConfig& cfg) {
    const int k = static_cast<int>(cfg.weights.size());
    if (cfg.sample_count < 1 || cfg.sample_count > k)
        throw std::invalid_argument("config: sample_count must be in [1, num_clients]");
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw std::invalid_argument("config: alpha must be in [0,1]");
    if (cfg.tau < 0) throw std::invalid_argument("config: tau must be >= 0");
    if (cfg.dropout_prob < 0.0 || cfg.dropout_prob >= 1.0)
        throw std::invalid_argument("config: dropout_prob must be in [0,1)");
    if (cfg.total_rounds < 1) throw std::invalid_argument("config: total_rounds must be >= 1");
    double sum = 0.0;
    for (double w : cfg.weights) {
        if (w < 0.0) throw std::invalid_argument("config: negative sampling weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("config: weights must sum to 1");
}

// Draws m distinct clients without replacement, each draw proportional to the
// weights renormalized over the remaining pool. Deterministic in (seed, round).
inline std::vector<int> sample_clients(const std::vector<double>& weights, int m, int round,
                                       std::uint64_t seed) {
    const int k = static_cast<int>(weights.size());
    if (m > k) throw std::invalid_argument("sample_clients: m > population");
    Rng rng(mix_seed(seed, kSeedSample, static_cast<std::uint64_t>(round)));

    std::vector<double> w = weights;
    std::vector<int> ids(k);
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<int> picked;
    picked.reserve(m);
    for (int draw = 0; draw < m; ++draw) {
        double total = 0.0;
        for (int i = 0; i < k - draw; ++i) total += w[i];
        std::size_t chosen = k - draw - 1;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double cum = 0.0;
            for (int i = 0; i < k - draw; ++i) {
                cum += w[i];
                if (r < cum) {
                    chosen = static_cast<std::size_t>(i);
                    break;
                }
            }
        } else {
            chosen = rng.index(static_cast<std::size_t>(k - draw));  // all-zero tail: uniform
        }
        picked.push_back(ids[chosen]);
        w.erase(w.begin() + static_cast<std::ptrdiff_t>(chosen));
        ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(chosen));
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

// Each selected client independently drops with probability dropout_prob. At
// least one client survives: if all drop, the smallest id is retained.
inline std::vector<int> apply_dropout(const std::vector<int>& selected, double dropout_prob,
                                      int round, std::uint64_t seed) {
    if (dropout_prob <= 0.0 || selected.empty()) return selected;
    Rng rng(mix_seed(seed, kSeedDropout, static_cast<std::uint64_t>(round)));
    std::vector<int> survivors;
    survivors.reserve(selected.size());
    for (int id : selected) {
        if (rng.uniform() >= dropout_prob) survivors.push_back(id);
    }
    if (survivors.empty()) survivors.push_back(selected.front());
    return survivors;
}

// Weighted sum of client gradients. Both aggregation paths go through this
// loop so that uniform weights give bit-identical results on either.
inline Vec aggregate_weighted(const std::vector<ClientUpdate>& updates,
                              const std::vector<double>& weights) {
    if (updates.empty()) throw std::invalid_argument("aggregate: empty update set");
    if (updates.size() != weights.size()) throw std::invalid_argument("aggregate: weight count mismatch");
    Vec acc(updates.front().grad.size(), 0.0);
    for (std::size_t i = 0; i < updates.size(); ++i) add_scaled(acc, weights[i], updates[i].grad);
    return acc;
}

inline Vec aggregate_mean(const std::vector<ClientUpdate>& updates) {
    return aggregate_weighted(updates,
                              std::vector<double>(updates.size(), 1.0 / updates.size()));
}

// Positions into the update list, ordered by ascending training loss with ties
// broken by ascending client id. The position in this list decides when a
// gradient serves as the projection target.
struct ProjectingOrder {
    std::vector<std::size_t> positions;
};

inline ProjectingOrder build_projecting_order(const std::vector<ClientUpdate>& updates) {
    if (updates.empty()) throw std::invalid_argument("projecting order: empty update set");
    ProjectingOrder po;
    po.positions.resize(updates.size());
    std::iota(po.positions.begin(), po.positions.end(), std::size_t{0});
    std::sort(po.positions.begin(), po.positions.end(), [&](std::size_t a, std::size_t b) {
        if (updates[a].loss != updates[b].loss) return updates[a].loss < updates[b].loss;
        return updates[a].client_id < updates[b].client_id;
    });
    return po;
}

// Order-ablation variants: Random reshuffles the target order per round,
// Reverse flips it (highest loss first).
inline ProjectingOrder apply_order_mode(ProjectingOrder po, OrderMode mode, int round,
                                        std::uint64_t seed) {
    switch (mode) {
        case OrderMode::LossAscending:
            break;
        case OrderMode::Reverse:
            std::reverse(po.positions.begin(), po.positions.end());
            break;
        case OrderMode::Random: {
            Rng rng(mix_seed(seed, kSeedOrder, static_cast<std::uint64_t>(round)));
            rng.shuffle(po.positions);
            break;
        }
    }
    return po;
}

// Number of clients exempt from projection: the ceil(alpha*m) highest-loss
// ones keep their original gradients (alpha=1 reduces to the plain mean,
// alpha=0 projects everyone). The epsilon guards exact rationals like 1/3
// against round-off flipping the count.
inline std::size_t exempt_count(double alpha, std::size_t m) {
    const double x = alpha * static_cast<double>(m);
    const double c = std::ceil(x - 1e-9);
    return static_cast<std::size_t>(std::max(0.0, std::min(c, static_cast<double>(m))));
}

// Projects each non-exempt client's gradient onto the normal plane of every
// conflicting gradient in target order, then averages. Every client projects
// against the original gradients, so the per-client passes are independent.
inline Vec mitigate_internal(const std::vector<ClientUpdate>& updates, const ProjectingOrder& order,
                             double alpha, int* projection_count = nullptr,
                             std::vector<Vec>* projected_out = nullptr) {
    if (updates.empty()) throw std::invalid_argument("mitigate_internal: empty update set");
    const std::size_t m = updates.size();
    const std::size_t kept = exempt_count(alpha, m);
    const std::size_t projected = m - kept;

    std::vector<Vec> pc(m);
    for (std::size_t i = 0; i < m; ++i) pc[i] = updates[i].grad;

    int fired = 0;
    for (std::size_t oi = 0; oi < projected; ++oi) {
        const std::size_t k = order.positions[oi];
        Vec& g = pc[k];
        for (std::size_t oj = 0; oj < m; ++oj) {
            const std::size_t tj = order.positions[oj];
            if (tj == k) continue;
            const Vec& target = updates[tj].grad;
            if (conflicts(g, target)) {
                g = project_to_normal_plane(g, target);
                ++fired;
            }
        }
    }
    if (projection_count) *projection_count = fired;

    const double w = 1.0 / static_cast<double>(m);
    Vec acc(updates.front().grad.size(), 0.0);
    for (std::size_t i = 0; i < m; ++i) add_scaled(acc, w, pc[i]);
    if (projected_out) *projected_out = std::move(pc);
    return acc;
}

// Walks history lags from oldest (t - tau) to newest (t - 1). For each lag the
// conflicting stored gradients are summed; the update is projected only if it
// also conflicts with that sum, since individually conflicting gradients can
// cancel into a harmless one.
inline Vec mitigate_external(Vec g, const GradientHistory& history, int current_round, int tau,
                             int* projection_count = nullptr) {
    int fired = 0;
    for (int i = tau; i >= 1; --i) {
        const int wanted = current_round - i;
        Vec con(g.size(), 0.0);
        bool any = false;
        for (const auto& [client_id, entry] : history.entries()) {
            if (entry.round == wanted && conflicts(g, entry.grad)) {
                add_scaled(con, 1.0, entry.grad);
                any = true;
            }
        }
        if (any && conflicts(g, con)) {
            g = project_to_normal_plane(g, con);
            ++fired;
        }
    }
    if (projection_count) *projection_count = fired;
    return g;
}

struct RoundLog {
    int round = 0;
    std::vector<int> selected;
    std::vector<int> survivors;
    std::vector<double> losses;  // per survivor, in survivor order
    int conflict_pairs = 0;
    int internal_projections = 0;
    int external_projections = 0;
    double cos_internal = 1.0;   // cosine(plain mean, after internal mitigation)
    double cos_final = 1.0;      // cosine(plain mean, applied update)
    double update_norm = 0.0;
    double target_norm = 0.0;    // norm of the plain survivor mean
    bool skipped = false;        // zero-norm update, model left unchanged
};

// Produces one client's update for a round. The production trainer wraps
// local_train_on; tests inject hand-built gradients through the same seam.
using Trainer = std::function<ClientUpdate(int client_id, int round, const Model& model)>;

struct FederatedRun {
    Algorithm algorithm = Algorithm::FedFV;
    OrderMode order_mode = OrderMode::LossAscending;
    FedFVConfig cfg;
    Model model;
    std::vector<double> agg_weights;  // per-client data sizes n_k for FedAvg weighting
    std::uint64_t seed = 0;
    int t = 0;
    GradientHistory history;
    std::vector<RoundLog> logs;
};

inline int count_conflict_pairs(const std::vector<ClientUpdate>& updates) {
    int pairs = 0;
    for (std::size_t i = 0; i < updates.size(); ++i) {
        for (std::size_t j = i + 1; j < updates.size(); ++j) {
            if (conflicts(updates[i].grad, updates[j].grad)) ++pairs;
        }
    }
    return pairs;
}

// One communication round: sample, drop, train, and either average (FedAvg,
// data-size weighted) or run the conflict-mitigation pipeline and rescale the
// result to the plain-mean length (FedFV). Returns the appended log record.
inline const RoundLog& run_round(FederatedRun& run, const Trainer& trainer) {
    if (run.t >= run.cfg.total_rounds) throw std::logic_error("run_round: past total_rounds");
    RoundLog log;
    log.round = run.t;

    log.selected = sample_clients(run.cfg.weights, run.cfg.sample_count, run.t, run.seed);
    log.survivors = apply_dropout(log.selected, run.cfg.dropout_prob, run.t, run.seed);

    std::vector<ClientUpdate> updates;
    updates.reserve(log.survivors.size());
    for (int id : log.survivors) {
        updates.push_back(trainer(id, run.t, run.model));
        log.losses.push_back(updates.back().loss);
    }
    log.conflict_pairs = count_conflict_pairs(updates);

    Vec update;
    if (run.algorithm == Algorithm::FedAvg) {
        std::vector<double> w(updates.size());
        double total = 0.0;
        for (std::size_t i = 0; i < updates.size(); ++i) {
            w[i] = run.agg_weights.empty() ? 1.0 : run.agg_weights[updates[i].client_id];
            total += w[i];
        }
        for (double& wi : w) wi /= total;
        update = aggregate_weighted(updates, w);
        log.update_norm = norm(update);
        log.target_norm = log.update_norm;
    } else {
        for (const ClientUpdate& u : updates) run.history.update(u.client_id, u.grad, u.round);

        const ProjectingOrder order =
            apply_order_mode(build_projecting_order(updates), run.order_mode, run.t, run.seed);
        const Vec plain_mean = aggregate_mean(updates);
        log.target_norm = norm(plain_mean);

        update = mitigate_internal(updates, order, run.cfg.alpha, &log.internal_projections);
        log.cos_internal =
            (norm(update) > 0.0 && log.target_norm > 0.0) ? cosine(plain_mean, update) : 1.0;

        if (run.t >= run.cfg.tau) {
            update = mitigate_external(std::move(update), run.history, run.t, run.cfg.tau,
                                       &log.external_projections);
        }

        if (norm(update) == 0.0 || log.target_norm == 0.0) {
            log.skipped = true;
            log.update_norm = 0.0;
            log.cos_final = 1.0;
            run.logs.push_back(std::move(log));
            ++run.t;
            return run.logs.back();
        }
        update = rescale_to(update, log.target_norm);
        log.cos_final = cosine(plain_mean, update);
        log.update_norm = norm(update);
    }

    if (log.update_norm == 0.0) {
        log.skipped = true;
    } else {
        add_scaled(run.model.params, -1.0, update);
    }
    run.logs.push_back(std::move(log));
    ++run.t;
    return run.logs.back();
}

}  // namespace fedfv

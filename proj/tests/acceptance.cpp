// Acceptance suite: runs every top-level correctness criterion at its stated
// tolerance and prints one PASS/FAIL line per criterion. Exit code is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fedfv/data.hpp"
#include "fedfv/experiment.hpp"
#include "fedfv/metrics.hpp"
#include "fedfv/model.hpp"
#include "fedfv/server.hpp"
#include "fedfv/theory.hpp"

using namespace fedfv;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what) {
    std::printf("%s  %2d: %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// helper for finite-difference checks, independent of the analytic path
Vec fd_gradient(Model model, const Matrix& x, const std::vector<int>& y, double step) {
    Vec grad(model.params.size(), 0.0);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        const double saved = model.params[i];
        model.params[i] = saved + step;
        const double up = forward_loss(model, x, y);
        model.params[i] = saved - step;
        const double down = forward_loss(model, x, y);
        model.params[i] = saved;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

double grid_min_norm(const std::vector<Vec>& grads, int steps) {
    const std::size_t m = grads.size();
    double best = std::numeric_limits<double>::infinity();
    const auto eval = [&](double p0, double p1, double p2) {
        double sq = 0.0;
        for (std::size_t j = 0; j < grads[0].size(); ++j) {
            double v = p0 * grads[0][j];
            if (m > 1) v += p1 * grads[1][j];
            if (m > 2) v += p2 * grads[2][j];
            sq += v * v;
        }
        best = std::min(best, std::sqrt(sq));
    };
    if (m == 1) {
        eval(1, 0, 0);
    } else if (m == 2) {
        for (int i = 0; i <= steps; ++i) eval(double(i) / steps, 1.0 - double(i) / steps, 0);
    } else {
        for (int i = 0; i <= steps; ++i) {
            for (int j = 0; j <= steps - i; ++j) {
                eval(double(i) / steps, double(j) / steps, 1.0 - double(i + j) / steps);
            }
        }
    }
    return best;
}

ExperimentConfig default_config(const std::string& out) {
    ExperimentConfig cfg;  // desk-scale defaults: 100 clients, 2 shards, 10% sampling
    cfg.output_dir = out;
    cfg.eval_every = cfg.rounds;  // acceptance only needs the final evaluation
    return cfg;
}

void criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(1001);
    long count = 0;
    bool ok = true;
    while (count < 100000) {
        const std::size_t d = 2 + rng.index(63);  // 2..64
        Vec v(d), t(d);
        for (auto& x : v) x = rng.normal();
        for (auto& x : t) x = rng.normal();
        const double nv = norm(v), nt = norm(t);
        if (nv == 0.0 || nt == 0.0) continue;
        ++count;
        const Vec p = project_to_normal_plane(v, t);
        if (std::abs(dot(p, t)) > 1e-9 * nv * nt) ok = false;
        const double c = dot(v, t) / (nv * nt);
        const double expect = (1.0 - c * c) * nv * nv;
        if (std::abs(dot(p, p) - expect) > 1e-9 * nv * nv) ok = false;
    }
    const double dt = seconds_since(t0);
    report(1, ok && dt < 10.0,
           "projection identities on 1e5 random pairs (" + std::to_string(dt).substr(0, 5) + " s)");
}

void criterion2() {
    bool ok = true;

    // two-gradient worked example, alpha = 0
    const std::vector<ClientUpdate> updates = [] {
        std::vector<ClientUpdate> u(2);
        u[0] = {1, {1, 0}, 0.5, 0};
        u[1] = {2, {-1, 1}, 1.0, 0};
        return u;
    }();
    const Vec mean = mitigate_internal(updates, build_projecting_order(updates), 0.0);
    ok = ok && std::abs(mean[0] - 0.25) < 1e-12 && std::abs(mean[1] - 0.75) < 1e-12;

    const Vec plain = aggregate_mean(updates);  // (0, 0.5)
    const Vec rescaled = rescale_to(mean, norm(plain));
    const double f = 0.5 / std::sqrt(0.25 * 0.25 + 0.75 * 0.75);
    ok = ok && std::abs(rescaled[0] - 0.25 * f) < 1e-12 && std::abs(rescaled[1] - 0.75 * f) < 1e-12;

    // three injected clients, full participation, one round vs scripted trace
    const Vec g0 = {1, 0, 0, 0, 0, 0};
    const Vec g1 = {-1, 1, 0, 0, 0, 0};
    const Vec g2 = {0.2, -0.1, 0, 0, 0, 0};
    FederatedRun run;
    run.algorithm = Algorithm::FedFV;
    run.cfg.alpha = 0.0;
    run.cfg.tau = 0;
    run.cfg.sample_count = 3;
    run.cfg.total_rounds = 1;
    run.cfg.weights.assign(3, 1.0 / 3.0);
    run.seed = 7;
    run.model = make_model(ModelKind::SoftmaxRegression, 2, 2);
    run.agg_weights.assign(3, 1.0);
    const Vec theta0 = run.model.params;
    const std::map<int, std::pair<Vec, double>> table = {
        {0, {g0, 0.5}}, {1, {g1, 1.0}}, {2, {g2, 0.2}}};
    run_round(run, [&](int id, int round, const Model&) {
        ClientUpdate u;
        u.client_id = id;
        u.grad = table.at(id).first;
        u.loss = table.at(id).second;
        u.round = round;
        return u;
    });

    // scripted: order [2, 0, 1] by loss; project each against originals
    Vec pc0 = g0, pc1 = g1, pc2 = g2;
    for (const Vec* target : {&g2, &g1}) {
        if (conflicts(pc0, *target)) pc0 = project_to_normal_plane(pc0, *target);
    }
    for (const Vec* target : {&g2, &g0}) {
        if (conflicts(pc1, *target)) pc1 = project_to_normal_plane(pc1, *target);
    }
    for (const Vec* target : {&g0, &g1}) {
        if (conflicts(pc2, *target)) pc2 = project_to_normal_plane(pc2, *target);
    }
    Vec mean3(6, 0.0);
    for (const Vec* pc : {&pc0, &pc1, &pc2}) add_scaled(mean3, 1.0 / 3.0, *pc);
    Vec plain3(6, 0.0);
    for (const Vec* g : {&g0, &g1, &g2}) add_scaled(plain3, 1.0 / 3.0, *g);
    const Vec update = rescale_to(mean3, norm(plain3));
    for (std::size_t i = 0; i < theta0.size(); ++i) {
        if (std::abs(run.model.params[i] - (theta0[i] - update[i])) > 1e-12) ok = false;
    }
    report(2, ok, "hand-trace equivalence (two-gradient example and scripted 3-client round)");
}

void criterion3() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(3003);
    int checked = 0;
    bool ok = true;
    int attempts = 0;
    while (checked < 1000 && attempts < 60000) {
        ++attempts;
        const std::size_t m = 2 + rng.index(5);
        const std::size_t d = std::max(m, 2 + rng.index(7));
        const std::vector<Vec> grads = random_obtuse_ensemble(m, d, rng);
        const ProjectionRun run = ordered_projection_run(grads);
        if (!run.premise_held) continue;
        ++checked;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k <= m; ++k) {
            const double bound = residual_conflict_bound(run, k);
            if (bound > prev + 1e-12) ok = false;  // k-monotonicity
            prev = bound;
            const double conflict =
                std::max(0.0, -dot(run.original[k - 1], run.mean)) / run.norms[0][k - 1];
            if (conflict > bound + 1e-12) ok = false;
        }
        for (const BoundCheck& c : pairwise_conflict_bound_checks(run)) {
            if (!c.skipped && !c.passed) ok = false;
        }
    }
    const double dt = seconds_since(t0);
    report(3, ok && checked >= 1000 && dt < 60.0,
           "ordered + pairwise conflict bounds on " + std::to_string(checked) +
               " premise-holding ensembles (" + std::to_string(dt).substr(0, 5) + " s)");
}

void criterion4() {
    bool ok = true;
    ok = ok && conflict_bound_factor(4, 4, 0.3, 0.7) == 0.0;
    ok = ok && conflict_bound_factor(2, 2, 0.9, 0.9) == 0.0;
    ok = ok && conflict_bound_factor(5, 2, 1.0, 1.0) == 0.0;
    ok = ok && std::abs(conflict_bound_factor(3, 1, 0.6, 0.8) - 0.9216) < 1e-12;
    report(4, ok, "bound factor spot values");
}

void criterion5() {
    Rng rng(5005);
    bool ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 2 + rng.index(5);
        ConvexQuadratic f1, f2;
        f1.scale = rng.uniform(0.15, 0.3);
        f2.scale = rng.uniform(0.6, 0.7);
        f1.center.resize(d);
        f2.center.resize(d);
        Vec theta0(d);
        for (auto& x : f1.center) x = rng.uniform(-1, 1);
        for (auto& x : f2.center) x = rng.uniform(-1, 1);
        for (auto& x : theta0) x = rng.uniform(-2, 2);
        const double big_l = f1.scale + f2.scale;  // common smoothness bound, <= 1
        const auto traj = run_two_objective_descent(f1, f2, theta0, 1.0 / big_l, 5000);

        for (std::size_t s = 1; s < traj.values.size(); ++s) {
            if (traj.values[s] > traj.values[s - 1] + 1e-9) ok = false;
        }
        Vec opt = scaled(f1.center, f1.scale / big_l);
        add_scaled(opt, f2.scale / big_l, f2.center);
        const bool at_opt = norm(sub(traj.final_theta, opt)) < 1e-4;
        const bool stationary =
            pareto_stationary({f1.grad(traj.final_theta), f2.grad(traj.final_theta)}, 1e-4);
        if (!at_opt && !stationary) ok = false;
    }
    report(5, ok, "two-quadratic descent: monotone and Pareto-stationary/optimal, 100 problems");
}

void criterion6() {
    bool ok = true;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        ExperimentConfig base = default_config("");
        base.rounds = 50;
        base.seeds = {seed};
        base.dropout = 0.0;

        FederationSpec fed = base.federation;
        fed.seed = seed;
        const Dataset data = synth_classification(fed.num_classes, fed.examples_per_class,
                                                  fed.feature_dim, fed.cluster_spread, seed);
        const auto clients = shard_partition(data, fed);
        LocalTrainConfig ltc = base.train;
        ltc.shuffle_seed = seed;
        const Trainer trainer = [&](int id, int round, const Model& model) {
            return local_train(model, clients[id], ltc, round, id);
        };
        const auto build = [&](Algorithm alg, double alpha, int tau) {
            FederatedRun run;
            run.algorithm = alg;
            run.cfg.alpha = alpha;
            run.cfg.tau = tau;
            run.cfg.sample_count = effective_sample_count(base);
            run.cfg.total_rounds = base.rounds;
            run.cfg.weights.assign(fed.num_clients, 1.0 / fed.num_clients);
            run.seed = seed;
            run.model = make_model(base.model_kind, fed.feature_dim, fed.num_classes);
            init_params(run.model, seed);
            run.agg_weights.resize(fed.num_clients);
            for (int k = 0; k < fed.num_clients; ++k)
                run.agg_weights[k] = static_cast<double>(clients[k].n_train());
            return run;
        };
        FederatedRun avg = build(Algorithm::FedAvg, 0.0, 0);
        FederatedRun fv = build(Algorithm::FedFV, 1.0, 0);
        for (int t = 0; t < 50; ++t) {
            run_round(avg, trainer);
            run_round(fv, trainer);
            if (avg.model.params != fv.model.params) ok = false;  // bitwise comparison
        }
    }
    report(6, ok, "fedavg and fedfv(alpha=1, tau=0) bit-identical over 50 rounds, 3 seeds");
}

// criteria 7 and 8 share the 300-round default runs
void criteria7_and_8() {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path base = fs::temp_directory_path() / "fedfv_acceptance";
    fs::remove_all(base);

    ExperimentConfig fv = default_config((base / "fedfv").string());
    fv.algorithm = Algorithm::FedFV;
    fv.alpha = 0.1;
    fv.tau = 10;

    ExperimentConfig avg = default_config((base / "fedavg").string());
    avg.algorithm = Algorithm::FedAvg;

    bool rescale_ok = true;
    long checked_rounds = 0;
    {
        // criterion 7: rescale contract over one full 300-round fedfv run
        SeedRunHooks hooks;
        hooks.on_round = [&](const FederatedRun&, const RoundLog& log) {
            ++checked_rounds;
            if (!log.skipped &&
                std::abs(log.update_norm - log.target_norm) > 1e-9 * log.target_norm) {
                rescale_ok = false;
            }
        };
        run_single_seed(fv, 1, nullptr, hooks);
    }
    report(7, rescale_ok && checked_rounds == 300,
           "rescale contract on every round of a 300-round run");

    const ExperimentSummary sf = run_experiment(fv);
    const ExperimentSummary sa = run_experiment(avg);
    const double dt = seconds_since(t0);
    const bool lower_std = sf.acc_std.mean < sa.acc_std.mean;
    const bool higher_worst5 = sf.worst5.mean > sa.worst5.mean;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "fairness trend over 5 seeds: std %.4f < %.4f, worst5 %.4f > %.4f (%.0f s)",
                  sf.acc_std.mean, sa.acc_std.mean, sf.worst5.mean, sa.worst5.mean, dt);
    report(8, lower_std && higher_worst5 && dt < 900.0, buf);
}

void criterion9() {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "fedfv_acceptance" / "ablation";
    ExperimentConfig cfg = default_config(base.string());
    const AblationResult res = run_order_ablation(cfg);
    double asc = 0.0, rnd = 0.0, rev = 0.0;
    for (const auto& row : res.rows) {
        if (row.mode == OrderMode::LossAscending) asc = row.summary.acc_std.mean;
        if (row.mode == OrderMode::Random) rnd = row.summary.acc_std.mean;
        if (row.mode == OrderMode::Reverse) rev = row.summary.acc_std.mean;
    }
    const bool full_order = asc < rnd && rnd < rev;
    const bool weak_order = asc < rev;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "projecting-order trend: std asc %.4f / random %.4f / reverse %.4f%s", asc, rnd,
                  rev, full_order ? " (full ordering)" : "");
    report(9, weak_order, buf);
}

void criterion10() {
    Rng rng(101010);
    bool ok = true;
    for (ModelKind kind : {ModelKind::SoftmaxRegression, ModelKind::Mlp2}) {
        for (int trial = 0; trial < 20; ++trial) {
            const int d = 2 + static_cast<int>(rng.index(4));
            const int c = 2 + static_cast<int>(rng.index(3));
            const int h = 3 + static_cast<int>(rng.index(3));
            Model m = make_model(kind, d, c, h);
            for (double& p : m.params) p = rng.uniform(-0.5, 0.5);
            const int n = 1 + static_cast<int>(rng.index(4));
            Matrix x(n, d);
            std::vector<int> y(n);
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) x.row(i)[j] = rng.normal();
                y[i] = static_cast<int>(rng.index(c));
            }
            const Vec analytic = gradient(m, x, y);
            const Vec numeric = fd_gradient(m, x, y, 1e-5);
            for (std::size_t i = 0; i < analytic.size(); ++i) {
                if (std::abs(analytic[i] - numeric[i]) > 1e-5) ok = false;
            }
        }
    }
    report(10, ok, "analytic gradients match central finite differences, 20 instances per model");
}

void criterion11() {
    Rng rng(111111);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng.index(3);
        const std::size_t d = 2 + rng.index(4);
        std::vector<Vec> grads(m, Vec(d));
        double max_norm = 0.0;
        for (auto& g : grads) {
            for (auto& x : g) x = rng.normal();
            max_norm = std::max(max_norm, norm(g));
        }
        const double solver = min_convex_combination_norm(grads).value;
        const double grid = grid_min_norm(grads, 1000);
        if (solver > grid + 1e-9) ok = false;
        if (grid > solver + 3.0e-3 * max_norm * static_cast<double>(m)) ok = false;
    }
    report(11, ok, "pareto solver agrees with the 1e-3 simplex grid on 50 gradient sets");
}

}  // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criteria7_and_8();
    criterion9();
    criterion10();
    criterion11();
    std::printf("%s (%d criteria failed)\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
    return failures;
}

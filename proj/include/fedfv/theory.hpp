#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedfv/rng.hpp"
#include "fedfv/vec.hpp"

namespace fedfv {

// Trace of the ordered projection recursion: starting from the originals,
// vector i is projected onto the normal plane of original vector k for
// k = 1..m (skipping k == i) whenever they conflict at that moment.
//
// premise_held records whether every visited step actually conflicted; the
// conflict-bound checks are only meaningful on runs where it did, and are
// reported as skipped otherwise.
struct ProjectionRun {
    std::vector<Vec> original;
    std::vector<Vec> projected;               // g_i after all m passes
    Vec mean;                                 // average of the projected vectors
    std::vector<std::vector<double>> norms;   // norms[j][i] = norm of vector i after pass j
    std::vector<double> abs_cosines;          // initial pairwise + every step cosine, |.|
    bool premise_held = true;
    int fired = 0;
    double eps1 = 0.0;                        // min recorded |cos|
    double eps2 = 0.0;                        // max recorded |cos|
};

inline ProjectionRun ordered_projection_run(const std::vector<Vec>& grads) {
    const std::size_t m = grads.size();
    if (m < 2) throw std::invalid_argument("ordered_projection_run: need at least two gradients");
    for (const Vec& g : grads) {
        if (norm(g) == 0.0) throw ZeroNorm("ordered_projection_run: zero-norm gradient");
    }

    ProjectionRun run;
    run.original = grads;
    run.projected = grads;
    run.norms.assign(m + 1, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) run.norms[0][i] = norm(grads[i]);

    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            run.abs_cosines.push_back(std::abs(cosine(grads[i], grads[j])));
        }
    }

    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < m; ++i) {
            if (i == k) continue;
            Vec& g = run.projected[i];
            const double n = norm(g);
            if (n == 0.0) {
                run.premise_held = false;  // degenerate intermediate, cannot conflict
                continue;
            }
            run.abs_cosines.push_back(std::abs(cosine(g, grads[k])));
            if (conflicts(g, grads[k])) {
                g = project_to_normal_plane(g, grads[k]);
                ++run.fired;
            } else {
                run.premise_held = false;
            }
        }
        for (std::size_t i = 0; i < m; ++i) run.norms[k + 1][i] = norm(run.projected[i]);
    }

    run.mean.assign(run.projected.front().size(), 0.0);
    const double w = 1.0 / static_cast<double>(m);
    for (const Vec& g : run.projected) add_scaled(run.mean, w, g);

    run.eps1 = *std::min_element(run.abs_cosines.begin(), run.abs_cosines.end());
    run.eps2 = *std::max_element(run.abs_cosines.begin(), run.abs_cosines.end());
    return run;
}

// Upper bound on the residual conflict max(0, -unit(g_k) . mean) from the
// recorded intermediate norms: (eps^2 / m) * sum_{j=k}^{m-1} sum_{i != j+1}
// norms[j][i], with eps the largest recorded |cos|. Non-increasing in k; zero
// at k = m (the mean never conflicts with the last target).
inline double residual_conflict_bound(const ProjectionRun& run, std::size_t k) {
    const std::size_t m = run.original.size();
    if (k < 1 || k > m) throw std::invalid_argument("residual_conflict_bound: k out of range");
    double total = 0.0;
    for (std::size_t j = k; j <= m - 1; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            if (i == j) continue;  // position j+1 in 1-based indexing
            total += run.norms[j][i];
        }
    }
    return run.eps2 * run.eps2 / static_cast<double>(m) * total;
}

// Closed-form bound factor for the largest residual conflict after the ordered
// projection pass, given band limits eps1 <= |cos| <= eps2 along the run.
inline double conflict_bound_factor(int m, int k, double eps1, double eps2) {
    if (!(eps1 > 0.0 && eps1 <= eps2 && eps2 <= 1.0))
        throw std::invalid_argument("conflict_bound_factor: need 0 < eps1 <= eps2 <= 1");
    if (k < 1 || k > m) throw std::invalid_argument("conflict_bound_factor: k out of range");
    const double s = std::sqrt(1.0 - eps1 * eps1);
    if (s == 0.0) return 0.0;  // eps1 == 1, limit value
    return eps2 * eps2 * s * (1.0 - std::pow(s, m - k)) / (1.0 - s);
}

struct BoundCheck {
    std::size_t k = 0;        // 1-based position in the projection order
    double dot_with_mean = 0.0;
    double conflict = 0.0;    // max(0, -dot): the conflict magnitude being bounded
    double bound = 0.0;
    bool skipped = false;
    bool passed = false;
};

// Checks that the residual conflict max(0, -g_k . mean) stays within
// (m-1)/m * (max_i ||g_i||)^2 * factor(m, k, eps1, eps2) for every k of a
// projection run; skipped when the run's premise failed. The bound is
// one-sided: the derivation controls how much the mean can still conflict with
// g_k, not the aligned component (at k = m the bound is zero while the dot
// product is typically strictly positive).
inline std::vector<BoundCheck> pairwise_conflict_bound_checks(const ProjectionRun& run) {
    const std::size_t m = run.original.size();
    double max_norm = 0.0;
    for (std::size_t i = 0; i < m; ++i) max_norm = std::max(max_norm, run.norms[0][i]);

    std::vector<BoundCheck> checks(m);
    for (std::size_t k = 1; k <= m; ++k) {
        BoundCheck& c = checks[k - 1];
        c.k = k;
        if (!run.premise_held) {
            c.skipped = true;
            continue;
        }
        c.dot_with_mean = dot(run.original[k - 1], run.mean);
        c.conflict = std::max(0.0, -c.dot_with_mean);
        c.bound = (static_cast<double>(m) - 1.0) / static_cast<double>(m) * max_norm * max_norm *
                  conflict_bound_factor(static_cast<int>(m), static_cast<int>(k), run.eps1, run.eps2);
        c.passed = c.conflict <= c.bound + 1e-12;
    }
    return checks;
}

// Random ensemble whose pairwise cosines sit in a negative band, built from an
// equi-negative Gram frame plus jitter. Used to manufacture runs where every
// projection step conflicts; callers should still filter on premise_held.
// Requires d >= m (m pairwise-obtuse directions need that many dimensions).
inline std::vector<Vec> random_obtuse_ensemble(std::size_t m, std::size_t d, Rng& rng,
                                               double jitter = 0.02) {
    if (m < 2 || d < m) throw std::invalid_argument("random_obtuse_ensemble: need 2 <= m <= d");
    const double gamma = -0.9 / (static_cast<double>(m) - 1.0);

    // Cholesky of G = (1-gamma) I + gamma J, rows become the frame vectors.
    std::vector<std::vector<double>> L(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double v = (i == j) ? 1.0 : gamma;
            for (std::size_t p = 0; p < j; ++p) v -= L[i][p] * L[j][p];
            L[i][j] = (i == j) ? std::sqrt(v) : v / L[j][j];
        }
    }

    // Random rotation via Gram-Schmidt of a Gaussian matrix.
    std::vector<Vec> q(d, Vec(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) q[i][j] = rng.normal();
        for (std::size_t p = 0; p < i; ++p) add_scaled(q[i], -dot(q[i], q[p]), q[p]);
        const double n = norm(q[i]);
        if (n < 1e-12) return random_obtuse_ensemble(m, d, rng, jitter);  // retry, degenerate draw
        for (double& x : q[i]) x /= n;
    }

    std::vector<Vec> grads(m, Vec(d, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        Vec v(d, 0.0);
        for (std::size_t j = 0; j < m; ++j) add_scaled(v, L[i][j], q[j]);
        for (double& x : v) x += jitter * rng.normal();
        const double n = norm(v);
        const double scale = rng.uniform(0.5, 2.0);
        for (double& x : v) x *= scale / n;
        grads[i] = std::move(v);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Minimum-norm convex combination (Pareto stationarity test)
// ---------------------------------------------------------------------------

struct MinNormResult {
    double value = 0.0;            // min over the simplex of ||sum p_i g_i||
    std::vector<double> weights;   // attaining combination
};

namespace detail {

// Closed-form minimum of ||p g_a + (1-p) g_b|| over p in [0, 1].
inline std::pair<double, double> edge_min(const Vec& a, const Vec& b) {
    const Vec diff = sub(a, b);
    const double denom = dot(diff, diff);
    double p = 0.0;
    if (denom > 0.0) p = std::clamp(dot(b, sub(b, a)) / denom, 0.0, 1.0);
    Vec v = scaled(a, p);
    add_scaled(v, 1.0 - p, b);
    return {norm(v), p};
}

// Euclidean projection onto the probability simplex (sort-based).
inline void project_to_simplex(std::vector<double>& p) {
    std::vector<double> u = p;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        cum += u[i];
        const double cand = (cum - 1.0) / static_cast<double>(i + 1);
        if (u[i] - cand > 0.0) theta = cand;
    }
    for (double& x : p) x = std::max(x - theta, 0.0);
}

}  // namespace detail

namespace detail {

// Minimum of ||sum_{i in S} p_i g_i|| over the affine slice sum(p) = 1 of the
// face spanned by `support`, via its KKT system. Returns false when the system
// is singular or the optimum leaves the face (negative weight).
inline bool face_min(const std::vector<Vec>& grads, const std::vector<std::size_t>& support,
                     double pivot_floor, std::vector<double>& weights_out, double& value_out) {
    const std::size_t s = support.size();
    std::vector<std::vector<double>> a(s + 1, std::vector<double>(s + 2, 0.0));
    for (std::size_t r = 0; r < s; ++r) {
        for (std::size_t c = 0; c < s; ++c) a[r][c] = dot(grads[support[r]], grads[support[c]]);
        a[r][s] = 1.0;  // multiplier column
    }
    for (std::size_t c = 0; c < s; ++c) a[s][c] = 1.0;
    a[s][s + 1] = 1.0;  // rhs of the sum constraint

    for (std::size_t col = 0; col <= s; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r <= s; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < pivot_floor) return false;
        std::swap(a[col], a[pivot]);
        for (std::size_t r = 0; r <= s; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c <= s + 1; ++c) a[r][c] -= f * a[col][c];
        }
    }

    weights_out.assign(grads.size(), 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < s; ++r) {
        const double w = a[r][s + 1] / a[r][r];
        if (w < -1e-12) return false;
        weights_out[support[r]] = std::max(w, 0.0);
        total += weights_out[support[r]];
    }
    if (total <= 0.0) return false;
    for (double& w : weights_out) w /= total;

    Vec v(grads[0].size(), 0.0);
    for (std::size_t i = 0; i < grads.size(); ++i) add_scaled(v, weights_out[i], grads[i]);
    value_out = norm(v);
    return true;
}

}  // namespace detail

// Minimum-norm point of the convex hull of the given gradients, reported as a
// combination over the probability simplex. Small sets (m <= 8) are solved
// exactly by enumerating every face of the simplex; larger sets use projected
// gradient with an iteration cap and a tolerance on the objective decrease,
// polished on the identified face. Hitting the cap without the decrease
// flattening out is an error, never a silent answer.
inline MinNormResult min_convex_combination_norm(const std::vector<Vec>& grads,
                                                 int max_iters = 500, double tol = 1e-8) {
    const std::size_t m = grads.size();
    if (m == 0) throw std::invalid_argument("min_convex_combination_norm: empty set");

    MinNormResult res;
    if (m == 1) {
        res.value = norm(grads[0]);
        res.weights = {1.0};
        return res;
    }
    if (m == 2) {
        const auto [value, p] = detail::edge_min(grads[0], grads[1]);
        res.value = value;
        res.weights = {p, 1.0 - p};
        return res;
    }

    double trace = 0.0;
    for (const Vec& g : grads) trace += dot(g, g);
    const double pivot_floor = 1e-12 * std::max(trace, 1.0);

    if (m <= 8) {
        // The optimum sits on some face whose KKT solution is feasible;
        // vertices are always feasible, so a best candidate always exists.
        res.value = std::numeric_limits<double>::infinity();
        std::vector<double> weights;
        double value = 0.0;
        for (unsigned mask = 1; mask < (1u << m); ++mask) {
            std::vector<std::size_t> support;
            for (std::size_t i = 0; i < m; ++i) {
                if (mask & (1u << i)) support.push_back(i);
            }
            if (detail::face_min(grads, support, pivot_floor, weights, value) && value < res.value) {
                res.value = value;
                res.weights = weights;
            }
        }
        return res;
    }

    // Projected gradient on q(p) = || sum p_i g_i ||^2 with a fixed step from
    // the trace bound on the Gram spectrum.
    std::vector<double> p(m, 1.0 / static_cast<double>(m));
    const double step = trace > 0.0 ? 1.0 / (2.0 * trace) : 1.0;

    Vec v(grads[0].size(), 0.0);
    for (std::size_t i = 0; i < m; ++i) add_scaled(v, p[i], grads[i]);
    double obj = dot(v, v);
    const double scale = std::max(obj, 1.0);

    bool converged = false;
    for (int it = 0; it < max_iters; ++it) {
        std::vector<double> next = p;
        for (std::size_t i = 0; i < m; ++i) next[i] -= step * 2.0 * dot(grads[i], v);
        detail::project_to_simplex(next);
        Vec nv(v.size(), 0.0);
        for (std::size_t i = 0; i < m; ++i) add_scaled(nv, next[i], grads[i]);
        const double nobj = dot(nv, nv);
        const double decrease = obj - nobj;
        p = std::move(next);
        v = std::move(nv);
        obj = nobj;
        if (std::abs(decrease) <= tol * scale) {
            converged = true;
            break;
        }
    }
    if (!converged) throw std::runtime_error("min_convex_combination_norm: iteration cap reached");

    // Polish on the face identified by the iterate.
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < m; ++i) {
        if (p[i] > 1e-10) support.push_back(i);
    }
    std::vector<double> polished;
    double pvalue = 0.0;
    if (!support.empty() &&
        detail::face_min(grads, support, pivot_floor, polished, pvalue) &&
        pvalue * pvalue < obj) {
        obj = pvalue * pvalue;
        p = std::move(polished);
    }

    res.value = std::sqrt(std::max(obj, 0.0));
    res.weights = std::move(p);
    return res;
}

inline bool pareto_stationary(const std::vector<Vec>& grads, double tol) {
    return min_convex_combination_norm(grads).value <= tol;
}

// ---------------------------------------------------------------------------
// Two-objective convex testbed
// ---------------------------------------------------------------------------

// F(x) = scale/2 * ||x - center||^2; smooth with constant `scale`.
struct ConvexQuadratic {
    Vec center;
    double scale = 1.0;

    double value(const Vec& x) const {
        const Vec d = sub(x, center);
        return 0.5 * scale * dot(d, d);
    }
    Vec grad(const Vec& x) const { return scaled(sub(x, center), scale); }
};

struct TwoObjectiveTrajectory {
    std::vector<Vec> thetas;        // includes the start; size = steps_taken + 1
    std::vector<double> values;     // average objective at each theta
    std::vector<bool> conflicted;   // per step
    Vec final_theta;
    int steps_taken = 0;
};

// Iterates the two-gradient projected step: under conflict both gradients are
// projected onto each other's normal plane and their (unaveraged) sum is
// applied; otherwise a plain averaged gradient step is taken.
inline TwoObjectiveTrajectory run_two_objective_descent(const ConvexQuadratic& f1,
                                                        const ConvexQuadratic& f2, const Vec& theta0,
                                                        double eta, int steps) {
    const double l_max = std::max(f1.scale, f2.scale);
    if (eta <= 0.0 || eta > 1.0 / l_max + 1e-12)
        throw std::invalid_argument("run_two_objective_descent: need 0 < eta <= 1/L");

    TwoObjectiveTrajectory traj;
    Vec theta = theta0;
    traj.thetas.push_back(theta);
    traj.values.push_back(0.5 * (f1.value(theta) + f2.value(theta)));

    for (int t = 0; t < steps; ++t) {
        const Vec g1 = f1.grad(theta);
        const Vec g2 = f2.grad(theta);
        const double d12 = dot(g1, g2);
        Vec step(theta.size(), 0.0);
        bool conflict = d12 < 0.0;
        if (conflict) {
            add_scaled(step, 1.0, g1);
            add_scaled(step, 1.0, g2);
            add_scaled(step, -d12 / dot(g1, g1), g1);
            add_scaled(step, -d12 / dot(g2, g2), g2);
        } else {
            add_scaled(step, 0.5, g1);
            add_scaled(step, 0.5, g2);
        }
        traj.conflicted.push_back(conflict);
        if (norm(step) == 0.0) {
            traj.conflicted.pop_back();
            break;  // fixed point
        }
        add_scaled(theta, -eta, step);
        traj.thetas.push_back(theta);
        traj.values.push_back(0.5 * (f1.value(theta) + f2.value(theta)));
        ++traj.steps_taken;
    }
    traj.final_theta = theta;
    return traj;
}

// Per-round diagnostic for the alignment premise between the true average
// gradient and the mitigated update.
struct AlignmentCheck {
    double cos = 0.0;
    bool norm_ok = false;
    bool premise_holds = false;
};

inline AlignmentCheck alignment_check(const Vec& gbar, const Vec& gbar_prime) {
    AlignmentCheck c;
    c.cos = cosine(gbar, gbar_prime);  // throws on zero norm
    // relative slack so an update rescaled to the reference length cannot
    // flip the comparison by a rounding ulp
    c.norm_ok = norm(gbar) >= norm(gbar_prime) * (1.0 - 1e-12);
    c.premise_holds = c.cos >= 0.5 && c.norm_ok;
    return c;
}

}  // namespace fedfv

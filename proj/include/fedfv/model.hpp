#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "fedfv/rng.hpp"
#include "fedfv/vec.hpp"

namespace fedfv {

// Dense row-major matrix; rows are examples, columns are features.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }
};

enum class ModelKind { SoftmaxRegression, Mlp2 };

// Parameter layout (documented so flat indices stay stable everywhere):
//   SoftmaxRegression: W[C x D] row-major, then b[C].
//   Mlp2 (two sigmoid hidden layers of width H):
//     W1[H x D], b1[H], W2[H x H], b2[H], W3[C x H], b3[C].
struct Model {
    ModelKind kind = ModelKind::SoftmaxRegression;
    int input_dim = 0;
    int num_classes = 0;
    int hidden_dim = 0;  // Mlp2 only
    Vec params;
};

inline std::size_t param_count(ModelKind kind, int input_dim, int num_classes, int hidden_dim) {
    const auto d = static_cast<std::size_t>(input_dim);
    const auto c = static_cast<std::size_t>(num_classes);
    const auto h = static_cast<std::size_t>(hidden_dim);
    if (kind == ModelKind::SoftmaxRegression) return c * d + c;
    return h * d + h + h * h + h + c * h + c;
}

inline Model make_model(ModelKind kind, int input_dim, int num_classes, int hidden_dim = 0) {
    if (input_dim <= 0 || num_classes <= 0) throw std::invalid_argument("make_model: bad dims");
    if (kind == ModelKind::Mlp2 && hidden_dim <= 0) throw std::invalid_argument("make_model: bad hidden_dim");
    Model m;
    m.kind = kind;
    m.input_dim = input_dim;
    m.num_classes = num_classes;
    m.hidden_dim = kind == ModelKind::Mlp2 ? hidden_dim : 0;
    m.params.assign(param_count(kind, input_dim, num_classes, hidden_dim), 0.0);
    return m;
}

// Small symmetric init keeps early losses comparable across clients.
inline void init_params(Model& m, std::uint64_t seed) {
    Rng rng(mix_seed(seed, kSeedInit));
    for (double& p : m.params) p = rng.uniform(-0.05, 0.05);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Numerically stable softmax of logits, in place.
inline void softmax_inplace(std::vector<double>& z) {
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

namespace detail {

// Forward pass for one example; fills class probabilities, and for Mlp2 the
// hidden activations when requested (needed by backprop).
inline void forward_example(const Model& m, const double* x, std::vector<double>& probs,
                            std::vector<double>* h1 = nullptr, std::vector<double>* h2 = nullptr) {
    const int d = m.input_dim;
    const int c = m.num_classes;
    probs.assign(c, 0.0);
    if (m.kind == ModelKind::SoftmaxRegression) {
        const double* w = m.params.data();
        const double* b = w + static_cast<std::size_t>(c) * d;
        for (int k = 0; k < c; ++k) {
            double z = b[k];
            const double* wk = w + static_cast<std::size_t>(k) * d;
            for (int j = 0; j < d; ++j) z += wk[j] * x[j];
            probs[k] = z;
        }
        softmax_inplace(probs);
        return;
    }
    const int h = m.hidden_dim;
    const double* w1 = m.params.data();
    const double* b1 = w1 + static_cast<std::size_t>(h) * d;
    const double* w2 = b1 + h;
    const double* b2 = w2 + static_cast<std::size_t>(h) * h;
    const double* w3 = b2 + h;
    const double* b3 = w3 + static_cast<std::size_t>(c) * h;

    std::vector<double> a1(h), a2(h);
    for (int i = 0; i < h; ++i) {
        double z = b1[i];
        const double* wi = w1 + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) z += wi[j] * x[j];
        a1[i] = sigmoid(z);
    }
    for (int i = 0; i < h; ++i) {
        double z = b2[i];
        const double* wi = w2 + static_cast<std::size_t>(i) * h;
        for (int j = 0; j < h; ++j) z += wi[j] * a1[j];
        a2[i] = sigmoid(z);
    }
    for (int k = 0; k < c; ++k) {
        double z = b3[k];
        const double* wk = w3 + static_cast<std::size_t>(k) * h;
        for (int j = 0; j < h; ++j) z += wk[j] * a2[j];
        probs[k] = z;
    }
    softmax_inplace(probs);
    if (h1) *h1 = std::move(a1);
    if (h2) *h2 = std::move(a2);
}

inline void check_batch(const Model& m, const Matrix& features, const std::vector<int>& labels) {
    if (m.params.size() != param_count(m.kind, m.input_dim, m.num_classes, m.hidden_dim))
        throw std::invalid_argument("model: params do not match the declared layout");
    if (features.rows != static_cast<int>(labels.size()))
        throw std::invalid_argument("batch: feature rows and label count differ");
    if (features.rows < 1) throw std::invalid_argument("batch: empty");
    if (features.cols != m.input_dim) throw std::invalid_argument("batch: feature width != input_dim");
    for (int y : labels) {
        if (y < 0 || y >= m.num_classes) throw std::invalid_argument("batch: label out of range");
    }
}

}  // namespace detail

inline std::vector<double> predict_proba(const Model& m, const double* x) {
    std::vector<double> probs;
    detail::forward_example(m, x, probs);
    return probs;
}

inline int predict_class(const Model& m, const double* x) {
    const auto probs = predict_proba(m, x);
    int best = 0;
    for (int k = 1; k < m.num_classes; ++k) {
        if (probs[k] > probs[best]) best = k;
    }
    return best;
}

// Mean cross-entropy over the batch.
inline double forward_loss(const Model& m, const Matrix& features, const std::vector<int>& labels) {
    detail::check_batch(m, features, labels);
    double loss = 0.0;
    std::vector<double> probs;
    for (int i = 0; i < features.rows; ++i) {
        detail::forward_example(m, features.row(i), probs);
        loss -= std::log(std::max(probs[labels[i]], 1e-300));
    }
    return loss / features.rows;
}

// Analytic gradient of forward_loss with respect to params, flattened in
// layout order.
inline Vec gradient(const Model& m, const Matrix& features, const std::vector<int>& labels) {
    detail::check_batch(m, features, labels);
    Vec grad(m.params.size(), 0.0);
    const int d = m.input_dim;
    const int c = m.num_classes;
    const double inv_n = 1.0 / features.rows;
    std::vector<double> probs;

    if (m.kind == ModelKind::SoftmaxRegression) {
        double* gw = grad.data();
        double* gb = gw + static_cast<std::size_t>(c) * d;
        for (int i = 0; i < features.rows; ++i) {
            const double* x = features.row(i);
            detail::forward_example(m, x, probs);
            probs[labels[i]] -= 1.0;
            for (int k = 0; k < c; ++k) {
                const double delta = probs[k] * inv_n;
                double* gwk = gw + static_cast<std::size_t>(k) * d;
                for (int j = 0; j < d; ++j) gwk[j] += delta * x[j];
                gb[k] += delta;
            }
        }
        return grad;
    }

    const int h = m.hidden_dim;
    const double* w2 = m.params.data() + static_cast<std::size_t>(h) * d + h;
    const double* w3 = w2 + static_cast<std::size_t>(h) * h + h;
    double* g_w1 = grad.data();
    double* g_b1 = g_w1 + static_cast<std::size_t>(h) * d;
    double* g_w2 = g_b1 + h;
    double* g_b2 = g_w2 + static_cast<std::size_t>(h) * h;
    double* g_w3 = g_b2 + h;
    double* g_b3 = g_w3 + static_cast<std::size_t>(c) * h;

    std::vector<double> a1, a2, d2(h), d1(h);
    for (int i = 0; i < features.rows; ++i) {
        const double* x = features.row(i);
        detail::forward_example(m, x, probs, &a1, &a2);
        probs[labels[i]] -= 1.0;  // dL/dz3

        for (int k = 0; k < c; ++k) {
            const double delta = probs[k] * inv_n;
            double* gk = g_w3 + static_cast<std::size_t>(k) * h;
            for (int j = 0; j < h; ++j) gk[j] += delta * a2[j];
            g_b3[k] += delta;
        }
        for (int j = 0; j < h; ++j) {
            double s = 0.0;
            for (int k = 0; k < c; ++k) s += probs[k] * w3[static_cast<std::size_t>(k) * h + j];
            d2[j] = s * a2[j] * (1.0 - a2[j]);
        }
        for (int j = 0; j < h; ++j) {
            const double delta = d2[j] * inv_n;
            double* gj = g_w2 + static_cast<std::size_t>(j) * h;
            for (int l = 0; l < h; ++l) gj[l] += delta * a1[l];
            g_b2[j] += delta;
        }
        for (int j = 0; j < h; ++j) {
            double s = 0.0;
            for (int l = 0; l < h; ++l) s += d2[l] * w2[static_cast<std::size_t>(l) * h + j];
            d1[j] = s * a1[j] * (1.0 - a1[j]);
        }
        for (int j = 0; j < h; ++j) {
            const double delta = d1[j] * inv_n;
            double* gj = g_w1 + static_cast<std::size_t>(j) * d;
            for (int l = 0; l < d; ++l) gj[l] += delta * x[l];
            g_b1[j] += delta;
        }
    }
    return grad;
}

// batch_size sentinel: the whole training set in one step per epoch.
inline constexpr int kFullBatch = 0;

struct LocalTrainConfig {
    int epochs = 1;
    int batch_size = kFullBatch;
    double learning_rate = 0.1;
    std::uint64_t shuffle_seed = 0;
};

// Client id, pseudo-gradient (received params minus locally trained params),
// and the training loss measured at the received params before any local step.
struct ClientUpdate {
    int client_id = 0;
    Vec grad;
    double loss = 0.0;
    int round = 0;
};

struct ClientDataset;  // defined in data.hpp

// Runs E epochs of minibatch SGD on a private copy of the model parameters.
// The reported loss is evaluated at the received parameters, so ordering
// clients by it compares them at a common point.
inline ClientUpdate local_train_on(const Model& model, const Matrix& train_features,
                                   const std::vector<int>& train_labels, const LocalTrainConfig& cfg,
                                   int round, int client_id) {
    if (train_features.rows < 1) throw std::invalid_argument("local_train: empty dataset");
    if (cfg.epochs < 1) throw std::invalid_argument("local_train: epochs must be >= 1");

    ClientUpdate out;
    out.client_id = client_id;
    out.round = round;
    out.loss = forward_loss(model, train_features, train_labels);

    const int n = train_features.rows;
    const int batch = cfg.batch_size == kFullBatch ? n : cfg.batch_size;
    if (batch < 1) throw std::invalid_argument("local_train: bad batch size");

    Model local = model;
    Rng rng(mix_seed(cfg.shuffle_seed, kSeedTrain, static_cast<std::uint64_t>(round),
                     static_cast<std::uint64_t>(client_id)));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    Matrix bx;
    std::vector<int> by;
    for (int e = 0; e < cfg.epochs; ++e) {
        if (batch < n) rng.shuffle(order);
        for (int start = 0; start < n; start += batch) {
            const int stop = std::min(start + batch, n);
            bx = Matrix(stop - start, train_features.cols);
            by.assign(static_cast<std::size_t>(stop - start), 0);
            for (int i = start; i < stop; ++i) {
                const double* src = train_features.row(order[i]);
                std::copy(src, src + train_features.cols, bx.row(i - start));
                by[i - start] = train_labels[order[i]];
            }
            const Vec g = gradient(local, bx, by);
            add_scaled(local.params, -cfg.learning_rate, g);
        }
    }

    out.grad = sub(model.params, local.params);
    return out;
}

}  // namespace fedfv

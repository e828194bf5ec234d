#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedfv/model.hpp"
#include "fedfv/rng.hpp"

namespace fedfv {

struct Dataset {
    Matrix features;
    std::vector<int> labels;
};

struct ClientDataset {
    int client_id = 0;
    Matrix train_features;
    std::vector<int> train_labels;
    Matrix test_features;
    std::vector<int> test_labels;

    int n_train() const { return train_features.rows; }
};

// Default shape: 100 clients drawing 2 shards each from 200 class-sorted
// shards, 10 classes over 32 features. The per-class count is sized so that
// each client's 20% test split is large enough for per-client accuracy to be
// a low-noise statistic (400 test examples per client).
struct FederationSpec {
    int num_clients = 100;
    int shards_per_client = 2;
    int num_classes = 10;
    int examples_per_class = 20000;
    int feature_dim = 32;
    double cluster_spread = 0.8;
    std::uint64_t seed = 0;
};

// Per-class means: rows of the centered, normalized identity block. The C
// resulting unit vectors are mutually equidistant (pairwise cosine -1/(C-1)),
// so one scalar, cluster_spread, controls problem difficulty.
inline std::vector<Vec> class_means(int num_classes, int feature_dim) {
    if (feature_dim < num_classes)
        throw std::invalid_argument("class_means: feature_dim must be >= num_classes");
    std::vector<Vec> means(num_classes, Vec(feature_dim, 0.0));
    const double off = -1.0 / num_classes;
    for (int c = 0; c < num_classes; ++c) {
        double sq = 0.0;
        for (int j = 0; j < num_classes; ++j) {
            const double v = (j == c ? 1.0 : 0.0) + off;
            means[c][j] = v;
            sq += v * v;
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (int j = 0; j < num_classes; ++j) means[c][j] *= inv;
    }
    return means;
}

// Isotropic Gaussian clusters around the fixed per-class means; output is
// sorted by class. Deterministic for a given seed.
inline Dataset synth_classification(int num_classes, int examples_per_class, int feature_dim,
                                    double cluster_spread, std::uint64_t seed) {
    if (num_classes < 1 || examples_per_class < 1 || feature_dim < 1)
        throw std::invalid_argument("synth_classification: counts must be positive");
    if (cluster_spread <= 0.0)
        throw std::invalid_argument("synth_classification: cluster_spread must be > 0");

    const auto means = class_means(num_classes, feature_dim);
    Dataset out;
    out.features = Matrix(num_classes * examples_per_class, feature_dim);
    out.labels.assign(static_cast<std::size_t>(num_classes) * examples_per_class, 0);

    Rng rng(mix_seed(seed, kSeedData));
    int row = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < examples_per_class; ++i, ++row) {
            double* x = out.features.row(row);
            for (int j = 0; j < feature_dim; ++j) x[j] = means[c][j] + cluster_spread * rng.normal();
            out.labels[row] = c;
        }
    }
    return out;
}

// Sorts records by class, cuts them into num_clients * shards_per_client equal
// contiguous shards, and deals shards_per_client shards to each client through
// one seeded permutation (clients take consecutive slices in ascending id).
// Each shard is split 80/20 into train/test. A remainder that does not divide
// into whole shards is trimmed from the tail of the sorted order.
inline std::vector<ClientDataset> shard_partition(const Dataset& data, const FederationSpec& spec) {
    const int total_shards = spec.num_clients * spec.shards_per_client;
    if (spec.num_clients < 1 || spec.shards_per_client < 1)
        throw std::invalid_argument("shard_partition: bad client/shard counts");
    const int n = data.features.rows;
    if (n < total_shards) throw std::invalid_argument("shard_partition: fewer examples than shards");

    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return data.labels[a] < data.labels[b]; });

    const int shard_size = n / total_shards;
    const int usable = shard_size * total_shards;
    idx.resize(usable);

    std::vector<int> shard_order(total_shards);
    std::iota(shard_order.begin(), shard_order.end(), 0);
    Rng rng(mix_seed(spec.seed, kSeedShards));
    rng.shuffle(shard_order);

    const int train_per_shard = static_cast<int>(std::llround(0.8 * shard_size));
    std::vector<ClientDataset> clients(spec.num_clients);
    for (int k = 0; k < spec.num_clients; ++k) {
        ClientDataset& cd = clients[k];
        cd.client_id = k;
        const int n_tr = spec.shards_per_client * train_per_shard;
        const int n_te = spec.shards_per_client * (shard_size - train_per_shard);
        cd.train_features = Matrix(n_tr, data.features.cols);
        cd.test_features = Matrix(n_te, data.features.cols);
        cd.train_labels.reserve(n_tr);
        cd.test_labels.reserve(n_te);

        int tr_row = 0, te_row = 0;
        for (int s = 0; s < spec.shards_per_client; ++s) {
            const int shard = shard_order[k * spec.shards_per_client + s];
            for (int i = 0; i < shard_size; ++i) {
                const int src = idx[static_cast<std::size_t>(shard) * shard_size + i];
                const double* sx = data.features.row(src);
                if (i < train_per_shard) {
                    std::copy(sx, sx + data.features.cols, cd.train_features.row(tr_row++));
                    cd.train_labels.push_back(data.labels[src]);
                } else {
                    std::copy(sx, sx + data.features.cols, cd.test_features.row(te_row++));
                    cd.test_labels.push_back(data.labels[src]);
                }
            }
        }
    }
    return clients;
}

struct IdxError : std::runtime_error {
    explicit IdxError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IdxError(std::string(what) + ": truncated");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace detail

// Loader for the big-endian IDX image/label pair format. Pixels are scaled to
// [0, 1] and flattened row-major.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IdxError("load_idx: cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IdxError("load_idx: cannot open " + labels_path);

    if (detail::read_be32(img, "images") != 0x00000803u)
        throw IdxError("load_idx: bad image magic in " + images_path);
    const std::uint32_t n_img = detail::read_be32(img, "images");
    const std::uint32_t rows = detail::read_be32(img, "images");
    const std::uint32_t cols = detail::read_be32(img, "images");
    const std::uint64_t pixels = static_cast<std::uint64_t>(rows) * cols;
    if (pixels == 0 || pixels > (1u << 24) || n_img > (1u << 26))
        throw IdxError("load_idx: implausible header dimensions in " + images_path);

    if (detail::read_be32(lab, "labels") != 0x00000801u)
        throw IdxError("load_idx: bad label magic in " + labels_path);
    const std::uint32_t n_lab = detail::read_be32(lab, "labels");
    if (n_img != n_lab) throw IdxError("load_idx: image/label count mismatch");

    Dataset out;
    out.features = Matrix(static_cast<int>(n_img), static_cast<int>(pixels));
    out.labels.assign(n_img, 0);

    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t i = 0; i < n_img; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
            throw IdxError("load_idx: truncated image payload");
        double* x = out.features.row(static_cast<int>(i));
        for (std::size_t j = 0; j < buf.size(); ++j) x[j] = buf[j] / 255.0;
    }
    std::vector<unsigned char> lbuf(n_lab);
    if (!lab.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(lbuf.size())))
        throw IdxError("load_idx: truncated label payload");
    for (std::uint32_t i = 0; i < n_lab; ++i) out.labels[i] = lbuf[i];
    return out;
}

inline ClientUpdate local_train(const Model& model, const ClientDataset& data,
                                const LocalTrainConfig& cfg, int round, int client_id) {
    return local_train_on(model, data.train_features, data.train_labels, cfg, round, client_id);
}

// One example per line: label, then features, space separated.
inline void write_dataset_text(std::ostream& out, const Matrix& features,
                               const std::vector<int>& labels) {
    out.precision(17);
    for (int i = 0; i < features.rows; ++i) {
        out << labels[i];
        const double* x = features.row(i);
        for (int j = 0; j < features.cols; ++j) out << ' ' << x[j];
        out << '\n';
    }
}

}  // namespace fedfv

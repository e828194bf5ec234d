#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fedfv/data.hpp"
#include "fedfv/model.hpp"

namespace fedfv {

// Per-client test-set accuracy, in client-id order.
inline std::vector<double> evaluate_clients(const Model& model,
                                            const std::vector<ClientDataset>& datasets) {
    std::vector<double> accs;
    accs.reserve(datasets.size());
    for (const ClientDataset& cd : datasets) {
        if (cd.test_features.rows < 1) throw std::invalid_argument("evaluate_clients: empty test set");
        int correct = 0;
        for (int i = 0; i < cd.test_features.rows; ++i) {
            if (predict_class(model, cd.test_features.row(i)) == cd.test_labels[i]) ++correct;
        }
        accs.push_back(static_cast<double>(correct) / cd.test_features.rows);
    }
    return accs;
}

// Fairness statistics over per-client accuracies. The tail statistics are the
// mean accuracy of the ceil(5% of K) lowest / highest clients. Both the
// population standard deviation and the variance are reported; comparisons in
// percentage points use std * 100.
struct FairnessReport {
    std::vector<double> per_client_acc;
    double mean = 0.0;
    double std_dev = 0.0;
    double variance = 0.0;
    double worst5 = 0.0;
    double best5 = 0.0;
    int round = 0;
};

inline FairnessReport fairness_report(const std::vector<double>& accs, int round) {
    if (accs.empty()) throw std::invalid_argument("fairness_report: empty accuracy list");
    FairnessReport r;
    r.per_client_acc = accs;
    r.round = round;

    const double n = static_cast<double>(accs.size());
    for (double a : accs) r.mean += a;
    r.mean /= n;
    for (double a : accs) r.variance += (a - r.mean) * (a - r.mean);
    r.variance /= n;
    r.std_dev = std::sqrt(r.variance);

    std::vector<double> sorted = accs;
    std::sort(sorted.begin(), sorted.end());
    const auto tail = static_cast<std::size_t>(std::ceil(0.05 * n));
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < tail; ++i) {
        lo += sorted[i];
        hi += sorted[sorted.size() - 1 - i];
    }
    r.worst5 = lo / tail;
    r.best5 = hi / tail;
    return r;
}

}  // namespace fedfv

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <deque>
#include <vector>

#include "resparse/errors.hpp"
#include "resparse/readout.hpp"

namespace resparse {

/// Per-node, per-class activation tallies at decision time.
struct ActivityCounts {
    Eigen::MatrixXd n_active;             // n_nodes x n_class
    std::vector<std::int64_t> per_class;  // episodes tallied per class
    std::int64_t n_total = 0;

    ActivityCounts() = default;
    ActivityCounts(int n_nodes, int n_class)
        : n_active(Eigen::MatrixXd::Zero(n_nodes, n_class)),
          per_class(static_cast<std::size_t>(n_class), 0) {}

    int n_nodes() const { return static_cast<int>(n_active.rows()); }
    int n_class() const { return static_cast<int>(n_active.cols()); }

    /// Counts merge additively across replicas.
    void merge(const ActivityCounts& other) {
        n_active += other.n_active;
        for (std::size_t j = 0; j < per_class.size(); ++j) per_class[j] += other.per_class[j];
        n_total += other.n_total;
    }
};

inline void tally_activity(ActivityCounts& counts, const SparseActivation& x, int label) {
    if (label < 0 || label >= counts.n_class()) throw ContractError("label out of range in tally_activity");
    if (x.x.size() != counts.n_active.rows()) throw ContractError("activation size mismatch in tally_activity");
    for (Eigen::Index i = 0; i < x.x.size(); ++i)
        if (x.active_mask[i]) counts.n_active(i, label) += 1.0;
    counts.per_class[static_cast<std::size_t>(label)] += 1;
    counts.n_total += 1;
}

/// spec[i,j,k] = |N_ij - N_ik| / N and its per-node aggregate
/// Sp_i = (1/(n_class-1)!) * sum over the upper triangle.
struct SpecificityReport {
    int n_nodes = 0;
    int n_class = 0;
    std::vector<double> spec_tensor;  // flattened [i][j][k]
    Eigen::VectorXd sp_per_neuron;

    double spec(int i, int j, int k) const {
        return spec_tensor[(static_cast<std::size_t>(i) * static_cast<std::size_t>(n_class) +
                            static_cast<std::size_t>(j)) * static_cast<std::size_t>(n_class) +
                           static_cast<std::size_t>(k)];
    }
};

inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

inline SpecificityReport specificity(const ActivityCounts& counts) {
    if (counts.n_total < 1) throw ContractError("specificity is undefined with zero tallied episodes");
    SpecificityReport rep;
    rep.n_nodes = counts.n_nodes();
    rep.n_class = counts.n_class();
    rep.spec_tensor.assign(static_cast<std::size_t>(rep.n_nodes) * static_cast<std::size_t>(rep.n_class) *
                               static_cast<std::size_t>(rep.n_class),
                           0.0);
    rep.sp_per_neuron = Eigen::VectorXd::Zero(rep.n_nodes);
    const double n = static_cast<double>(counts.n_total);
    const double norm = factorial(rep.n_class - 1);
    for (int i = 0; i < rep.n_nodes; ++i) {
        double sp = 0.0;
        for (int j = 0; j < rep.n_class; ++j) {
            for (int k = 0; k < rep.n_class; ++k) {
                if (j == k) continue;
                const double s = std::abs(counts.n_active(i, j) - counts.n_active(i, k)) / n;
                rep.spec_tensor[(static_cast<std::size_t>(i) * static_cast<std::size_t>(rep.n_class) +
                                 static_cast<std::size_t>(j)) * static_cast<std::size_t>(rep.n_class) +
                                static_cast<std::size_t>(k)] = s;
                if (k > j) sp += s;
            }
        }
        rep.sp_per_neuron[i] = sp / norm;
    }
    return rep;
}

/// Mean and sample standard deviation of the effective thresholds
/// theta_i = theta_g + theta_local[i].
struct ThetaStats {
    double mean = 0.0;
    double std = 0.0;
};

inline ThetaStats theta_stats(const SparseReadout& readout) {
    ThetaStats s;
    const Eigen::Index n = readout.theta_local.size();
    if (n == 0) return s;
    const Eigen::ArrayXd theta = readout.theta_local.array() + readout.theta_g;
    s.mean = theta.mean();
    if (n > 1) s.std = std::sqrt((theta - s.mean).square().sum() / static_cast<double>(n - 1));
    return s;
}

/// Windowed fraction of correct decisions.
class RunningAccuracy {
public:
    explicit RunningAccuracy(int window = 2000) : window_(window) {
        if (window < 1) throw ConfigError("accuracy window must be >= 1");
    }

    void push(bool correct) {
        hits_ += correct ? 1 : 0;
        buffer_.push_back(correct);
        if (static_cast<int>(buffer_.size()) > window_) {
            hits_ -= buffer_.front() ? 1 : 0;
            buffer_.pop_front();
        }
    }

    double value() const {
        if (buffer_.empty()) return 0.0;
        return static_cast<double>(hits_) / static_cast<double>(buffer_.size());
    }

    std::int64_t count() const { return static_cast<std::int64_t>(buffer_.size()); }

private:
    int window_;
    std::int64_t hits_ = 0;
    std::deque<bool> buffer_;
};

}  // namespace resparse

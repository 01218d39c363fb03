#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "resparse/errors.hpp"
#include "resparse/reservoir.hpp"
#include "resparse/rng.hpp"

namespace resparse {

/// The learnable layer: a global threshold shared by every node, a local
/// per-node threshold, and linear output weights. The effective threshold
/// of node i is theta_g + theta_local[i].
struct SparseReadout {
    double theta_g = 0.0;
    VectorXd theta_local;  // n_nodes
    MatrixXd w_out;        // n_class x n_nodes

    static SparseReadout zero(int n_class, int n_nodes) {
        SparseReadout r;
        r.theta_local = VectorXd::Zero(n_nodes);
        r.w_out = MatrixXd::Zero(n_class, n_nodes);
        return r;
    }

    int n_nodes() const { return static_cast<int>(theta_local.size()); }
    int n_class() const { return static_cast<int>(w_out.rows()); }
};

/// Thresholded activity x = relu(v - theta) together with its support.
struct SparseActivation {
    VectorXd x;
    Eigen::Array<bool, Eigen::Dynamic, 1> active_mask;

    int active_count() const { return static_cast<int>(active_mask.count()); }
};

inline SparseActivation sparse_activation(const ReservoirState& state, const SparseReadout& readout) {
    if (state.v.size() != readout.theta_local.size())
        throw ContractError("state dimension does not match readout");
    SparseActivation act;
    act.x = (state.v.array() - readout.theta_g - readout.theta_local.array()).max(0.0);
    act.active_mask = act.x.array() > 0.0;
    return act;
}

/// Class scores y = W_out x.
inline VectorXd output(const SparseActivation& x, const SparseReadout& readout) {
    if (x.x.size() != readout.w_out.cols()) throw ContractError("activation dimension does not match W_out");
    return readout.w_out * x.x;
}

/// Softmax probabilities over y / temperature, stabilized by max subtraction.
inline VectorXd softmax_probabilities(const VectorXd& y, double temperature) {
    if (!(temperature > 0.0)) throw ContractError("temperature must be > 0");
    VectorXd z = (y.array() - y.maxCoeff()) / temperature;
    VectorXd p = z.array().exp();
    return p / p.sum();
}

/// Sample a class index with softmax probabilities.
template <typename Rng>
int decide(const VectorXd& y, double temperature, Rng& rng) {
    const VectorXd p = softmax_probabilities(y, temperature);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double cum = 0.0;
    for (int k = 0; k < p.size(); ++k) {
        cum += p[k];
        if (u < cum) return k;
    }
    return static_cast<int>(p.size()) - 1;
}

/// Fraction of nodes with nonzero activity.
inline double coding_level(const SparseActivation& x) {
    if (x.x.size() == 0) return 0.0;
    return static_cast<double>(x.active_count()) / static_cast<double>(x.x.size());
}

}  // namespace resparse

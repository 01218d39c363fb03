#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "resparse/errors.hpp"
#include "resparse/rng.hpp"

namespace resparse {

using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Parameters of the fixed recurrent network. The network itself is a
/// pure function of these values, so a params struct fully identifies a
/// reservoir for serialization and replay.
struct ReservoirParams {
    int n_nodes = 1000;
    int n_inputs = 24;
    double alpha = 0.025;            // leak rate, dt/tau
    double rho = 0.8;                // spectral scaling of the recurrent matrix
    double recurrent_density = 0.01; // fraction of nonzero recurrent weights
    double mean_in_degree = 6.0;     // mean number of input connections per node
    double in_degree_sigma_ln = 0.5; // sigma of the underlying normal for in-degrees
    // c: each node's input weights sum to c. Calibrated so that mean-one
    // stimuli keep per-episode gradient steps stable at the reference
    // learning rates (2 eta_W |x|^2 < 1 even at full coding).
    double input_scale = 0.5;
    bool signed_recurrent = true;    // standard normal base weights when true, |normal| otherwise
    std::uint64_t seed = 0;

    void validate() const {
        if (n_nodes < 1) throw ConfigError("n_nodes must be positive");
        if (n_inputs < 1) throw ConfigError("n_inputs must be >= 1");
        if (!(alpha > 0.0) || alpha > 1.0) throw ConfigError("alpha must be in (0, 1]");
        if (rho < 0.0 || rho >= 1.0) throw ConfigError("rho must be in [0, 1)");
        if (!(recurrent_density > 0.0) || recurrent_density > 1.0)
            throw ConfigError("recurrent_density must be in (0, 1]");
        if (!(mean_in_degree > 0.0) || mean_in_degree > n_inputs)
            throw ConfigError("mean_in_degree must be in (0, n_inputs]");
        if (in_degree_sigma_ln < 0.0) throw ConfigError("in_degree_sigma_ln must be >= 0");
        if (!(input_scale > 0.0)) throw ConfigError("input_scale must be > 0");
    }
};

/// Sparse input connectivity. Each node i listens to in_degrees[i] input
/// channels with equal weights input_scale / in_degrees[i], so every node's
/// total input weight is the same regardless of fan-in.
struct InputMatrix {
    SparseMat weights;               // n_nodes x n_inputs
    Eigen::VectorXi in_degrees;      // nonzero count per node

    double mean_in_degree() const {
        return in_degrees.cast<double>().mean();
    }
};

/// Fixed sparse recurrent connectivity, stored pre-scaled so that its
/// spectral radius equals the configured rho.
struct RecurrentMatrix {
    SparseMat weights;               // n_nodes x n_nodes
    double spectral_radius = 0.0;

    double density() const {
        const double n = static_cast<double>(weights.rows());
        return static_cast<double>(weights.nonZeros()) / (n * n);
    }
};

/// Hidden activity vector V(t).
struct ReservoirState {
    VectorXd v;

    static ReservoirState zero(int n_nodes) {
        ReservoirState s;
        s.v = VectorXd::Zero(n_nodes);
        return s;
    }
};

/// The frozen dynamical system: step() never mutates it.
struct Reservoir {
    ReservoirParams params;
    InputMatrix input;
    RecurrentMatrix recurrent;

    int n_nodes() const { return params.n_nodes; }
    int n_inputs() const { return params.n_inputs; }
};

/// Estimate the spectral radius (largest eigenvalue modulus) of a sparse
/// matrix by normalized power iteration. The estimate is the geometric mean
/// of the per-step growth factors over the trailing half of the iteration
/// history, which stays accurate when the dominant eigenvalue is a complex
/// pair and the iterate direction never settles.
inline double spectral_radius_power_iteration(const SparseMat& a, std::uint64_t seed,
                                              int max_iters = 20000, double tol = 1e-11) {
    const Eigen::Index n = a.rows();
    if (n == 0) return 0.0;
    SplitMix64 eng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = gauss(eng);
    v.normalize();

    std::vector<double> log_growth;
    log_growth.reserve(static_cast<std::size_t>(max_iters));
    VectorXd w(n);
    double estimate = 0.0;
    double prev_estimate = -1.0;
    for (int k = 0; k < max_iters; ++k) {
        w.noalias() = a * v;
        const double r = w.norm();
        if (r == 0.0 || !std::isfinite(r)) return 0.0;
        log_growth.push_back(std::log(r));
        v = w / r;

        if ((k + 1) % 256 == 0 || k + 1 == max_iters) {
            const std::size_t half = log_growth.size() / 2;
            const double mean_log =
                std::accumulate(log_growth.begin() + static_cast<std::ptrdiff_t>(half),
                                log_growth.end(), 0.0) /
                static_cast<double>(log_growth.size() - half);
            estimate = std::exp(mean_log);
            if (prev_estimate > 0.0 && std::abs(estimate - prev_estimate) <= tol * estimate) break;
            prev_estimate = estimate;
        }
    }
    return estimate;
}

/// Draw the sparse input matrix: per-node in-degrees from a lognormal law
/// with the configured mean (rounded, clamped to [1, n_inputs]), input
/// channels chosen uniformly without replacement, weights input_scale / k.
inline InputMatrix build_input_matrix(const ReservoirParams& params, SplitMix64& rng) {
    params.validate();
    const int n = params.n_nodes;
    const int m = params.n_inputs;
    const double sigma = params.in_degree_sigma_ln;
    // mu chosen so the lognormal mean equals mean_in_degree.
    const double mu = std::log(params.mean_in_degree) - 0.5 * sigma * sigma;

    InputMatrix out;
    out.in_degrees.resize(n);

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n * std::min<double>(m, params.mean_in_degree + 4)));
    std::vector<int> channels(static_cast<std::size_t>(m));
    std::iota(channels.begin(), channels.end(), 0);

    std::lognormal_distribution<double> degree_law(mu, sigma);
    for (int i = 0; i < n; ++i) {
        double draw = sigma == 0.0 ? params.mean_in_degree : degree_law(rng);
        int k = static_cast<int>(std::lround(draw));
        k = std::clamp(k, 1, m);
        out.in_degrees[i] = k;
        // Partial Fisher-Yates: pick k distinct channels.
        for (int j = 0; j < k; ++j) {
            std::uniform_int_distribution<int> pick(j, m - 1);
            std::swap(channels[static_cast<std::size_t>(j)], channels[static_cast<std::size_t>(pick(rng))]);
        }
        const double w = params.input_scale / static_cast<double>(k);
        for (int j = 0; j < k; ++j) triplets.emplace_back(i, channels[static_cast<std::size_t>(j)], w);
    }
    out.weights.resize(n, m);
    out.weights.setFromTriplets(triplets.begin(), triplets.end());
    out.weights.makeCompressed();
    return out;
}

/// Draw the recurrent matrix: nonzero positions i.i.d. at the configured
/// density, base weights standard normal, then the whole matrix rescaled so
/// its spectral radius equals rho. Stored pre-scaled.
inline RecurrentMatrix build_recurrent_matrix(const ReservoirParams& params, SplitMix64& rng,
                                              std::uint64_t power_seed) {
    params.validate();
    const int n = params.n_nodes;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(params.recurrent_density * n * n * 1.1) + 16);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (unit(rng) < params.recurrent_density) {
                double w = gauss(rng);
                if (!params.signed_recurrent) w = std::abs(w);
                triplets.emplace_back(i, j, w);
            }
        }
    }

    RecurrentMatrix out;
    out.weights.resize(n, n);
    out.weights.setFromTriplets(triplets.begin(), triplets.end());
    out.weights.makeCompressed();

    if (params.rho == 0.0) {
        out.weights *= 0.0;
        out.spectral_radius = 0.0;
        return out;
    }

    const double base_radius = spectral_radius_power_iteration(out.weights, power_seed);
    if (!(base_radius > 1e-12)) {
        throw Error("recurrent matrix draw has numerically zero spectral radius; re-draw with a new seed");
    }
    out.weights *= params.rho / base_radius;
    out.spectral_radius = params.rho;
    return out;
}

/// Build the full reservoir from params alone. All randomness derives from
/// params.seed, so equal params give bit-identical reservoirs.
inline Reservoir make_reservoir(const ReservoirParams& params) {
    params.validate();
    Reservoir r;
    r.params = params;
    SplitMix64 in_rng(rng::derive(params.seed, rng::kReservoirInput));
    SplitMix64 rec_rng(rng::derive(params.seed, rng::kReservoirRecurrent));
    r.input = build_input_matrix(params, in_rng);
    r.recurrent = build_recurrent_matrix(params, rec_rng, rng::derive(params.seed, rng::kPowerIteration));
    return r;
}

/// One leaky-integrator update applied in place:
/// v <- (1 - alpha) v + alpha relu(W_in s + W v), with `drive` as scratch.
inline void step_in_place(VectorXd& v, const VectorXd& input, const Reservoir& r, VectorXd& drive) {
    drive.noalias() = r.input.weights * input;
    drive.noalias() += r.recurrent.weights * v;
    const double a = r.params.alpha;
    v = (1.0 - a) * v + a * drive.cwiseMax(0.0);
}

/// Value-semantics step (Eq.-style contract): returns the next state and
/// leaves the argument untouched.
inline ReservoirState step(const ReservoirState& state, const VectorXd& input, const Reservoir& r) {
    if (state.v.size() != r.n_nodes()) throw ContractError("state dimension does not match reservoir");
    if (input.size() != r.n_inputs()) throw ContractError("input dimension does not match reservoir");
    ReservoirState next = state;
    VectorXd drive(r.n_nodes());
    step_in_place(next.v, input, r, drive);
    return next;
}

inline ReservoirState reset(const ReservoirState& state) {
    ReservoirState next = state;
    next.v.setZero();
    return next;
}

}  // namespace resparse

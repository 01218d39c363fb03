#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <utility>
#include <vector>

#include "resparse/errors.hpp"
#include "resparse/metrics.hpp"
#include "resparse/readout.hpp"
#include "resparse/reservoir.hpp"
#include "resparse/rng.hpp"
#include "resparse/tasks.hpp"

namespace resparse {

enum class Algorithm { GdW, GdTheta, Metropolis, Composed };

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::GdW: return "gd_w";
        case Algorithm::GdTheta: return "gd_theta";
        case Algorithm::Metropolis: return "metropolis";
        case Algorithm::Composed: return "composed";
    }
    return "?";
}

struct TrainerConfig {
    double eta_w = 0.0018;
    double eta_theta = 0.00018;
    int n_batch = 1;
    double sigma_m = 0.05;   // proposal std of the global threshold
    int m_steps = 100;       // episodes per Metropolis decision
    double beta = 4.0;       // inverse temperature of the acceptance rule
    double alpha_m = 0.0;    // running-average rate; 0 means 1/m_steps
    double decision_temperature = 1.0;
    double initial_theta_g = 0.0;
    int accuracy_window = 2000;
    int log_interval = 500;
    std::vector<double> prelearn_candidates;  // when nonempty, composed training prelearns theta_g
    int prelearn_steps = 10000;

    double alpha_m_effective() const { return alpha_m > 0.0 ? alpha_m : 1.0 / static_cast<double>(m_steps); }

    void validate() const {
        if (!(eta_w > 0.0)) throw ConfigError("eta_w must be > 0");
        if (!(eta_theta >= 0.0)) throw ConfigError("eta_theta must be >= 0");
        if (n_batch < 1) throw ConfigError("n_batch must be >= 1");
        if (sigma_m < 0.0) throw ConfigError("sigma_m must be >= 0");
        if (m_steps < 1) throw ConfigError("m_steps must be >= 1");
        if (beta < 0.0) throw ConfigError("beta must be >= 0");
        const double am = alpha_m_effective();
        if (!(am > 0.0) || am > 1.0) throw ConfigError("alpha_m must be in (0, 1]");
        if (!(decision_temperature > 0.0)) throw ConfigError("decision_temperature must be > 0");
        if (accuracy_window < 1) throw ConfigError("accuracy_window must be >= 1");
        if (log_interval < 1) throw ConfigError("log_interval must be >= 1");
        if (prelearn_steps < 1) throw ConfigError("prelearn_steps must be >= 1");
    }
};

/// Exponential running average of the episode cost, initialized from the
/// first observation rather than zero.
struct RunningCost {
    double value = 0.0;
    bool initialized = false;

    void update(double e, double alpha_m) {
        value = initialized ? (1.0 - alpha_m) * value + alpha_m * e : e;
        initialized = true;
    }
    void reset() {
        value = 0.0;
        initialized = false;
    }
};

inline VectorXd one_hot(int n_class, int label) {
    VectorXd t = VectorXd::Zero(n_class);
    t[label] = 1.0;
    return t;
}

/// Quadratic cost E = sum_j (y_true_j - y_j)^2.
inline double loss(const VectorXd& y_true, const VectorXd& y) {
    if (y_true.size() != y.size()) throw ContractError("loss: dimension mismatch");
    return (y_true - y).squaredNorm();
}

/// Immediate descent step on the output weights:
/// W[j,i] += 2 eta_w (y_true_j - y_j) x_i.
inline SparseReadout grad_w_update(const SparseReadout& readout, const VectorXd& x, const VectorXd& y_true,
                                   const VectorXd& y, double eta_w) {
    SparseReadout out = readout;
    out.w_out.noalias() += (2.0 * eta_w) * (y_true - y) * x.transpose();
    return out;
}

/// Immediate descent step on the local thresholds (the Heaviside-gated
/// rule; the factor 2 of the squared loss is absorbed into eta_theta):
/// theta_local[i] -= eta_theta * sum_j (y_true_j - y_j) W[j,i] H(x_i), H(0) = 0.
inline SparseReadout grad_theta_update(const SparseReadout& readout, const SparseActivation& act,
                                       const VectorXd& y_true, const VectorXd& y, double eta_theta) {
    SparseReadout out = readout;
    const VectorXd back = readout.w_out.transpose() * (y_true - y);
    out.theta_local.array() -= eta_theta * back.array() * act.active_mask.cast<double>();
    return out;
}

/// Accumulates per-episode gradients at frozen parameters; applied as the
/// batch mean every n_batch episodes.
struct GradAccumulator {
    MatrixXd gw;
    VectorXd gtheta;
    int count = 0;

    void init(int n_class, int n_nodes) {
        gw = MatrixXd::Zero(n_class, n_nodes);
        gtheta = VectorXd::Zero(n_nodes);
        count = 0;
    }

    void add(const VectorXd& residual, const SparseActivation& act, const MatrixXd& w_out, bool with_theta) {
        gw.noalias() += 2.0 * residual * act.x.transpose();
        if (with_theta) {
            const VectorXd back = w_out.transpose() * residual;
            gtheta.array() += back.array() * act.active_mask.cast<double>();
        }
        ++count;
    }

    void apply(SparseReadout& readout, double eta_w, double eta_theta, bool with_theta) {
        if (count == 0) return;
        const double inv = 1.0 / static_cast<double>(count);
        readout.w_out.noalias() += (eta_w * inv) * gw;
        if (with_theta) readout.theta_local.array() -= (eta_theta * inv) * gtheta.array();
        gw.setZero();
        gtheta.setZero();
        count = 0;
    }

    void discard() {
        if (count == 0) return;
        gw.setZero();
        gtheta.setZero();
        count = 0;
    }
};

/// One side of the Metropolis pair: a full readout plus its running cost.
struct Candidate {
    SparseReadout readout;
    RunningCost cost;
    GradAccumulator grad;
    std::uint64_t episodes_consumed = 0;

    // per-episode scratch
    SparseActivation act;
    VectorXd y;
};

/// The paired (theta-, theta+) networks under comparison. plus always
/// starts as a copy of minus with only theta_g perturbed.
struct DualCandidate {
    Candidate minus;
    Candidate plus;
    double last_proposal_noise = 0.0;
};

template <typename Rng>
void propose_plus(DualCandidate& dual, double sigma_m, Rng& rng) {
    dual.plus.readout = dual.minus.readout;
    dual.plus.grad.init(dual.minus.readout.n_class(), dual.minus.readout.n_nodes());
    dual.plus.cost.reset();
    dual.minus.cost.reset();
    std::normal_distribution<double> gauss(0.0, 1.0);
    dual.last_proposal_noise = gauss(rng);
    dual.plus.readout.theta_g += sigma_m * dual.last_proposal_noise;
}

/// p = min(1, exp(-beta (E+ - E-))).
inline double acceptance_probability(double e_minus, double e_plus, double beta) {
    return std::min(1.0, std::exp(-beta * (e_plus - e_minus)));
}

/// The accept decision itself; always consumes exactly one uniform draw.
template <typename Rng>
bool metropolis_accept(double e_minus, double e_plus, double beta, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return unit(rng) < acceptance_probability(e_minus, e_plus, beta);
}

struct AcceptanceRecord {
    double e_minus = 0.0;
    double e_plus = 0.0;
    double p_accept = 1.0;
    bool accepted = false;
    double theta_g_after = 0.0;
};

/// Runs the reservoir from a zero state through one episode and exposes the
/// decision-time activity.
class EpisodeSimulator {
public:
    EpisodeSimulator(const Reservoir& res, const EpisodeSource& src)
        : res_(res), src_(src), v_(res.n_nodes()), drive_(res.n_nodes()), input_(res.n_inputs()) {}

    const VectorXd& decision_state(const Episode& ep) {
        v_.setZero();
        for (int t = 0; t < ep.total_steps; ++t) {
            src_.input_at(ep, t, input_);
            step_in_place(v_, input_, res_, drive_);
        }
        return v_;
    }

    const EpisodeSource& source() const { return src_; }

private:
    const Reservoir& res_;
    const EpisodeSource& src_;
    VectorXd v_;
    VectorXd drive_;
    VectorXd input_;
};

namespace detail {

/// x = relu(v - theta) when thresholds are on; the benchmark reads v itself.
inline void evaluate_candidate(Candidate& c, const VectorXd& v, bool use_thresholds) {
    if (use_thresholds) {
        c.act.x = (v.array() - c.readout.theta_g - c.readout.theta_local.array()).max(0.0);
        c.act.active_mask = c.act.x.array() > 0.0;
    } else {
        c.act.x = v;
        c.act.active_mask = v.array() > 0.0;
    }
    c.y.noalias() = c.readout.w_out * c.act.x;
    ++c.episodes_consumed;
}

struct WindowedMean {
    explicit WindowedMean(int window) : window_(window) {}
    void push(double v) {
        sum_ += v;
        buf_.push_back(v);
        if (static_cast<int>(buf_.size()) > window_) {
            sum_ -= buf_.front();
            buf_.pop_front();
        }
    }
    double value() const { return buf_.empty() ? 0.0 : sum_ / static_cast<double>(buf_.size()); }

private:
    int window_;
    double sum_ = 0.0;
    std::deque<double> buf_;
};

}  // namespace detail

/// Per-episode hook for metrics; receives the incumbent's view of the episode.
struct EpisodeObserver {
    virtual ~EpisodeObserver() = default;
    virtual void on_episode(std::uint64_t index, const Episode& ep, const Candidate& minus, double e_minus) = 0;
};

/// One Metropolis decision: train both candidates on m_steps shared
/// episodes (indices [start, start + m_steps)), then accept theta+ with
/// probability min(1, exp(-beta (E+ - E-))) and draw a fresh proposal.
template <typename Rng>
AcceptanceRecord metropolis_round(DualCandidate& dual, const Reservoir& res, const EpisodeSource& src,
                                  std::uint64_t episode_stream_seed, std::uint64_t start_index,
                                  const TrainerConfig& cfg, bool learn_local, Rng& metropolis_rng,
                                  EpisodeSimulator& sim, EpisodeObserver* observer = nullptr) {
    const double alpha_m = cfg.alpha_m_effective();
    const int n_class = src.n_class();

    for (int m = 0; m < cfg.m_steps; ++m) {
        const std::uint64_t index = start_index + static_cast<std::uint64_t>(m);
        const Episode ep = src.episode(episode_stream_seed, index);
        const VectorXd& v = sim.decision_state(ep);
        const VectorXd y_true = one_hot(n_class, ep.label);

        double e_minus = 0.0;
        for (Candidate* c : {&dual.minus, &dual.plus}) {
            detail::evaluate_candidate(*c, v, /*use_thresholds=*/true);
            const double e = loss(y_true, c->y);
            if (!std::isfinite(e)) throw TrainingError("non-finite cost during Metropolis round", index);
            c->grad.add(y_true - c->y, c->act, c->readout.w_out, learn_local);
            if (c->grad.count >= cfg.n_batch) c->grad.apply(c->readout, cfg.eta_w, cfg.eta_theta, learn_local);
            c->cost.update(e, alpha_m);
            if (c == &dual.minus) e_minus = e;
        }
        if (observer != nullptr) observer->on_episode(index, ep, dual.minus, e_minus);
    }

    // Partial batches never straddle an acceptance decision.
    dual.minus.grad.discard();
    dual.plus.grad.discard();

    AcceptanceRecord rec;
    rec.e_minus = dual.minus.cost.value;
    rec.e_plus = dual.plus.cost.value;
    const double gap = rec.e_plus - rec.e_minus;
    if (!std::isfinite(gap)) throw TrainingError("non-finite running cost at Metropolis decision", start_index);
    rec.p_accept = acceptance_probability(rec.e_minus, rec.e_plus, cfg.beta);
    rec.accepted = metropolis_accept(rec.e_minus, rec.e_plus, cfg.beta, metropolis_rng);
    if (rec.accepted) {
        std::swap(dual.minus, dual.plus);
    }
    propose_plus(dual, cfg.sigma_m, metropolis_rng);
    rec.theta_g_after = dual.minus.readout.theta_g;
    return rec;
}

/// One point of the metrics stream.
struct MetricsRecord {
    std::uint64_t episode = 0;
    double accuracy = 0.0;
    double loss_avg = 0.0;
    double coding_level = 0.0;
    double theta_mean = 0.0;
    double theta_std = 0.0;
    double theta_g = 0.0;
    double acceptance_rate = 0.0;
};

struct TrainResult {
    SparseReadout readout;
    std::vector<MetricsRecord> series;
    MetricsRecord final;
    std::int64_t rounds_proposed = 0;
    std::int64_t rounds_accepted = 0;
    double prelearned_theta_g = 0.0;  // composed only; initial theta_g otherwise
};

/// Seeds that identify a training run. episode_seed is shared by every
/// algorithm of a replica (paired episode streams); arm_seed drives the
/// algorithm's own decisions and proposals.
struct TrainStreams {
    std::uint64_t episode_seed = 0;
    std::uint64_t arm_seed = 0;
};

namespace detail {

struct AlgorithmSpec {
    bool use_thresholds;
    bool learn_local;
    bool rounds;
};

inline AlgorithmSpec algorithm_spec(Algorithm a) {
    switch (a) {
        case Algorithm::GdW: return {false, false, false};
        case Algorithm::GdTheta: return {true, true, false};
        case Algorithm::Metropolis: return {true, false, true};
        case Algorithm::Composed: return {true, true, true};
    }
    throw ContractError("unknown algorithm");
}

}  // namespace detail

/// Unified training loop: gradient-only algorithms run a single candidate;
/// Metropolis-family algorithms run the dual-candidate rounds. Pure in
/// (reservoir, source, readout, config, streams); replays bit-identically.
inline TrainResult train(Algorithm alg, const Reservoir& res, const SparseReadout& initial,
                         const EpisodeSource& src, std::uint64_t n_episodes, const TrainerConfig& cfg,
                         const TrainStreams& streams) {
    cfg.validate();
    const auto spec = detail::algorithm_spec(alg);
    const int n_class = src.n_class();
    const double alpha_m = cfg.alpha_m_effective();

    EpisodeSimulator sim(res, src);
    SplitMix64 decision_rng(rng::derive(streams.arm_seed, rng::kDecision));
    SplitMix64 metropolis_rng(rng::derive(streams.arm_seed, rng::kMetropolis));

    DualCandidate dual;
    dual.minus.readout = initial;
    dual.minus.grad.init(n_class, res.n_nodes());
    if (spec.rounds) propose_plus(dual, cfg.sigma_m, metropolis_rng);

    RunningAccuracy accuracy(cfg.accuracy_window);
    detail::WindowedMean loss_avg(cfg.accuracy_window);
    detail::WindowedMean coding_avg(cfg.accuracy_window);

    TrainResult result;
    std::int64_t proposed = 0;
    std::int64_t accepted = 0;

    auto snapshot = [&](std::uint64_t episodes_done) {
        MetricsRecord r;
        r.episode = episodes_done;
        r.accuracy = accuracy.value();
        r.loss_avg = loss_avg.value();
        r.coding_level = coding_avg.value();
        const ThetaStats ts = theta_stats(dual.minus.readout);
        r.theta_mean = ts.mean;
        r.theta_std = ts.std;
        r.theta_g = dual.minus.readout.theta_g;
        r.acceptance_rate = proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
        return r;
    };

    struct MetricsObserver final : EpisodeObserver {
        MetricsObserver(RunningAccuracy& acc, detail::WindowedMean& lavg, detail::WindowedMean& cavg,
                        SplitMix64& drng, double temperature)
            : acc_(acc), lavg_(lavg), cavg_(cavg), drng_(drng), temperature_(temperature) {}
        void on_episode(std::uint64_t, const Episode& ep, const Candidate& minus, double e_minus) override {
            const int choice = decide(minus.y, temperature_, drng_);
            acc_.push(choice == ep.label);
            lavg_.push(e_minus);
            cavg_.push(static_cast<double>(minus.act.active_mask.count()) /
                       static_cast<double>(minus.act.x.size()));
        }
        RunningAccuracy& acc_;
        detail::WindowedMean& lavg_;
        detail::WindowedMean& cavg_;
        SplitMix64& drng_;
        double temperature_;
    } observer(accuracy, loss_avg, coding_avg, decision_rng, cfg.decision_temperature);

    std::uint64_t e = 0;
    std::uint64_t next_log = cfg.log_interval;
    auto maybe_log = [&]() {
        while (next_log <= e) {
            result.series.push_back(snapshot(next_log));
            next_log += cfg.log_interval;
        }
    };

    if (spec.rounds) {
        while (e + static_cast<std::uint64_t>(cfg.m_steps) <= n_episodes) {
            const AcceptanceRecord rec = metropolis_round(dual, res, src, streams.episode_seed, e, cfg,
                                                          spec.learn_local, metropolis_rng, sim, &observer);
            ++proposed;
            accepted += rec.accepted ? 1 : 0;
            e += static_cast<std::uint64_t>(cfg.m_steps);
            maybe_log();
        }
    }
    // Gradient-only algorithms take this path for every episode; the
    // Metropolis family takes it for the trailing partial round.
    for (; e < n_episodes; ++e) {
        const Episode ep = src.episode(streams.episode_seed, e);
        const VectorXd& v = sim.decision_state(ep);
        const VectorXd y_true = one_hot(n_class, ep.label);

        Candidate* live[2] = {&dual.minus, spec.rounds ? &dual.plus : nullptr};
        double e_minus = 0.0;
        for (Candidate* c : live) {
            if (c == nullptr) continue;
            detail::evaluate_candidate(*c, v, spec.use_thresholds);
            const double cost = loss(y_true, c->y);
            if (!std::isfinite(cost)) throw TrainingError("non-finite training loss", e);
            c->grad.add(y_true - c->y, c->act, c->readout.w_out, spec.learn_local);
            if (c->grad.count >= cfg.n_batch) c->grad.apply(c->readout, cfg.eta_w, cfg.eta_theta, spec.learn_local);
            if (spec.rounds) c->cost.update(cost, alpha_m);
            if (c == &dual.minus) e_minus = cost;
        }
        observer.on_episode(e, ep, dual.minus, e_minus);
        const std::uint64_t done = e + 1;
        while (next_log <= done) {
            result.series.push_back(snapshot(next_log));
            next_log += cfg.log_interval;
        }
    }

    result.rounds_proposed = proposed;
    result.rounds_accepted = accepted;
    result.final = snapshot(n_episodes);
    result.readout = dual.minus.readout;
    result.prelearned_theta_g = initial.theta_g;
    return result;
}

/// Benchmark: gradient descent on the output weights over the raw
/// reservoir activity, no thresholds.
inline TrainResult train_gd_w(const Reservoir& res, const SparseReadout& readout, const EpisodeSource& src,
                              std::uint64_t n_episodes, const TrainerConfig& cfg, const TrainStreams& streams) {
    return train(Algorithm::GdW, res, readout, src, n_episodes, cfg, streams);
}

/// Gradient descent on the output weights and the local thresholds;
/// theta_g stays at its initial value.
inline TrainResult train_gd_theta(const Reservoir& res, const SparseReadout& readout, const EpisodeSource& src,
                                  std::uint64_t n_episodes, const TrainerConfig& cfg, const TrainStreams& streams) {
    return train(Algorithm::GdTheta, res, readout, src, n_episodes, cfg, streams);
}

/// Stochastic search over the single global threshold; output weights
/// trained by gradient descent throughout.
inline TrainResult train_metropolis(const Reservoir& res, const SparseReadout& readout, const EpisodeSource& src,
                                    std::uint64_t n_episodes, const TrainerConfig& cfg,
                                    const TrainStreams& streams) {
    return train(Algorithm::Metropolis, res, readout, src, n_episodes, cfg, streams);
}

/// Score candidate initial global thresholds by repeatedly running the
/// composed scheme for one round and resetting every learnable back to its
/// initial value; the candidate with the lowest mean running cost wins.
inline double prelearn_theta_g(const Reservoir& res, const EpisodeSource& src, const TrainerConfig& cfg,
                               const std::vector<double>& candidate_values, int n_steps,
                               std::uint64_t prelearn_seed, std::vector<double>* scores_out = nullptr) {
    if (candidate_values.empty()) throw ContractError("prelearn_theta_g requires at least one candidate");
    if (candidate_values.size() == 1) {
        if (scores_out != nullptr) scores_out->assign(1, 0.0);
        return candidate_values.front();
    }
    cfg.validate();
    const int n_class = src.n_class();
    const double alpha_m = cfg.alpha_m_effective();

    double best_value = candidate_values.front();
    double best_score = std::numeric_limits<double>::infinity();
    if (scores_out != nullptr) scores_out->clear();

    EpisodeSimulator sim(res, src);
    for (std::size_t ci = 0; ci < candidate_values.size(); ++ci) {
        const double theta0 = candidate_values[ci];
        // Same episode stream and same proposal stream for every candidate:
        // scores differ only through theta_g.
        SplitMix64 metropolis_rng(rng::derive(prelearn_seed, rng::kMetropolis));

        SparseReadout initial = SparseReadout::zero(n_class, res.n_nodes());
        initial.theta_g = theta0;

        DualCandidate dual;
        dual.minus.readout = initial;
        dual.minus.grad.init(n_class, res.n_nodes());
        propose_plus(dual, cfg.sigma_m, metropolis_rng);

        double score_sum = 0.0;
        int rounds = 0;
        std::uint64_t e = 0;
        while (e + static_cast<std::uint64_t>(cfg.m_steps) <= static_cast<std::uint64_t>(n_steps)) {
            for (int m = 0; m < cfg.m_steps; ++m) {
                const Episode ep = src.episode(prelearn_seed, e + static_cast<std::uint64_t>(m));
                const VectorXd& v = sim.decision_state(ep);
                const VectorXd y_true = one_hot(n_class, ep.label);
                for (Candidate* c : {&dual.minus, &dual.plus}) {
                    detail::evaluate_candidate(*c, v, true);
                    const double cost = loss(y_true, c->y);
                    if (!std::isfinite(cost)) throw TrainingError("non-finite cost during prelearning", e);
                    c->grad.add(y_true - c->y, c->act, c->readout.w_out, true);
                    if (c->grad.count >= cfg.n_batch) c->grad.apply(c->readout, cfg.eta_w, cfg.eta_theta, true);
                    c->cost.update(cost, alpha_m);
                }
            }
            score_sum += dual.minus.cost.value;
            ++rounds;
            e += static_cast<std::uint64_t>(cfg.m_steps);
            // The Metropolis accept step is immaterial here: everything
            // resets to the candidate's initial state for the next round.
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            (void)unit(metropolis_rng);
            dual.minus.readout = initial;
            dual.minus.grad.init(n_class, res.n_nodes());
            propose_plus(dual, cfg.sigma_m, metropolis_rng);
        }
        if (rounds == 0) {
            // Degenerate budget: score a single truncated round.
            for (std::uint64_t m = 0; m < static_cast<std::uint64_t>(n_steps); ++m) {
                const Episode ep = src.episode(prelearn_seed, m);
                const VectorXd& v = sim.decision_state(ep);
                const VectorXd y_true = one_hot(n_class, ep.label);
                detail::evaluate_candidate(dual.minus, v, true);
                const double cost = loss(y_true, dual.minus.y);
                dual.minus.grad.add(y_true - dual.minus.y, dual.minus.act, dual.minus.readout.w_out, true);
                if (dual.minus.grad.count >= cfg.n_batch)
                    dual.minus.grad.apply(dual.minus.readout, cfg.eta_w, cfg.eta_theta, true);
                dual.minus.cost.update(cost, alpha_m);
            }
            score_sum = dual.minus.cost.value;
            rounds = 1;
        }
        const double score = score_sum / static_cast<double>(rounds);
        if (scores_out != nullptr) scores_out->push_back(score);
        if (score < best_score) {
            best_score = score;
            best_value = theta0;
        }
    }
    return best_value;
}

/// The composed algorithm: optional prelearning of the initial global
/// threshold, then Metropolis rounds with local-threshold gradient descent
/// inside each round.
inline TrainResult train_composed(const Reservoir& res, const SparseReadout& readout, const EpisodeSource& src,
                                  std::uint64_t n_episodes, const TrainerConfig& cfg,
                                  const TrainStreams& streams) {
    SparseReadout initial = readout;
    if (!cfg.prelearn_candidates.empty()) {
        initial.theta_g = prelearn_theta_g(res, src, cfg, cfg.prelearn_candidates, cfg.prelearn_steps,
                                           rng::derive(streams.episode_seed, rng::kPrelearn));
    }
    TrainResult result = train(Algorithm::Composed, res, initial, src, n_episodes, cfg, streams);
    result.prelearned_theta_g = initial.theta_g;
    return result;
}

}  // namespace resparse

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "resparse/errors.hpp"
#include "resparse/training.hpp"

namespace resparse {

/// N-armed bandit wrapper over a task: one decision per episode, reward
/// revealed for the chosen action only.
struct BanditEnv {
    const EpisodeSource* source = nullptr;
    double reward_correct = 1.0;
    double reward_wrong = 0.0;

    double reward(const Episode& ep, int action) const {
        return action == ep.label ? reward_correct : reward_wrong;
    }
};

/// What the learner gets to keep from one bandit episode.
struct Transition {
    SparseActivation x;
    int action = 0;
    double reward = 0.0;
};

/// Q(a) = sum_i W[a,i] x_i; identical to the supervised output map.
inline VectorXd q_values(const SparseActivation& x, const SparseReadout& readout) {
    return output(x, readout);
}

/// Immediate Q-learning step on the chosen action's row and the gated
/// thresholds:
///   W[a,i]        += eta_w    * (R - Q(a)) * x_i
///   theta_local[i] -= eta_theta * (R - Q(a)) * W[a,i] * H(x_i)
/// Both factors use the pre-update weights.
inline SparseReadout rl_update(const SparseReadout& readout, const Transition& t, double eta_w,
                               double eta_theta) {
    if (t.action < 0 || t.action >= readout.n_class()) throw ContractError("rl_update: action out of range");
    SparseReadout out = readout;
    const double qa = readout.w_out.row(t.action).dot(t.x.x);
    const double resid = t.reward - qa;
    out.theta_local.array() -=
        eta_theta * resid * readout.w_out.row(t.action).transpose().array() * t.x.active_mask.cast<double>();
    out.w_out.row(t.action) += eta_w * resid * t.x.x.transpose();
    return out;
}

/// Batch variant: per-transition gradients accumulated at frozen
/// parameters, then applied as a sum.
inline SparseReadout rl_batch_update(const SparseReadout& readout, const std::vector<Transition>& batch,
                                     double eta_w, double eta_theta) {
    SparseReadout out = readout;
    MatrixXd dw = MatrixXd::Zero(readout.w_out.rows(), readout.w_out.cols());
    VectorXd dtheta = VectorXd::Zero(readout.theta_local.size());
    for (const Transition& t : batch) {
        if (t.action < 0 || t.action >= readout.n_class())
            throw ContractError("rl_batch_update: action out of range");
        const double qa = readout.w_out.row(t.action).dot(t.x.x);
        const double resid = t.reward - qa;
        dw.row(t.action) += eta_w * resid * t.x.x.transpose();
        dtheta.array() -=
            eta_theta * resid * readout.w_out.row(t.action).transpose().array() * t.x.active_mask.cast<double>();
    }
    out.w_out += dw;
    out.theta_local += dtheta;
    return out;
}

enum class BanditAlgorithm { GdW, Composed };

inline const char* bandit_algorithm_name(BanditAlgorithm a) {
    return a == BanditAlgorithm::GdW ? "gd_w" : "composed";
}

struct BanditResult {
    SparseReadout readout;
    std::vector<MetricsRecord> series;  // accuracy field carries the reward average
    MetricsRecord final;
    std::int64_t rounds_proposed = 0;
    std::int64_t rounds_accepted = 0;
    double prelearned_theta_g = 0.0;
};

namespace detail {

struct RlCandidate {
    SparseReadout readout;
    RunningCost cost;
    std::vector<Transition> batch;
    SparseActivation act;
    VectorXd q;
};

inline void rl_apply_batch_mean(RlCandidate& c, double eta_w, double eta_theta) {
    if (c.batch.empty()) return;
    const double inv = 1.0 / static_cast<double>(c.batch.size());
    c.readout = rl_batch_update(c.readout, c.batch, eta_w * inv, eta_theta * inv);
    c.batch.clear();
}

template <typename Rng>
void rl_propose_plus(RlCandidate& minus, RlCandidate& plus, double sigma_m, Rng& rng) {
    plus.readout = minus.readout;
    plus.cost.reset();
    plus.batch.clear();
    minus.cost.reset();
    std::normal_distribution<double> gauss(0.0, 1.0);
    plus.readout.theta_g += sigma_m * gauss(rng);
}

/// One bandit episode for one candidate: act, observe the chosen action's
/// reward, stage the transition. Returns the episode's RL cost.
template <typename Rng>
double rl_candidate_episode(RlCandidate& c, const VectorXd& v, const Episode& ep, const BanditEnv& env,
                            bool use_thresholds, double temperature, Rng& action_rng) {
    if (use_thresholds) {
        c.act.x = (v.array() - c.readout.theta_g - c.readout.theta_local.array()).max(0.0);
        c.act.active_mask = c.act.x.array() > 0.0;
    } else {
        c.act.x = v;
        c.act.active_mask = v.array() > 0.0;
    }
    c.q.noalias() = c.readout.w_out * c.act.x;
    const int action = decide(c.q, temperature, action_rng);
    const double r = env.reward(ep, action);
    c.batch.push_back(Transition{c.act, action, r});
    const double diff = r - c.q[action];
    return diff * diff;
}

}  // namespace detail

/// Prelearning for the bandit: identical scheme to the supervised version,
/// scored with the RL cost (R - Q(a))^2.
template <typename Rng = SplitMix64>
double prelearn_theta_g_bandit(const Reservoir& res, const BanditEnv& env, const TrainerConfig& cfg,
                               const std::vector<double>& candidate_values, int n_steps,
                               std::uint64_t prelearn_seed) {
    if (candidate_values.empty()) throw ContractError("prelearn requires at least one candidate");
    if (candidate_values.size() == 1) return candidate_values.front();
    cfg.validate();
    const EpisodeSource& src = *env.source;
    const double alpha_m = cfg.alpha_m_effective();

    EpisodeSimulator sim(res, src);
    double best_value = candidate_values.front();
    double best_score = std::numeric_limits<double>::infinity();
    for (double theta0 : candidate_values) {
        SplitMix64 metropolis_rng(rng::derive(prelearn_seed, rng::kMetropolis));
        SplitMix64 action_minus(rng::derive(prelearn_seed, rng::kDecision));
        SplitMix64 action_plus(rng::derive(prelearn_seed, rng::kActionPlus));

        SparseReadout initial = SparseReadout::zero(src.n_class(), res.n_nodes());
        initial.theta_g = theta0;
        detail::RlCandidate minus, plus;
        minus.readout = initial;
        detail::rl_propose_plus(minus, plus, cfg.sigma_m, metropolis_rng);

        double score_sum = 0.0;
        int rounds = 0;
        std::uint64_t e = 0;
        while (e + static_cast<std::uint64_t>(cfg.m_steps) <= static_cast<std::uint64_t>(n_steps)) {
            for (int m = 0; m < cfg.m_steps; ++m) {
                const Episode ep = src.episode(prelearn_seed, e + static_cast<std::uint64_t>(m));
                const VectorXd& v = sim.decision_state(ep);
                const double em = detail::rl_candidate_episode(minus, v, ep, env, true,
                                                               cfg.decision_temperature, action_minus);
                const double ept = detail::rl_candidate_episode(plus, v, ep, env, true,
                                                                cfg.decision_temperature, action_plus);
                minus.cost.update(em, alpha_m);
                plus.cost.update(ept, alpha_m);
                if (static_cast<int>(minus.batch.size()) >= cfg.n_batch) {
                    detail::rl_apply_batch_mean(minus, cfg.eta_w, cfg.eta_theta);
                    detail::rl_apply_batch_mean(plus, cfg.eta_w, cfg.eta_theta);
                }
            }
            score_sum += minus.cost.value;
            ++rounds;
            e += static_cast<std::uint64_t>(cfg.m_steps);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            (void)unit(metropolis_rng);
            minus.readout = initial;
            minus.batch.clear();
            detail::rl_propose_plus(minus, plus, cfg.sigma_m, metropolis_rng);
        }
        const double score = rounds > 0 ? score_sum / rounds : std::numeric_limits<double>::infinity();
        if (score < best_score) {
            best_score = score;
            best_value = theta0;
        }
    }
    return best_value;
}

/// Q-learning with a softmax policy over the reservoir readout. The
/// composed variant searches theta_g with Metropolis rounds and learns the
/// local thresholds with the gated RL rule; the benchmark reads V directly
/// and learns only the output weights.
inline BanditResult run_bandit(const Reservoir& res, const SparseReadout& initial, const BanditEnv& env,
                               BanditAlgorithm alg, std::uint64_t n_episodes, const TrainerConfig& cfg,
                               const TrainStreams& streams) {
    cfg.validate();
    const EpisodeSource& src = *env.source;
    const bool composed = alg == BanditAlgorithm::Composed;
    const double alpha_m = cfg.alpha_m_effective();

    SparseReadout start = initial;
    BanditResult result;
    if (composed && !cfg.prelearn_candidates.empty()) {
        start.theta_g = prelearn_theta_g_bandit(res, env, cfg, cfg.prelearn_candidates, cfg.prelearn_steps,
                                                rng::derive(streams.episode_seed, rng::kPrelearn));
    }
    result.prelearned_theta_g = start.theta_g;

    EpisodeSimulator sim(res, src);
    SplitMix64 metropolis_rng(rng::derive(streams.arm_seed, rng::kMetropolis));
    SplitMix64 action_minus(rng::derive(streams.arm_seed, rng::kDecision));
    SplitMix64 action_plus(rng::derive(streams.arm_seed, rng::kActionPlus));

    detail::RlCandidate minus, plus;
    minus.readout = start;
    if (composed) detail::rl_propose_plus(minus, plus, cfg.sigma_m, metropolis_rng);

    detail::WindowedMean reward_avg(cfg.accuracy_window);
    detail::WindowedMean loss_avg(cfg.accuracy_window);
    detail::WindowedMean coding_avg(cfg.accuracy_window);
    std::int64_t proposed = 0;
    std::int64_t accepted = 0;
    int round_pos = 0;

    auto snapshot = [&](std::uint64_t done) {
        MetricsRecord r;
        r.episode = done;
        r.accuracy = reward_avg.value();
        r.loss_avg = loss_avg.value();
        r.coding_level = coding_avg.value();
        const ThetaStats ts = theta_stats(minus.readout);
        r.theta_mean = ts.mean;
        r.theta_std = ts.std;
        r.theta_g = minus.readout.theta_g;
        r.acceptance_rate = proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
        return r;
    };

    std::uint64_t next_log = cfg.log_interval;
    for (std::uint64_t e = 0; e < n_episodes; ++e) {
        const Episode ep = src.episode(streams.episode_seed, e);
        const VectorXd& v = sim.decision_state(ep);

        const double em = detail::rl_candidate_episode(minus, v, ep, env, composed, cfg.decision_temperature,
                                                       action_minus);
        if (!std::isfinite(em)) throw TrainingError("non-finite bandit cost", e);
        reward_avg.push(minus.batch.back().reward);
        loss_avg.push(em);
        coding_avg.push(static_cast<double>(minus.act.active_mask.count()) / static_cast<double>(minus.act.x.size()));

        if (composed) {
            const double ept = detail::rl_candidate_episode(plus, v, ep, env, true, cfg.decision_temperature,
                                                            action_plus);
            if (!std::isfinite(ept)) throw TrainingError("non-finite bandit cost", e);
            minus.cost.update(em, alpha_m);
            plus.cost.update(ept, alpha_m);
        }

        if (static_cast<int>(minus.batch.size()) >= cfg.n_batch) {
            detail::rl_apply_batch_mean(minus, cfg.eta_w, composed ? cfg.eta_theta : 0.0);
            if (composed) detail::rl_apply_batch_mean(plus, cfg.eta_w, cfg.eta_theta);
        }

        if (composed && ++round_pos == cfg.m_steps) {
            round_pos = 0;
            minus.batch.clear();
            plus.batch.clear();
            if (!std::isfinite(plus.cost.value - minus.cost.value))
                throw TrainingError("non-finite running cost at Metropolis decision", e);
            ++proposed;
            if (metropolis_accept(minus.cost.value, plus.cost.value, cfg.beta, metropolis_rng)) {
                std::swap(minus, plus);
                ++accepted;
            }
            detail::rl_propose_plus(minus, plus, cfg.sigma_m, metropolis_rng);
        }

        const std::uint64_t done = e + 1;
        while (next_log <= done) {
            result.series.push_back(snapshot(next_log));
            next_log += cfg.log_interval;
        }
    }

    result.rounds_proposed = proposed;
    result.rounds_accepted = accepted;
    result.final = snapshot(n_episodes);
    result.readout = minus.readout;
    return result;
}

}  // namespace resparse

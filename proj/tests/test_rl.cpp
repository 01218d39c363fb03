#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>

#include "resparse/rl.hpp"

using namespace resparse;
using Catch::Approx;

namespace {

SparseActivation random_activation(SplitMix64& rng, int n, bool all_active) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    SparseActivation a;
    a.x = VectorXd(n);
    for (int i = 0; i < n; ++i) {
        const double v = gauss(rng);
        a.x[i] = all_active ? 0.2 + std::abs(v) : std::max(0.0, v);
    }
    a.active_mask = a.x.array() > 0.0;
    return a;
}

SparseReadout random_readout(SplitMix64& rng, int n_class, int n) {
    std::normal_distribution<double> gauss(0.0, 0.5);
    SparseReadout r = SparseReadout::zero(n_class, n);
    for (int j = 0; j < n_class; ++j)
        for (int i = 0; i < n; ++i) r.w_out(j, i) = gauss(rng);
    return r;
}

struct BanditSetup {
    Reservoir reservoir;
    std::shared_ptr<const StimulusSet> stimuli;
    std::unique_ptr<StaticEpisodeSource> source;
};

BanditSetup bandit_setup(int n_nodes, int n_stimuli, double sigma, std::uint64_t seed) {
    BanditSetup b;
    ReservoirParams p;
    p.n_nodes = n_nodes;
    p.n_inputs = 24;
    p.alpha = 0.2;
    p.rho = 0.5;
    p.recurrent_density = 0.1;
    p.seed = seed;
    b.reservoir = make_reservoir(p);
    SplitMix64 srng(rng::derive(seed, rng::kStimulusSeed));
    b.stimuli = std::make_shared<const StimulusSet>(synth_stimulus_set(std::max(n_stimuli, 2), 24, srng));
    SplitMix64 trng(rng::derive(seed, rng::kTaskSeed));
    StaticTask task = make_static_task(*b.stimuli, n_stimuli, 2, sigma, 15, trng);
    if (n_stimuli == 2) task.labels = {0, 1};
    b.source = std::make_unique<StaticEpisodeSource>(b.stimuli, task);
    return b;
}

}  // namespace

TEST_CASE("q_values is the linear readout", "[rl]") {
    SplitMix64 rng(3);
    const SparseActivation x = random_activation(rng, 11, false);
    const SparseReadout r = random_readout(rng, 3, 11);
    const VectorXd q = q_values(x, r);
    CHECK(q == output(x, r));
    CHECK(q_values(SparseActivation{VectorXd::Zero(11), Eigen::Array<bool, Eigen::Dynamic, 1>::Zero(11)}, r)
              .isZero(0.0));
    // naive loop oracle
    for (int a = 0; a < 3; ++a) {
        double expected = 0.0;
        for (int i = 0; i < 11; ++i) expected += r.w_out(a, i) * x.x[i];
        CHECK(q[a] == Approx(expected).margin(1e-12));
    }
}

TEST_CASE("rl update touches only the chosen action's row", "[rl]") {
    SplitMix64 rng(5);
    const SparseActivation x = random_activation(rng, 9, false);
    const SparseReadout r = random_readout(rng, 3, 9);
    Transition t{x, 1, 1.0};
    const SparseReadout updated = rl_update(r, t, 0.1, 0.05);
    CHECK(updated.w_out.row(0) == r.w_out.row(0));
    CHECK(updated.w_out.row(2) == r.w_out.row(2));
    CHECK(updated.w_out.row(1) != r.w_out.row(1));

    // zero TD-like error: no change at all
    Transition same = t;
    same.reward = r.w_out.row(1).dot(x.x);
    const SparseReadout frozen = rl_update(r, same, 0.1, 0.05);
    CHECK(frozen.w_out == r.w_out);
    CHECK(frozen.theta_local == r.theta_local);

    // inactive nodes keep their thresholds
    for (int i = 0; i < 9; ++i)
        if (!x.active_mask[i]) CHECK(updated.theta_local[i] == r.theta_local[i]);

    CHECK_THROWS_AS(rl_update(r, Transition{x, 5, 1.0}, 0.1, 0.05), ContractError);
}

TEST_CASE("rl update ignores non-chosen rows and rewards", "[rl]") {
    SplitMix64 rng(6);
    const SparseActivation x = random_activation(rng, 9, false);
    SparseReadout r1 = random_readout(rng, 3, 9);
    SparseReadout r2 = r1;
    r2.w_out.row(0).array() += 5.0;  // different non-chosen row
    r2.w_out.row(2).array() -= 3.0;
    const Transition t{x, 1, 0.7};
    const SparseReadout u1 = rl_update(r1, t, 0.1, 0.05);
    const SparseReadout u2 = rl_update(r2, t, 0.1, 0.05);
    CHECK(u1.w_out.row(1) == u2.w_out.row(1));
    CHECK((u1.theta_local - u2.theta_local).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rl update matches finite differences of the bandit cost", "[rl]") {
    SplitMix64 rng(7);
    const double eta = 0.3;
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 8;
        const SparseActivation x = random_activation(rng, n, true);
        SparseReadout r = random_readout(rng, 2, n);
        const int action = trial % 2;
        const double reward = (trial % 3) * 0.5;
        const Transition t{x, action, reward};
        const SparseReadout updated = rl_update(r, t, eta, eta);

        auto cost = [&](const SparseReadout& rr, double dtheta, int node) {
            double q = 0.0;
            for (int i = 0; i < n; ++i) {
                const double xi = std::max(0.0, x.x[i] - (i == node ? dtheta : 0.0));
                q += rr.w_out(action, i) * xi;
            }
            return (reward - q) * (reward - q);
        };

        for (int i = 0; i < n; ++i) {
            // weights: E depends on W through Q only
            SparseReadout plus = r, minus = r;
            plus.w_out(action, i) += h;
            minus.w_out(action, i) -= h;
            const double fd_w = (cost(plus, 0.0, -1) - cost(minus, 0.0, -1)) / (2 * h);
            const double dw = updated.w_out(action, i) - r.w_out(action, i);
            // the rule drops the factor 2 of the squared cost
            if (std::abs(fd_w) > 1e-12) REQUIRE(dw == Approx(-(eta / 2.0) * fd_w).epsilon(1e-5));
            // thresholds: shift x_i by dtheta inside the relu
            const double fd_t = (cost(r, h, i) - cost(r, -h, i)) / (2 * h);
            const double dt = updated.theta_local[i] - r.theta_local[i];
            if (std::abs(fd_t) > 1e-12) REQUIRE(dt == Approx(-(eta / 2.0) * fd_t).epsilon(1e-5));
        }
    }
}

TEST_CASE("batch update is the sum of single updates at frozen parameters", "[rl]") {
    SplitMix64 rng(8);
    const int n = 10;
    SparseReadout r = random_readout(rng, 2, n);

    SECTION("a batch of one is the single update") {
        const SparseActivation x = random_activation(rng, n, false);
        const Transition t{x, 0, 1.0};
        const SparseReadout a = rl_update(r, t, 0.1, 0.05);
        const SparseReadout b = rl_batch_update(r, {t}, 0.1, 0.05);
        CHECK(a.w_out == b.w_out);
        CHECK(a.theta_local == b.theta_local);
    }

    SECTION("identical transitions scale linearly") {
        const SparseActivation x = random_activation(rng, n, false);
        const Transition t{x, 1, 0.5};
        const int k = 7;
        const SparseReadout batch = rl_batch_update(r, std::vector<Transition>(k, t), 0.1, 0.05);
        const SparseReadout single = rl_update(r, t, 0.1, 0.05);
        const MatrixXd expected_dw = static_cast<double>(k) * (single.w_out - r.w_out);
        const VectorXd expected_dt = static_cast<double>(k) * (single.theta_local - r.theta_local);
        CHECK((batch.w_out - r.w_out - expected_dw).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((batch.theta_local - r.theta_local - expected_dt).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("random batch equals the sum of singles") {
        std::vector<Transition> batch;
        std::uniform_int_distribution<int> act(0, 1);
        for (int k = 0; k < 12; ++k)
            batch.push_back(Transition{random_activation(rng, n, false), act(rng), act(rng) * 1.0});
        const SparseReadout got = rl_batch_update(r, batch, 0.1, 0.05);
        MatrixXd dw = MatrixXd::Zero(2, n);
        VectorXd dt = VectorXd::Zero(n);
        for (const Transition& t : batch) {
            const SparseReadout s = rl_update(r, t, 0.1, 0.05);  // frozen base
            dw += s.w_out - r.w_out;
            dt += s.theta_local - r.theta_local;
        }
        CHECK((got.w_out - r.w_out - dw).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((got.theta_local - r.theta_local - dt).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("single-output rl update coincides with the supervised rules", "[rl]") {
    SplitMix64 rng(9);
    const int n = 10;
    const SparseActivation x = random_activation(rng, n, false);
    SparseReadout r = random_readout(rng, 1, n);
    const double y_true = 1.0;
    const VectorXd y = output(x, r);

    const Transition t{x, 0, y_true};
    const double eta = 0.02;
    const SparseReadout rl = rl_update(r, t, 2.0 * eta, eta);  // supervised W rule carries the explicit 2
    const SparseReadout sup_w = grad_w_update(r, x.x, one_hot(1, 0) * y_true, y, eta);
    const SparseReadout sup_t = grad_theta_update(r, x, one_hot(1, 0) * y_true, y, eta);
    CHECK((rl.w_out - sup_w.w_out).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((rl.theta_local - sup_t.theta_local).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("a constant-zero-reward bandit decays the readout", "[rl]") {
    BanditSetup b = bandit_setup(16, 2, 0.0, 41);
    BanditEnv env{b.source.get(), 0.0, 0.0};
    TrainerConfig cfg;
    cfg.accuracy_window = 100;
    cfg.log_interval = 100;
    SplitMix64 rng(1);
    SparseReadout initial = random_readout(rng, 2, 16);
    const double norm0 = initial.w_out.norm();
    const BanditResult res = run_bandit(b.reservoir, initial, env, BanditAlgorithm::GdW, 500, cfg, {51, 52});
    CHECK(res.final.accuracy == 0.0);  // reward average is zero
    CHECK(res.readout.w_out.norm() < norm0);
}

TEST_CASE("a noiseless two-armed bandit is solved to the greedy limit", "[rl]") {
    BanditSetup b = bandit_setup(40, 2, 0.0, 42);
    BanditEnv env{b.source.get(), 1.0, 0.0};
    TrainerConfig cfg;
    cfg.n_batch = 1;
    cfg.accuracy_window = 500;
    cfg.log_interval = 500;
    const SparseReadout initial = SparseReadout::zero(2, 40);
    const BanditResult res = run_bandit(b.reservoir, initial, env, BanditAlgorithm::GdW, 3000, cfg, {61, 62});

    // greedy evaluation after convergence
    EpisodeSimulator sim(b.reservoir, *b.source);
    int correct = 0;
    const int n_eval = 200;
    SplitMix64 greedy_rng(5);
    for (int e = 0; e < n_eval; ++e) {
        const Episode ep = b.source->episode(999, static_cast<std::uint64_t>(e));
        const VectorXd& v = sim.decision_state(ep);
        SparseActivation act;
        act.x = v;
        act.active_mask = v.array() > 0.0;
        const VectorXd q = q_values(act, res.readout);
        const int action = decide(q, 1e-9, greedy_rng);  // temperature -> 0
        correct += action == ep.label ? 1 : 0;
    }
    CHECK(correct / static_cast<double>(n_eval) >= 0.95);
}

TEST_CASE("the composed bandit runs its Metropolis rounds", "[rl]") {
    BanditSetup b = bandit_setup(24, 4, 0.1, 43);
    BanditEnv env{b.source.get(), 1.0, 0.0};
    TrainerConfig cfg;
    cfg.m_steps = 50;
    cfg.accuracy_window = 100;
    cfg.log_interval = 100;
    cfg.prelearn_candidates = {0.0, 0.2};
    cfg.prelearn_steps = 100;
    const SparseReadout initial = SparseReadout::zero(2, 24);
    const BanditResult res = run_bandit(b.reservoir, initial, env, BanditAlgorithm::Composed, 500, cfg, {71, 72});
    CHECK(res.rounds_proposed == 10);
    CHECK(res.rounds_accepted >= 0);
    CHECK(res.rounds_accepted <= res.rounds_proposed);
    CHECK(std::isfinite(res.final.theta_g));
    // reward average should beat chance-free zero baseline eventually
    CHECK(res.final.accuracy >= 0.0);
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>

#include "resparse/training.hpp"

using namespace resparse;
using Catch::Approx;

namespace {

struct Instance {
    SparseReadout readout;
    ReservoirState state;
    VectorXd y_true;
};

/// Random smooth instance: every node active with margin, so finite
/// differences stay on the differentiable branch.
Instance random_instance(SplitMix64& rng, int n_class = 2, int n_nodes = 12, bool all_active = true) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, n_class - 1);
    Instance inst;
    inst.readout = SparseReadout::zero(n_class, n_nodes);
    inst.readout.theta_g = 0.2;
    inst.state.v = VectorXd(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
        inst.readout.theta_local[i] = 0.1 * gauss(rng);
        const double margin = all_active ? 0.2 + std::abs(gauss(rng)) : gauss(rng);
        inst.state.v[i] = inst.readout.theta_g + inst.readout.theta_local[i] + margin;
        for (int j = 0; j < n_class; ++j) inst.readout.w_out(j, i) = 0.5 * gauss(rng);
    }
    inst.y_true = one_hot(n_class, cls(rng));
    return inst;
}

double energy(const Instance& inst, const SparseReadout& r) {
    const SparseActivation act = sparse_activation(inst.state, r);
    return loss(inst.y_true, output(act, r));
}

/// Tiny noiseless two-stimulus task used for end-to-end sanity runs.
struct ToySetup {
    Reservoir reservoir;
    std::shared_ptr<const StimulusSet> stimuli;
    std::unique_ptr<StaticEpisodeSource> source;
};

ToySetup toy_setup(int n_nodes = 40, int n_stimuli = 2, double sigma = 0.0, std::uint64_t seed = 5) {
    ToySetup t;
    ReservoirParams p;
    p.n_nodes = n_nodes;
    p.n_inputs = 24;
    p.alpha = 0.2;
    p.rho = 0.5;
    p.recurrent_density = 0.1;
    p.seed = seed;
    t.reservoir = make_reservoir(p);
    SplitMix64 srng(rng::derive(seed, rng::kStimulusSeed));
    t.stimuli = std::make_shared<const StimulusSet>(synth_stimulus_set(std::max(n_stimuli, 2), 24, srng));
    SplitMix64 trng(rng::derive(seed, rng::kTaskSeed));
    StaticTask task = make_static_task(*t.stimuli, n_stimuli, 2, sigma, 15, trng);
    if (n_stimuli == 2) {
        task.labels = {0, 1};  // force both classes present
    }
    t.source = std::make_unique<StaticEpisodeSource>(t.stimuli, task);
    return t;
}

}  // namespace

TEST_CASE("loss is the squared distance to the target", "[training]") {
    VectorXd t(2), y(2);
    t << 1, 0;
    y << 0.6, 0.3;
    CHECK(loss(t, y) == Approx(0.25));
    CHECK(loss(t, t) == 0.0);
    CHECK(loss(t, VectorXd::Zero(2)) == Approx(1.0));
    CHECK_THROWS_AS(loss(t, VectorXd::Zero(3)), ContractError);
}

TEST_CASE("one_hot builds a unit target", "[training]") {
    const VectorXd t = one_hot(4, 2);
    CHECK(t.sum() == 1.0);
    CHECK(t[2] == 1.0);
}

TEST_CASE("weight update vanishes on zero residual or silent layer", "[training]") {
    SplitMix64 rng(31);
    Instance inst = random_instance(rng);
    const SparseActivation act = sparse_activation(inst.state, inst.readout);
    const VectorXd y = output(act, inst.readout);

    const SparseReadout same = grad_w_update(inst.readout, act.x, y, y, 0.01);
    CHECK(same.w_out == inst.readout.w_out);

    const SparseReadout silent = grad_w_update(inst.readout, VectorXd::Zero(act.x.size()), inst.y_true, y, 0.01);
    CHECK(silent.w_out == inst.readout.w_out);
}

TEST_CASE("weight update matches the finite-difference gradient", "[training]") {
    SplitMix64 rng(32);
    const double eta = 0.37;
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        Instance inst = random_instance(rng, 2 + trial % 3, 6 + trial % 5);
        const SparseActivation act = sparse_activation(inst.state, inst.readout);
        const VectorXd y = output(act, inst.readout);
        const SparseReadout updated = grad_w_update(inst.readout, act.x, inst.y_true, y, eta);
        const MatrixXd delta = updated.w_out - inst.readout.w_out;
        for (int j = 0; j < inst.readout.n_class(); ++j) {
            for (int i = 0; i < inst.readout.n_nodes(); ++i) {
                SparseReadout plus = inst.readout, minus = inst.readout;
                plus.w_out(j, i) += h;
                minus.w_out(j, i) -= h;
                const double fd = (energy(inst, plus) - energy(inst, minus)) / (2 * h);
                const double expected = -eta * fd;
                if (std::abs(expected) > 1e-12)
                    REQUIRE(delta(j, i) == Approx(expected).epsilon(1e-6));
                else
                    REQUIRE(std::abs(delta(j, i)) < 1e-10);
            }
        }
    }
}

TEST_CASE("threshold update matches the finite-difference gradient on active nodes", "[training]") {
    SplitMix64 rng(33);
    const double eta = 0.21;
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        Instance inst = random_instance(rng, 2, 10);
        const SparseActivation act = sparse_activation(inst.state, inst.readout);
        const VectorXd y = output(act, inst.readout);
        const SparseReadout updated = grad_theta_update(inst.readout, act, inst.y_true, y, eta);
        const VectorXd delta = updated.theta_local - inst.readout.theta_local;
        for (int i = 0; i < inst.readout.n_nodes(); ++i) {
            REQUIRE(act.x[i] > 2 * h);  // smooth region
            SparseReadout plus = inst.readout, minus = inst.readout;
            plus.theta_local[i] += h;
            minus.theta_local[i] -= h;
            const double fd = (energy(inst, plus) - energy(inst, minus)) / (2 * h);
            // the rule drops the factor 2 of the squared loss
            const double expected = -(eta / 2.0) * fd;
            if (std::abs(expected) > 1e-12)
                REQUIRE(delta[i] == Approx(expected).epsilon(1e-5));
            else
                REQUIRE(std::abs(delta[i]) < 1e-10);
        }
    }
}

TEST_CASE("threshold update is gated by the Heaviside of x", "[training]") {
    SplitMix64 rng(34);
    Instance inst = random_instance(rng, 2, 8);
    // silence nodes 0..3, put node 4 exactly at threshold
    for (int i = 0; i < 4; ++i) inst.state.v[i] = inst.readout.theta_g + inst.readout.theta_local[i] - 0.5;
    inst.state.v[4] = inst.readout.theta_g + inst.readout.theta_local[4];
    const SparseActivation act = sparse_activation(inst.state, inst.readout);
    const VectorXd y = output(act, inst.readout);
    const SparseReadout updated = grad_theta_update(inst.readout, act, inst.y_true, y, 0.3);
    for (int i = 0; i < 5; ++i) CHECK(updated.theta_local[i] == inst.readout.theta_local[i]);

    // zero residual also freezes the thresholds
    const SparseReadout frozen = grad_theta_update(inst.readout, act, y, y, 0.3);
    CHECK(frozen.theta_local == inst.readout.theta_local);
}

TEST_CASE("running cost initializes from the first observation", "[training]") {
    RunningCost c;
    c.update(2.0, 0.25);
    CHECK(c.value == 2.0);
    c.update(1.0, 0.25);
    CHECK(c.value == Approx(0.75 * 2.0 + 0.25 * 1.0));
    c.reset();
    CHECK_FALSE(c.initialized);
    c.update(5.0, 0.25);
    CHECK(c.value == 5.0);
}

TEST_CASE("acceptance probability follows the Metropolis law", "[training]") {
    CHECK(acceptance_probability(1.0, 1.0, 4.0) == 1.0);
    CHECK(acceptance_probability(1.0, 0.5, 4.0) == 1.0);  // downhill
    CHECK(acceptance_probability(0.5, 1.0, 0.0) == 1.0);  // beta = 0 accepts everything
    CHECK(acceptance_probability(0.5, 1.0, 4.0) == Approx(0.1353352832366127));

    // empirical acceptance over Bernoulli trials
    SplitMix64 rng(55);
    const double p = std::exp(-2.0);
    int acc = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) acc += metropolis_accept(0.5, 1.0, 4.0, rng) ? 1 : 0;
    const double sigma = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(acc / static_cast<double>(n) - p) < 3 * sigma);

    int all = 0;
    for (int i = 0; i < 1000; ++i) all += metropolis_accept(0.9, 0.1, 4.0, rng) ? 1 : 0;
    CHECK(all == 1000);
}

TEST_CASE("proposal perturbs only the global threshold of the plus candidate", "[training]") {
    SplitMix64 rng(66);
    DualCandidate dual;
    dual.minus.readout = SparseReadout::zero(2, 5);
    dual.minus.readout.theta_g = 0.3;
    dual.minus.readout.w_out(1, 2) = 0.7;
    dual.minus.grad.init(2, 5);
    propose_plus(dual, 0.05, rng);
    CHECK(dual.plus.readout.theta_g == Approx(0.3 + 0.05 * dual.last_proposal_noise));
    CHECK(dual.plus.readout.w_out == dual.minus.readout.w_out);
    CHECK(dual.plus.readout.theta_local == dual.minus.readout.theta_local);
    CHECK_FALSE(dual.minus.cost.initialized);
    CHECK_FALSE(dual.plus.cost.initialized);
}

TEST_CASE("a Metropolis round trains both candidates on the same episodes", "[training]") {
    ToySetup toy = toy_setup(20, 4, 0.1, 9);
    TrainerConfig cfg;
    cfg.m_steps = 30;
    cfg.n_batch = 1;
    cfg.validate();

    DualCandidate dual;
    dual.minus.readout = SparseReadout::zero(2, 20);
    dual.minus.grad.init(2, 20);
    SplitMix64 mrng(4);
    propose_plus(dual, 0.05, mrng);

    EpisodeSimulator sim(toy.reservoir, *toy.source);
    const AcceptanceRecord rec = metropolis_round(dual, toy.reservoir, *toy.source, 77, 0, cfg, true, mrng, sim);
    CHECK(dual.minus.episodes_consumed == 30);
    CHECK(dual.plus.episodes_consumed == 30);
    CHECK(rec.p_accept >= 0.0);
    CHECK(rec.p_accept <= 1.0);
    CHECK(std::isfinite(rec.e_minus));
    CHECK(std::isfinite(rec.e_plus));
    // running costs were reset for the next round
    CHECK_FALSE(dual.minus.cost.initialized);
}

TEST_CASE("training respects batch boundaries", "[training]") {
    ToySetup toy = toy_setup(16, 2, 0.0, 10);
    TrainerConfig cfg;
    cfg.n_batch = 5;
    cfg.accuracy_window = 10;
    cfg.log_interval = 1000;
    const SparseReadout initial = SparseReadout::zero(2, 16);
    TrainStreams streams{11, 12};

    // four episodes: below the batch size, parameters never change
    const TrainResult r4 = train(Algorithm::GdW, toy.reservoir, initial, *toy.source, 4, cfg, streams);
    CHECK(r4.readout.w_out == initial.w_out);
    // five episodes: exactly one application
    const TrainResult r5 = train(Algorithm::GdW, toy.reservoir, initial, *toy.source, 5, cfg, streams);
    CHECK(r5.readout.w_out != initial.w_out);
    // nine episodes: the trailing partial batch is dropped
    const TrainResult r9 = train(Algorithm::GdW, toy.reservoir, initial, *toy.source, 9, cfg, streams);
    CHECK(r9.readout.w_out == r5.readout.w_out);
}

TEST_CASE("zero episodes leave the readout unchanged", "[training]") {
    ToySetup toy = toy_setup(16, 2, 0.0, 10);
    TrainerConfig cfg;
    SparseReadout initial = SparseReadout::zero(2, 16);
    initial.theta_g = 0.123;
    const TrainResult r = train(Algorithm::Composed, toy.reservoir, initial, *toy.source, 0, cfg, {1, 2});
    CHECK(r.readout.w_out == initial.w_out);
    CHECK(r.readout.theta_g == initial.theta_g);
    CHECK(r.series.empty());
    CHECK(r.final.accuracy == 0.0);
}

TEST_CASE("gd_theta with zero eta_theta reduces to weight-only descent", "[training]") {
    ToySetup toy = toy_setup(24, 4, 0.1, 13);
    TrainerConfig cfg;
    cfg.eta_theta = 0.0;
    cfg.accuracy_window = 50;
    SparseReadout initial = SparseReadout::zero(2, 24);
    initial.theta_g = 0.1;
    TrainStreams streams{21, 22};
    const TrainResult gd = train(Algorithm::GdTheta, toy.reservoir, initial, *toy.source, 400, cfg, streams);
    CHECK(gd.readout.theta_local.isZero(0.0));
    CHECK(gd.readout.theta_g == 0.1);

    // frozen proposal: Metropolis with sigma_M = 0 is the same weight-only descent
    TrainerConfig mcfg = cfg;
    mcfg.sigma_m = 0.0;
    const TrainResult met = train(Algorithm::Metropolis, toy.reservoir, initial, *toy.source, 400, mcfg, streams);
    CHECK(met.readout.theta_g == 0.1);
    CHECK(met.final.acceptance_rate == 1.0);  // identical candidates always accept
    CHECK((met.readout.w_out - gd.readout.w_out).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("the benchmark learns a separable toy task", "[training]") {
    ToySetup toy = toy_setup(40, 2, 0.0, 5);
    TrainerConfig cfg;
    cfg.n_batch = 1;
    cfg.decision_temperature = 0.02;  // near-greedy decisions expose convergence
    cfg.accuracy_window = 500;
    cfg.log_interval = 500;
    const SparseReadout initial = SparseReadout::zero(2, 40);
    const TrainResult r = train_gd_w(toy.reservoir, initial, *toy.source, 2000, cfg, {31, 32});
    CHECK(r.final.accuracy >= 0.95);
}

TEST_CASE("divergent training reports the failing episode", "[training]") {
    ToySetup toy = toy_setup(16, 2, 0.0, 10);
    TrainerConfig cfg;
    cfg.eta_w = 1e18;  // guaranteed blow-up
    const SparseReadout initial = SparseReadout::zero(2, 16);
    CHECK_THROWS_AS(train(Algorithm::GdW, toy.reservoir, initial, *toy.source, 50, cfg, {1, 2}),
                    TrainingError);
}

TEST_CASE("prelearning picks the workable initial threshold", "[training]") {
    ToySetup toy = toy_setup(24, 4, 0.1, 19);
    TrainerConfig cfg;
    cfg.m_steps = 25;
    cfg.prelearn_steps = 100;

    SECTION("a single candidate comes back unchanged") {
        CHECK(prelearn_theta_g(toy.reservoir, *toy.source, cfg, {0.42}, 100, 7) == 0.42);
    }

    SECTION("a silencing threshold loses to zero") {
        // probe the activity scale to build the silencing candidate
        EpisodeSimulator sim(toy.reservoir, *toy.source);
        const Episode ep = toy.source->episode(3, 0);
        const double vmax = sim.decision_state(ep).maxCoeff();
        std::vector<double> scores;
        const double chosen = prelearn_theta_g(toy.reservoir, *toy.source, cfg, {0.0, 10.0 * vmax}, 200, 7, &scores);
        CHECK(chosen == 0.0);
        REQUIRE(scores.size() == 2);
        CHECK(scores[0] < scores[1]);
    }

    SECTION("empty candidate list is rejected") {
        CHECK_THROWS_AS(prelearn_theta_g(toy.reservoir, *toy.source, cfg, {}, 100, 7), ContractError);
    }
}

TEST_CASE("composed training with disabled perturbations degenerates to descent", "[training]") {
    ToySetup toy = toy_setup(24, 4, 0.1, 23);
    TrainerConfig cfg;
    cfg.sigma_m = 0.0;
    cfg.eta_theta = 0.0;
    SparseReadout initial = SparseReadout::zero(2, 24);
    initial.theta_g = 0.05;
    TrainStreams streams{41, 42};
    const TrainResult composed = train_composed(toy.reservoir, initial, *toy.source, 300, cfg, streams);
    const TrainResult gdt = train(Algorithm::GdTheta, toy.reservoir, initial, *toy.source, 300, cfg, streams);
    CHECK(composed.readout.theta_g == 0.05);
    CHECK((composed.readout.w_out - gdt.readout.w_out).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(composed.readout.theta_local.isZero(0.0));
}

TEST_CASE("trainer config validates its ranges", "[training]") {
    TrainerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.eta_w == 0.0018);       // reference rates
    CHECK(cfg.eta_theta == 0.00018);
    CHECK(cfg.sigma_m == 0.05);
    CHECK(cfg.m_steps == 100);
    CHECK(cfg.beta == 4.0);
    CHECK(cfg.alpha_m_effective() == Approx(0.01));

    TrainerConfig bad = cfg;
    bad.eta_w = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.n_batch = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.alpha_m = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.m_steps = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

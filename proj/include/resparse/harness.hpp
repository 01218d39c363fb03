#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "resparse/errors.hpp"
#include "resparse/metrics.hpp"
#include "resparse/rl.hpp"
#include "resparse/serialize.hpp"
#include "resparse/tasks.hpp"
#include "resparse/training.hpp"

namespace resparse {

enum class TaskKind { Static, Sequence, BanditStatic, BanditSequence };

inline const char* task_kind_name(TaskKind t) {
    switch (t) {
        case TaskKind::Static: return "static";
        case TaskKind::Sequence: return "sequence";
        case TaskKind::BanditStatic: return "bandit-static";
        case TaskKind::BanditSequence: return "bandit-sequence";
    }
    return "?";
}

inline TaskKind task_kind_from_name(const std::string& s) {
    if (s == "static") return TaskKind::Static;
    if (s == "sequence") return TaskKind::Sequence;
    if (s == "bandit-static") return TaskKind::BanditStatic;
    if (s == "bandit-sequence") return TaskKind::BanditSequence;
    throw ConfigError("unknown task '" + s + "' (expected static, sequence, bandit-static or bandit-sequence)");
}

inline Algorithm algorithm_from_name(const std::string& s) {
    if (s == "gd_w") return Algorithm::GdW;
    if (s == "gd_theta") return Algorithm::GdTheta;
    if (s == "metropolis") return Algorithm::Metropolis;
    if (s == "composed") return Algorithm::Composed;
    throw ConfigError("unknown algorithm '" + s + "' (expected gd_w, gd_theta, metropolis or composed)");
}

/// Everything a run needs; defaults reproduce the reference parameter table
/// for the selected task.
struct ExperimentConfig {
    TaskKind task = TaskKind::Static;
    std::vector<Algorithm> algorithms = {Algorithm::GdW, Algorithm::GdTheta, Algorithm::Metropolis,
                                         Algorithm::Composed};
    ReservoirParams reservoir;
    TrainerConfig trainer;
    int gd_w_batch = 100;

    int n_stimuli = 140;
    int n_class = 2;
    double noise_sigma = 0.3;
    int duration_steps = 50;  // static task: 0.5 s at dt = 0.01 s
    int n_base = 5;
    int element_steps = 10;   // sequence task: 0.1 s per element
    std::string stimulus_file;
    int stimulus_pool = 0;    // synthetic pool size; 0 = as many as needed

    std::uint64_t n_episodes = 60000;
    int n_replicas = 1;
    int n_eval_episodes = 400;
    int n_threads = 1;
    double reward_correct = 1.0;
    double reward_wrong = 0.0;
    double metropolis_initial_theta_g = 0.0;
    bool metropolis_uses_prelearn = true;  // seed the Metropolis arm's theta_g from prelearning
    bool gd_theta_uses_prelearn = true;    // likewise for GD_theta's fixed theta_g
    std::vector<double> prelearn_candidates;  // empty = calibrate from reservoir activity
    int prelearn_steps = 10000;

    std::string out_dir;
    bool write_checkpoints = true;
    std::uint64_t master_seed = 1;

    bool is_bandit() const { return task == TaskKind::BanditStatic || task == TaskKind::BanditSequence; }
    bool is_sequence_like() const { return task == TaskKind::Sequence || task == TaskKind::BanditSequence; }

    void validate() const {
        reservoir.validate();
        trainer.validate();
        if (gd_w_batch < 1) throw ConfigError("gd_w_batch must be >= 1");
        if (n_class < 2) throw ConfigError("n_class must be >= 2");
        if (n_stimuli < 1) throw ConfigError("n_stimuli must be >= 1");
        if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
        if (duration_steps < 1) throw ConfigError("duration_steps must be >= 1");
        if (n_base < 1) throw ConfigError("n_base must be >= 1");
        if (element_steps < 1) throw ConfigError("element_steps must be >= 1");
        if (n_replicas < 1) throw ConfigError("n_replicas must be >= 1");
        if (n_eval_episodes < 1) throw ConfigError("n_eval_episodes must be >= 1");
        if (n_threads < 1) throw ConfigError("n_threads must be >= 1");
        if (stimulus_pool < 0) throw ConfigError("stimulus_pool must be >= 0");
        if (prelearn_steps < 1) throw ConfigError("prelearn_steps must be >= 1");
        if (algorithms.empty()) throw ConfigError("algorithm set must not be empty");
        if (is_bandit())
            for (Algorithm a : algorithms)
                if (a != Algorithm::GdW && a != Algorithm::Composed)
                    throw ConfigError("bandit tasks support only gd_w and composed");
    }
};

/// Reference defaults per task column; explicit config values override these.
inline ExperimentConfig default_config(TaskKind task) {
    ExperimentConfig c;
    c.task = task;
    c.reservoir.n_nodes = 1000;
    c.reservoir.n_inputs = 24;
    if (task == TaskKind::Static || task == TaskKind::BanditStatic) {
        c.reservoir.alpha = 0.025;
        c.reservoir.rho = 0.8;
        c.noise_sigma = 0.3;
        c.duration_steps = 50;
        c.trainer.n_batch = 1;
    } else {
        c.reservoir.alpha = 0.1;
        c.reservoir.rho = 0.95;
        c.noise_sigma = 0.2;
        c.element_steps = 10;
        c.duration_steps = 30;
        c.trainer.n_batch = 10;
    }
    c.trainer.eta_w = 0.0018;
    c.trainer.eta_theta = 0.00018;
    c.trainer.sigma_m = 0.05;
    c.trainer.m_steps = 100;
    c.trainer.beta = 4.0;
    if (c.is_bandit())
        c.algorithms = {Algorithm::GdW, Algorithm::Composed};
    return c;
}

/// Named scale presets. "desk" finishes on a laptop core; "paper" matches
/// the reference scale.
inline void apply_preset(ExperimentConfig& c, const std::string& preset) {
    if (preset == "desk") {
        c.reservoir.n_nodes = 500;
        c.n_episodes = 20000;
        c.n_replicas = 5;
    } else if (preset == "paper") {
        c.reservoir.n_nodes = 1000;
        c.n_episodes = 60000;
        c.n_replicas = 5;
    } else {
        throw ConfigError("unknown preset '" + preset + "' (expected desk or paper)");
    }
}

namespace detail {

inline void parse_into(ExperimentConfig& c, const Json& j);

}  // namespace detail

/// Build a config from a JSON file plus dotted-path overrides
/// ("trainer.beta=4"). Task and preset are resolved first so that column
/// defaults land before explicit values.
inline ExperimentConfig parse_config(const std::optional<std::string>& path,
                                     const std::vector<std::string>& overrides = {},
                                     const std::optional<std::string>& task_flag = std::nullopt,
                                     const std::optional<std::string>& preset_flag = std::nullopt) {
    Json file = Json::object();
    if (path) file = read_json_file(*path);
    if (!file.is_object()) throw ConfigError("config root must be a JSON object");

    Json merged = file;
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not of the form key=value");
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        Json value;
        try {
            value = Json::parse(raw);
        } catch (const std::exception&) {
            value = raw;  // bare strings allowed
        }
        Json* node = &merged;
        std::stringstream ss(key);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        if (parts.empty()) throw ConfigError("empty override key");
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
        (*node)[parts.back()] = value;
    }

    std::string task_name = "static";
    if (merged.contains("task")) task_name = merged.at("task").get<std::string>();
    if (task_flag) task_name = *task_flag;
    ExperimentConfig config = default_config(task_kind_from_name(task_name));
    if (merged.contains("preset")) apply_preset(config, merged.at("preset").get<std::string>());
    if (preset_flag) apply_preset(config, *preset_flag);

    detail::parse_into(config, merged);
    config.validate();
    return config;
}

namespace detail {

template <typename T>
void take(const Json& j, const char* key, T& out, std::vector<std::string>& seen) {
    seen.push_back(key);
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("bad value for key '") + key + "': " + e.what());
        }
    }
}

inline void check_known(const Json& j, const std::vector<std::string>& seen, const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(seen.begin(), seen.end(), it.key()) == seen.end())
            throw ConfigError("unknown config key '" + (scope.empty() ? it.key() : scope + "." + it.key()) + "'");
    }
}

inline void parse_into(ExperimentConfig& c, const Json& j) {
    std::vector<std::string> seen{"task", "preset"};

    if (j.contains("algorithms")) {
        c.algorithms.clear();
        for (const auto& name : j.at("algorithms")) c.algorithms.push_back(algorithm_from_name(name.get<std::string>()));
    }
    seen.push_back("algorithms");

    take(j, "n_stimuli", c.n_stimuli, seen);
    take(j, "n_class", c.n_class, seen);
    take(j, "noise_sigma", c.noise_sigma, seen);
    take(j, "duration_steps", c.duration_steps, seen);
    take(j, "n_base", c.n_base, seen);
    take(j, "element_steps", c.element_steps, seen);
    take(j, "stimulus_file", c.stimulus_file, seen);
    take(j, "stimulus_pool", c.stimulus_pool, seen);
    take(j, "n_episodes", c.n_episodes, seen);
    take(j, "n_replicas", c.n_replicas, seen);
    take(j, "n_eval_episodes", c.n_eval_episodes, seen);
    take(j, "n_threads", c.n_threads, seen);
    take(j, "reward_correct", c.reward_correct, seen);
    take(j, "reward_wrong", c.reward_wrong, seen);
    take(j, "metropolis_initial_theta_g", c.metropolis_initial_theta_g, seen);
    take(j, "metropolis_uses_prelearn", c.metropolis_uses_prelearn, seen);
    take(j, "gd_theta_uses_prelearn", c.gd_theta_uses_prelearn, seen);
    take(j, "out_dir", c.out_dir, seen);
    take(j, "write_checkpoints", c.write_checkpoints, seen);
    take(j, "master_seed", c.master_seed, seen);
    take(j, "gd_w_batch", c.gd_w_batch, seen);

    if (j.contains("reservoir")) {
        const Json& r = j.at("reservoir");
        std::vector<std::string> rs;
        take(r, "n_nodes", c.reservoir.n_nodes, rs);
        take(r, "n_inputs", c.reservoir.n_inputs, rs);
        take(r, "alpha", c.reservoir.alpha, rs);
        take(r, "rho", c.reservoir.rho, rs);
        take(r, "recurrent_density", c.reservoir.recurrent_density, rs);
        take(r, "mean_in_degree", c.reservoir.mean_in_degree, rs);
        take(r, "in_degree_sigma_ln", c.reservoir.in_degree_sigma_ln, rs);
        take(r, "input_scale", c.reservoir.input_scale, rs);
        take(r, "signed_recurrent", c.reservoir.signed_recurrent, rs);
        check_known(r, rs, "reservoir");
    }
    seen.push_back("reservoir");

    if (j.contains("trainer")) {
        const Json& t = j.at("trainer");
        std::vector<std::string> ts;
        take(t, "eta_w", c.trainer.eta_w, ts);
        take(t, "eta_theta", c.trainer.eta_theta, ts);
        take(t, "n_batch", c.trainer.n_batch, ts);
        take(t, "sigma_m", c.trainer.sigma_m, ts);
        take(t, "m_steps", c.trainer.m_steps, ts);
        take(t, "beta", c.trainer.beta, ts);
        take(t, "alpha_m", c.trainer.alpha_m, ts);
        take(t, "decision_temperature", c.trainer.decision_temperature, ts);
        take(t, "accuracy_window", c.trainer.accuracy_window, ts);
        take(t, "log_interval", c.trainer.log_interval, ts);
        check_known(t, ts, "trainer");
    }
    seen.push_back("trainer");

    if (j.contains("prelearn")) {
        const Json& p = j.at("prelearn");
        std::vector<std::string> ps;
        take(p, "candidates", c.prelearn_candidates, ps);
        take(p, "steps", c.prelearn_steps, ps);
        check_known(p, ps, "prelearn");
    }
    seen.push_back("prelearn");

    check_known(j, seen, "");
}

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
    Json j;
    j["task"] = task_kind_name(c.task);
    Json algs = Json::array();
    for (Algorithm a : c.algorithms) algs.push_back(algorithm_name(a));
    j["algorithms"] = algs;
    j["n_stimuli"] = c.n_stimuli;
    j["n_class"] = c.n_class;
    j["noise_sigma"] = c.noise_sigma;
    j["duration_steps"] = c.duration_steps;
    j["n_base"] = c.n_base;
    j["element_steps"] = c.element_steps;
    j["stimulus_file"] = c.stimulus_file;
    j["stimulus_pool"] = c.stimulus_pool;
    j["n_episodes"] = c.n_episodes;
    j["n_replicas"] = c.n_replicas;
    j["n_eval_episodes"] = c.n_eval_episodes;
    j["n_threads"] = c.n_threads;
    j["reward_correct"] = c.reward_correct;
    j["reward_wrong"] = c.reward_wrong;
    j["metropolis_initial_theta_g"] = c.metropolis_initial_theta_g;
    j["metropolis_uses_prelearn"] = c.metropolis_uses_prelearn;
    j["gd_theta_uses_prelearn"] = c.gd_theta_uses_prelearn;
    j["out_dir"] = c.out_dir;
    j["write_checkpoints"] = c.write_checkpoints;
    j["master_seed"] = c.master_seed;
    j["gd_w_batch"] = c.gd_w_batch;
    j["reservoir"] = to_json(c.reservoir);
    j["reservoir"].erase("seed");  // per-replica, derived
    j["trainer"] = {{"eta_w", c.trainer.eta_w},
                    {"eta_theta", c.trainer.eta_theta},
                    {"n_batch", c.trainer.n_batch},
                    {"sigma_m", c.trainer.sigma_m},
                    {"m_steps", c.trainer.m_steps},
                    {"beta", c.trainer.beta},
                    {"alpha_m", c.trainer.alpha_m},
                    {"decision_temperature", c.trainer.decision_temperature},
                    {"accuracy_window", c.trainer.accuracy_window},
                    {"log_interval", c.trainer.log_interval}};
    j["prelearn"] = {{"candidates", c.prelearn_candidates}, {"steps", c.prelearn_steps}};
    return j;
}

struct RunRecord;
inline Json to_json_record(const RunRecord& rec);

/// One trained (algorithm, replica) arm.
struct ArmSummary {
    std::string algorithm;
    int replica = 0;
    std::uint64_t arm_seed = 0;
    double final_accuracy = 0.0;  // training window at the last episode; reward average for bandits
    double eval_accuracy = 0.0;   // frozen-parameter evaluation pass
    double coding_level = 0.0;    // frozen-parameter evaluation pass
    double theta_mean = 0.0;
    double theta_std = 0.0;
    double theta_g = 0.0;
    double acceptance_rate = 0.0;
    double sp_mean_pre = 0.0;
    double sp_mean_post = 0.0;
    double prelearned_theta_g = 0.0;
    std::vector<MetricsRecord> series;
};

struct RunRecord {
    Json config;
    double prelearned_theta_g = 0.0;
    std::vector<double> prelearn_candidates;
    std::vector<double> prelearn_scores;
    std::vector<ArmSummary> arms;
};

namespace detail {

/// Frozen-parameter evaluation: accuracy (or reward), mean coding level and
/// the per-node specificity of the decision-time representation.
struct EvalOutcome {
    double accuracy = 0.0;
    double coding_level = 0.0;
    double sp_mean = 0.0;
};

inline EvalOutcome evaluate_readout(const Reservoir& res, const EpisodeSource& src, const SparseReadout& readout,
                                    bool use_thresholds, int n_episodes, std::uint64_t eval_stream_seed,
                                    std::uint64_t decision_seed, double temperature) {
    EpisodeSimulator sim(res, src);
    SplitMix64 decision_rng(decision_seed);
    ActivityCounts counts(res.n_nodes(), src.n_class());
    double coding_sum = 0.0;
    int correct = 0;
    SparseActivation act;
    for (int e = 0; e < n_episodes; ++e) {
        const Episode ep = src.episode(eval_stream_seed, static_cast<std::uint64_t>(e));
        const VectorXd& v = sim.decision_state(ep);
        if (use_thresholds) {
            act.x = (v.array() - readout.theta_g - readout.theta_local.array()).max(0.0);
            act.active_mask = act.x.array() > 0.0;
        } else {
            act.x = v;
            act.active_mask = v.array() > 0.0;
        }
        const VectorXd y = readout.w_out * act.x;
        const int choice = decide(y, temperature, decision_rng);
        correct += choice == ep.label ? 1 : 0;
        coding_sum += static_cast<double>(act.active_mask.count()) / static_cast<double>(act.x.size());
        tally_activity(counts, act, ep.label);
    }
    EvalOutcome out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(n_episodes);
    out.coding_level = coding_sum / static_cast<double>(n_episodes);
    out.sp_mean = specificity(counts).sp_per_neuron.mean();
    return out;
}

/// Decision-time activity quantiles from a short probe run; used to pick
/// prelearning candidates when none are configured.
inline std::vector<double> calibrate_theta_candidates(const Reservoir& res, const EpisodeSource& src,
                                                      std::uint64_t seed, int probe_episodes = 20) {
    EpisodeSimulator sim(res, src);
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(probe_episodes) * static_cast<std::size_t>(res.n_nodes()));
    for (int e = 0; e < probe_episodes; ++e) {
        const Episode ep = src.episode(seed, static_cast<std::uint64_t>(e));
        const VectorXd& v = sim.decision_state(ep);
        for (Eigen::Index i = 0; i < v.size(); ++i) values.push_back(v[i]);
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        return values[static_cast<std::size_t>(pos)];
    };
    return {0.0, quantile(0.25), quantile(0.5), quantile(0.7), quantile(0.85)};
}

struct ReplicaSetup {
    Reservoir reservoir;
    std::shared_ptr<const StimulusSet> stimuli;
    std::unique_ptr<EpisodeSource> source;
    std::uint64_t replica_seed = 0;
    std::uint64_t episode_seed = 0;
};

inline ReplicaSetup build_replica(const ExperimentConfig& c, int replica) {
    ReplicaSetup setup;
    setup.replica_seed = rng::derive(c.master_seed, rng::kReplica, static_cast<std::uint64_t>(replica));
    setup.episode_seed = rng::derive(setup.replica_seed, rng::kEpisodeStream);

    ReservoirParams rp = c.reservoir;
    rp.seed = rng::derive(setup.replica_seed, rng::kReservoirSeed);
    setup.reservoir = make_reservoir(rp);

    if (!c.stimulus_file.empty()) {
        setup.stimuli = std::make_shared<const StimulusSet>(load_stimulus_set(c.stimulus_file, c.reservoir.n_inputs));
    } else {
        int pool = c.stimulus_pool;
        if (pool == 0) {
            const int seq_need = 3 + 3 * c.n_class + 3 * c.n_class * (c.n_class - 1) * 2;
            pool = std::max(110, c.is_sequence_like() ? seq_need : c.n_stimuli);
        }
        SplitMix64 stim_rng(rng::derive(setup.replica_seed, rng::kStimulusSeed));
        setup.stimuli = std::make_shared<const StimulusSet>(
            synth_stimulus_set(pool, c.reservoir.n_inputs, stim_rng));
    }

    SplitMix64 task_rng(rng::derive(setup.replica_seed, rng::kTaskSeed));
    if (c.is_sequence_like()) {
        SequenceTask task = make_sequence_task(*setup.stimuli, c.n_base, c.n_class, c.noise_sigma,
                                               c.element_steps, task_rng);
        setup.source = std::make_unique<SequenceEpisodeSource>(setup.stimuli, std::move(task));
    } else {
        StaticTask task = make_static_task(*setup.stimuli, c.n_stimuli, c.n_class, c.noise_sigma,
                                           c.duration_steps, task_rng);
        setup.source = std::make_unique<StaticEpisodeSource>(setup.stimuli, std::move(task));
    }
    return setup;
}

}  // namespace detail

/// Run every (algorithm, replica) arm. Within a replica all algorithms
/// share the reservoir, the task and the episode stream; the composed
/// model's initial global threshold is prelearned once, on replica 0.
inline RunRecord run_experiment(const ExperimentConfig& config) {
    config.validate();
    RunRecord record;
    record.config = to_json(config);

    const bool wants_composed = std::find(config.algorithms.begin(), config.algorithms.end(),
                                          Algorithm::Composed) != config.algorithms.end();
    const bool wants_metropolis = std::find(config.algorithms.begin(), config.algorithms.end(),
                                            Algorithm::Metropolis) != config.algorithms.end();
    const bool wants_gd_theta = std::find(config.algorithms.begin(), config.algorithms.end(),
                                          Algorithm::GdTheta) != config.algorithms.end();
    const bool needs_prelearn = wants_composed || (wants_metropolis && config.metropolis_uses_prelearn) ||
                                (wants_gd_theta && config.gd_theta_uses_prelearn);

    std::vector<detail::ReplicaSetup> replicas;
    replicas.reserve(static_cast<std::size_t>(config.n_replicas));
    for (int r = 0; r < config.n_replicas; ++r) replicas.push_back(detail::build_replica(config, r));

    // Prelearn the composed model's starting global threshold once per task.
    double composed_theta0 = 0.0;
    if (needs_prelearn) {
        const auto& r0 = replicas.front();
        record.prelearn_candidates = config.prelearn_candidates;
        if (record.prelearn_candidates.empty())
            record.prelearn_candidates = detail::calibrate_theta_candidates(
                r0.reservoir, *r0.source, rng::derive(r0.replica_seed, rng::kCalibration));
        const std::uint64_t prelearn_seed = rng::derive(r0.episode_seed, rng::kPrelearn);
        if (config.is_bandit()) {
            BanditEnv env{r0.source.get(), config.reward_correct, config.reward_wrong};
            composed_theta0 = prelearn_theta_g_bandit(r0.reservoir, env, config.trainer,
                                                      record.prelearn_candidates, config.prelearn_steps,
                                                      prelearn_seed);
        } else {
            composed_theta0 = prelearn_theta_g(r0.reservoir, *r0.source, config.trainer,
                                               record.prelearn_candidates, config.prelearn_steps,
                                               prelearn_seed, &record.prelearn_scores);
        }
        record.prelearned_theta_g = composed_theta0;
    }

    const int n_arms = static_cast<int>(config.algorithms.size()) * config.n_replicas;
    std::vector<ArmSummary> arms(static_cast<std::size_t>(n_arms));

    auto run_arm = [&](int replica, int alg_index) {
        const Algorithm alg = config.algorithms[static_cast<std::size_t>(alg_index)];
        const auto& setup = replicas[static_cast<std::size_t>(replica)];
        const EpisodeSource& src = *setup.source;

        TrainerConfig tc = config.trainer;
        if (alg == Algorithm::GdW) tc.n_batch = config.gd_w_batch;

        SparseReadout initial = SparseReadout::zero(config.n_class, config.reservoir.n_nodes);
        if (alg == Algorithm::Composed) initial.theta_g = composed_theta0;
        if (alg == Algorithm::Metropolis)
            initial.theta_g = config.metropolis_uses_prelearn ? composed_theta0
                                                              : config.metropolis_initial_theta_g;
        if (alg == Algorithm::GdTheta && config.gd_theta_uses_prelearn) initial.theta_g = composed_theta0;

        TrainStreams streams;
        streams.episode_seed = setup.episode_seed;
        streams.arm_seed = rng::derive(setup.replica_seed, rng::kArm, static_cast<std::uint64_t>(alg_index));

        ArmSummary arm;
        arm.algorithm = algorithm_name(alg);
        arm.replica = replica;
        arm.arm_seed = streams.arm_seed;
        arm.prelearned_theta_g = initial.theta_g;

        const bool thresholds = alg != Algorithm::GdW;
        const std::uint64_t eval_seed = rng::derive(setup.replica_seed, rng::kEval);
        const std::uint64_t eval_decision = rng::derive(streams.arm_seed, rng::kEvalDecision);
        const auto pre = detail::evaluate_readout(setup.reservoir, src, initial, thresholds,
                                                  config.n_eval_episodes, eval_seed, eval_decision,
                                                  tc.decision_temperature);

        SparseReadout trained;
        if (config.is_bandit()) {
            BanditEnv env{&src, config.reward_correct, config.reward_wrong};
            const BanditAlgorithm balg = alg == Algorithm::GdW ? BanditAlgorithm::GdW : BanditAlgorithm::Composed;
            BanditResult res = run_bandit(setup.reservoir, initial, env, balg, config.n_episodes, tc, streams);
            arm.series = std::move(res.series);
            arm.final_accuracy = res.final.accuracy;
            arm.theta_mean = res.final.theta_mean;
            arm.theta_std = res.final.theta_std;
            arm.theta_g = res.final.theta_g;
            arm.acceptance_rate = res.final.acceptance_rate;
            trained = std::move(res.readout);
        } else {
            TrainResult res = train(alg, setup.reservoir, initial, src, config.n_episodes, tc, streams);
            arm.series = std::move(res.series);
            arm.final_accuracy = res.final.accuracy;
            arm.theta_mean = res.final.theta_mean;
            arm.theta_std = res.final.theta_std;
            arm.theta_g = res.final.theta_g;
            arm.acceptance_rate = res.final.acceptance_rate;
            trained = std::move(res.readout);
        }

        const auto post = detail::evaluate_readout(setup.reservoir, src, trained, thresholds,
                                                   config.n_eval_episodes, eval_seed, eval_decision,
                                                   tc.decision_temperature);
        arm.eval_accuracy = post.accuracy;
        arm.coding_level = post.coding_level;
        arm.sp_mean_pre = pre.sp_mean;
        arm.sp_mean_post = post.sp_mean;

        arms[static_cast<std::size_t>(replica * static_cast<int>(config.algorithms.size()) + alg_index)] =
            std::move(arm);

        if (!config.out_dir.empty() && config.write_checkpoints) {
            const Json ckpt = checkpoint_to_json(setup.reservoir, trained, streams.episode_seed,
                                                 streams.arm_seed, config.n_episodes);
            const std::filesystem::path dir(config.out_dir);
            write_json_file((dir / ("checkpoint_" + std::string(algorithm_name(alg)) + "_r" +
                                    std::to_string(replica) + ".json")).string(),
                            ckpt);
        }
    };

    if (!config.out_dir.empty()) std::filesystem::create_directories(config.out_dir);

    if (config.n_threads > 1) {
        std::vector<std::future<void>> futures;
        int in_flight = 0;
        for (int r = 0; r < config.n_replicas; ++r) {
            for (int a = 0; a < static_cast<int>(config.algorithms.size()); ++a) {
                futures.push_back(std::async(std::launch::async, run_arm, r, a));
                if (++in_flight >= config.n_threads) {
                    for (auto& f : futures) f.get();
                    futures.clear();
                    in_flight = 0;
                }
            }
        }
        for (auto& f : futures) f.get();
    } else {
        for (int r = 0; r < config.n_replicas; ++r)
            for (int a = 0; a < static_cast<int>(config.algorithms.size()); ++a) run_arm(r, a);
    }

    record.arms = std::move(arms);

    if (!config.out_dir.empty()) {
        const std::filesystem::path dir(config.out_dir);
        write_json_file((dir / "record.json").string(), to_json_record(record), 2);
        std::ofstream jsonl(dir / "metrics.jsonl");
        for (const ArmSummary& arm : record.arms) {
            for (const MetricsRecord& m : arm.series) {
                Json row{{"algorithm", arm.algorithm}, {"replica", arm.replica},     {"episode", m.episode},
                         {"accuracy", m.accuracy},     {"loss", m.loss_avg},         {"coding_level", m.coding_level},
                         {"theta_mean", m.theta_mean}, {"theta_std", m.theta_std},   {"theta_g", m.theta_g},
                         {"acceptance_rate", m.acceptance_rate}};
                jsonl << row.dump() << "\n";
            }
        }
        std::ofstream tsv(dir / "summary.tsv");
        tsv << "algorithm\treplica\tfinal_accuracy\teval_accuracy\tcoding_level\ttheta_mean\ttheta_std\t"
               "theta_g\tacceptance_rate\tsp_mean_pre\tsp_mean_post\n";
        for (const ArmSummary& a : record.arms)
            tsv << a.algorithm << '\t' << a.replica << '\t' << a.final_accuracy << '\t' << a.eval_accuracy << '\t'
                << a.coding_level << '\t' << a.theta_mean << '\t' << a.theta_std << '\t' << a.theta_g << '\t'
                << a.acceptance_rate << '\t' << a.sp_mean_pre << '\t' << a.sp_mean_post << '\n';
    }
    return record;
}

inline Json to_json(const ArmSummary& a) {
    Json series = Json::array();
    for (const MetricsRecord& m : a.series)
        series.push_back(Json{{"episode", m.episode},
                              {"accuracy", m.accuracy},
                              {"loss", m.loss_avg},
                              {"coding_level", m.coding_level},
                              {"theta_mean", m.theta_mean},
                              {"theta_std", m.theta_std},
                              {"theta_g", m.theta_g},
                              {"acceptance_rate", m.acceptance_rate}});
    return Json{{"algorithm", a.algorithm},
                {"replica", a.replica},
                {"arm_seed", a.arm_seed},
                {"final_accuracy", a.final_accuracy},
                {"eval_accuracy", a.eval_accuracy},
                {"coding_level", a.coding_level},
                {"theta_mean", a.theta_mean},
                {"theta_std", a.theta_std},
                {"theta_g", a.theta_g},
                {"acceptance_rate", a.acceptance_rate},
                {"sp_mean_pre", a.sp_mean_pre},
                {"sp_mean_post", a.sp_mean_post},
                {"prelearned_theta_g", a.prelearned_theta_g},
                {"series", std::move(series)}};
}

inline Json to_json_record(const RunRecord& rec) {
    Json arms = Json::array();
    for (const ArmSummary& a : rec.arms) arms.push_back(to_json(a));
    return Json{{"format", "resparse-record-v1"},
                {"config", rec.config},
                {"prelearned_theta_g", rec.prelearned_theta_g},
                {"prelearn_candidates", rec.prelearn_candidates},
                {"prelearn_scores", rec.prelearn_scores},
                {"arms", std::move(arms)}};
}

inline RunRecord record_from_json(const Json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != "resparse-record-v1")
        throw IngestError("not a resparse run record");
    RunRecord rec;
    rec.config = j.at("config");
    rec.prelearned_theta_g = j.at("prelearned_theta_g").get<double>();
    rec.prelearn_candidates = j.at("prelearn_candidates").get<std::vector<double>>();
    rec.prelearn_scores = j.at("prelearn_scores").get<std::vector<double>>();
    for (const Json& a : j.at("arms")) {
        ArmSummary arm;
        arm.algorithm = a.at("algorithm").get<std::string>();
        arm.replica = a.at("replica").get<int>();
        arm.arm_seed = a.at("arm_seed").get<std::uint64_t>();
        arm.final_accuracy = a.at("final_accuracy").get<double>();
        arm.eval_accuracy = a.at("eval_accuracy").get<double>();
        arm.coding_level = a.at("coding_level").get<double>();
        arm.theta_mean = a.at("theta_mean").get<double>();
        arm.theta_std = a.at("theta_std").get<double>();
        arm.theta_g = a.at("theta_g").get<double>();
        arm.acceptance_rate = a.at("acceptance_rate").get<double>();
        arm.sp_mean_pre = a.at("sp_mean_pre").get<double>();
        arm.sp_mean_post = a.at("sp_mean_post").get<double>();
        arm.prelearned_theta_g = a.at("prelearned_theta_g").get<double>();
        for (const Json& m : a.at("series")) {
            MetricsRecord rec2;
            rec2.episode = m.at("episode").get<std::uint64_t>();
            rec2.accuracy = m.at("accuracy").get<double>();
            rec2.loss_avg = m.at("loss").get<double>();
            rec2.coding_level = m.at("coding_level").get<double>();
            rec2.theta_mean = m.at("theta_mean").get<double>();
            rec2.theta_std = m.at("theta_std").get<double>();
            rec2.theta_g = m.at("theta_g").get<double>();
            rec2.acceptance_rate = m.at("acceptance_rate").get<double>();
            arm.series.push_back(rec2);
        }
        rec.arms.push_back(std::move(arm));
    }
    return rec;
}

/// Cross-replica aggregate for one algorithm.
struct AlgorithmAggregate {
    std::string algorithm;
    int n_replicas = 0;
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    double eval_accuracy_mean = 0.0;
    double coding_mean = 0.0, coding_std = 0.0;
    double theta_mean_mean = 0.0, theta_std_mean = 0.0;
    double sp_pre_mean = 0.0, sp_post_mean = 0.0;
};

inline std::vector<AlgorithmAggregate> aggregate(const RunRecord& rec) {
    std::map<std::string, std::vector<const ArmSummary*>> by_alg;
    std::vector<std::string> order;
    for (const ArmSummary& a : rec.arms) {
        if (by_alg.find(a.algorithm) == by_alg.end()) order.push_back(a.algorithm);
        by_alg[a.algorithm].push_back(&a);
    }
    auto mean_of = [](const std::vector<double>& xs) {
        double s = 0.0;
        for (double x : xs) s += x;
        return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
    };
    auto std_of = [&](const std::vector<double>& xs) {
        if (xs.size() < 2) return 0.0;
        const double m = mean_of(xs);
        double s = 0.0;
        for (double x : xs) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(xs.size() - 1));
    };
    std::vector<AlgorithmAggregate> out;
    for (const std::string& name : order) {
        const auto& arms = by_alg[name];
        AlgorithmAggregate agg;
        agg.algorithm = name;
        agg.n_replicas = static_cast<int>(arms.size());
        std::vector<double> acc, eval, coding, tmean, tstd, sppre, sppost;
        for (const ArmSummary* a : arms) {
            acc.push_back(a->final_accuracy);
            eval.push_back(a->eval_accuracy);
            coding.push_back(a->coding_level);
            tmean.push_back(a->theta_mean);
            tstd.push_back(a->theta_std);
            sppre.push_back(a->sp_mean_pre);
            sppost.push_back(a->sp_mean_post);
        }
        agg.accuracy_mean = mean_of(acc);
        agg.accuracy_std = std_of(acc);
        agg.eval_accuracy_mean = mean_of(eval);
        agg.coding_mean = mean_of(coding);
        agg.coding_std = std_of(coding);
        agg.theta_mean_mean = mean_of(tmean);
        agg.theta_std_mean = mean_of(tstd);
        agg.sp_pre_mean = mean_of(sppre);
        agg.sp_post_mean = mean_of(sppost);
        out.push_back(agg);
    }
    return out;
}

/// Comparison tables plus plot-ready per-algorithm series, written as
/// delimited text.
inline void report(const std::vector<RunRecord>& records, std::ostream& table_out,
                   const std::optional<std::string>& series_dir = std::nullopt) {
    table_out << "record\talgorithm\treplicas\taccuracy_mean\taccuracy_std\teval_accuracy\tcoding_mean\t"
                 "coding_std\ttheta_mean\ttheta_std\tsp_pre\tsp_post\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (const AlgorithmAggregate& a : aggregate(records[i])) {
            table_out << i << '\t' << a.algorithm << '\t' << a.n_replicas << '\t' << a.accuracy_mean << '\t'
                      << a.accuracy_std << '\t' << a.eval_accuracy_mean << '\t' << a.coding_mean << '\t'
                      << a.coding_std << '\t' << a.theta_mean_mean << '\t' << a.theta_std_mean << '\t'
                      << a.sp_pre_mean << '\t' << a.sp_post_mean << '\n';
        }
    }
    if (!series_dir) return;
    std::filesystem::create_directories(*series_dir);
    for (std::size_t i = 0; i < records.size(); ++i) {
        // episode -> algorithm -> accuracies across replicas
        std::map<std::string, std::map<std::uint64_t, std::vector<double>>> series;
        for (const ArmSummary& arm : records[i].arms)
            for (const MetricsRecord& m : arm.series) series[arm.algorithm][m.episode].push_back(m.accuracy);
        for (const auto& [alg, pts] : series) {
            std::ofstream out(std::filesystem::path(*series_dir) /
                              ("series_" + std::to_string(i) + "_" + alg + ".tsv"));
            out << "episode\taccuracy_mean\taccuracy_std\tn\n";
            for (const auto& [episode, vals] : pts) {
                double m = 0.0;
                for (double v : vals) m += v;
                m /= static_cast<double>(vals.size());
                double s = 0.0;
                for (double v : vals) s += (v - m) * (v - m);
                s = vals.size() > 1 ? std::sqrt(s / static_cast<double>(vals.size() - 1)) : 0.0;
                out << episode << '\t' << m << '\t' << s << '\t' << vals.size() << '\n';
            }
        }
    }
}

}  // namespace resparse

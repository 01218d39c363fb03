// Command-line front end: run experiments, aggregate run records, generate
// synthetic stimulus tables and inspect checkpoints.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "resparse/harness.hpp"

namespace {

using namespace resparse;

std::string resolve_out_dir(const std::string& dir) {
    if (dir.empty()) return dir;
    std::filesystem::path p(dir);
    if (p.is_absolute()) return dir;
    const char* root = std::getenv("RESPARSE_OUT_ROOT");
    if (root == nullptr || *root == '\0') return dir;
    return (std::filesystem::path(root) / p).string();
}

int cmd_run(const std::optional<std::string>& config_path, const std::vector<std::string>& overrides,
            const std::optional<std::string>& task, const std::optional<std::string>& preset,
            const std::optional<std::string>& out_dir) {
    ExperimentConfig config = parse_config(config_path, overrides, task, preset);
    if (out_dir) config.out_dir = *out_dir;
    config.out_dir = resolve_out_dir(config.out_dir);
    config.validate();

    const RunRecord record = run_experiment(config);
    for (const AlgorithmAggregate& a : aggregate(record)) {
        std::cout << a.algorithm << ": accuracy " << a.accuracy_mean << " +- " << a.accuracy_std
                  << ", coding " << a.coding_mean << ", theta " << a.theta_mean_mean << " +- "
                  << a.theta_std_mean << "\n";
    }
    if (!config.out_dir.empty()) std::cout << "record written to " << config.out_dir << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& record_paths, const std::optional<std::string>& out_dir) {
    std::vector<RunRecord> records;
    records.reserve(record_paths.size());
    for (const std::string& p : record_paths) records.push_back(record_from_json(read_json_file(p)));
    const auto resolved = out_dir ? std::optional<std::string>(resolve_out_dir(*out_dir)) : std::nullopt;
    report(records, std::cout, resolved);
    if (resolved) {
        std::ofstream table(std::filesystem::path(*resolved) / "comparison.tsv");
        report(records, table, std::nullopt);
        std::cout << "series written to " << *resolved << "\n";
    }
    return 0;
}

int cmd_gen_data(int n_stimuli, int n_inputs, std::uint64_t seed, const std::string& out_path) {
    SplitMix64 rng(seed);
    const StimulusSet set = synth_stimulus_set(n_stimuli, n_inputs, rng);
    std::ofstream out(out_path);
    if (!out) throw IngestError("cannot write stimulus file: " + out_path);
    out.precision(17);
    for (int i = 0; i < set.n_stimuli(); ++i) {
        for (int j = 0; j < set.n_inputs(); ++j) out << (j > 0 ? "\t" : "") << set.rates(i, j);
        out << "\n";
    }
    std::cout << "wrote " << n_stimuli << " x " << n_inputs << " stimulus table to " << out_path << "\n";
    return 0;
}

int cmd_inspect(const std::string& path) {
    const Json j = read_json_file(path);
    if (j.contains("format") && j.at("format") == "resparse-record-v1") {
        const RunRecord rec = record_from_json(j);
        std::cout << "run record: " << rec.arms.size() << " arms, prelearned theta_g "
                  << rec.prelearned_theta_g << "\n";
        report({rec}, std::cout, std::nullopt);
        return 0;
    }
    const Checkpoint c = checkpoint_from_json(j);
    const ThetaStats ts = theta_stats(c.readout);
    std::cout << "checkpoint: " << c.reservoir.params.n_nodes << " nodes, " << c.reservoir.params.n_inputs
              << " inputs, seed " << c.reservoir.params.seed << "\n"
              << "  alpha " << c.reservoir.params.alpha << ", rho " << c.reservoir.params.rho
              << ", spectral radius " << c.reservoir.recurrent.spectral_radius << "\n"
              << "  recurrent nonzeros " << c.reservoir.recurrent.weights.nonZeros() << ", input nonzeros "
              << c.reservoir.input.weights.nonZeros() << "\n"
              << "  readout: " << c.readout.n_class() << " classes, theta_g " << c.readout.theta_g
              << ", theta mean " << ts.mean << ", theta std " << ts.std << ", |W| "
              << c.readout.w_out.norm() << "\n"
              << "  episodes trained " << c.episodes_trained << " (episode seed " << c.episode_seed
              << ", arm seed " << c.arm_seed << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reservoir computing with learnable sparsity thresholds"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment and write its record");
    std::string run_config, run_task, run_preset, run_out;
    std::vector<std::string> run_sets;
    run->add_option("--config", run_config, "JSON config file");
    run->add_option("--task", run_task, "static | sequence | bandit-static | bandit-sequence");
    run->add_option("--preset", run_preset, "desk | paper");
    run->add_option("--out", run_out, "output directory (relative paths join RESPARSE_OUT_ROOT)");
    run->add_option("--set", run_sets, "override config fields, e.g. --set trainer.beta=4")->take_all();

    auto* rep = app.add_subcommand("report", "aggregate run records into comparison tables");
    std::vector<std::string> rep_paths;
    std::string rep_out;
    rep->add_option("records", rep_paths, "record.json paths")->required();
    rep->add_option("--out", rep_out, "directory for comparison.tsv and per-algorithm series");

    auto* gen = app.add_subcommand("gen-data", "write a synthetic stimulus table");
    int gen_n = 110, gen_inputs = 24;
    std::uint64_t gen_seed = 7;
    std::string gen_out = "stimuli.tsv";
    gen->add_option("--n-stimuli", gen_n, "number of stimuli (rows)");
    gen->add_option("--n-inputs", gen_inputs, "number of input channels (columns)");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output path");

    auto* ins = app.add_subcommand("inspect", "summarize a checkpoint or run record");
    std::string ins_path;
    ins->add_option("path", ins_path, "checkpoint or record JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run)
            return cmd_run(run_config.empty() ? std::nullopt : std::optional(run_config), run_sets,
                           run_task.empty() ? std::nullopt : std::optional(run_task),
                           run_preset.empty() ? std::nullopt : std::optional(run_preset),
                           run_out.empty() ? std::nullopt : std::optional(run_out));
        if (*rep) return cmd_report(rep_paths, rep_out.empty() ? std::nullopt : std::optional(rep_out));
        if (*gen) return cmd_gen_data(gen_n, gen_inputs, gen_seed, gen_out);
        if (*ins) return cmd_inspect(ins_path);
    } catch (const std::exception& e) {
        const resparse::Json err{{"error", {{"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}

#pragma once

#include <Eigen/Dense>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "resparse/errors.hpp"
#include "resparse/rng.hpp"

namespace resparse {

/// A bank of stimuli: one row per stimulus, one column per input channel.
struct StimulusSet {
    enum class Source { FileIngested, Synthetic };

    Eigen::MatrixXd rates;  // n_stimuli x n_inputs, nonnegative
    Source source = Source::Synthetic;

    int n_stimuli() const { return static_cast<int>(rates.rows()); }
    int n_inputs() const { return static_cast<int>(rates.cols()); }
};

/// Parse a delimited numeric table (whitespace, comma or tab separated; one
/// optional header line) with exactly `expected_cols` columns.
inline StimulusSet load_stimulus_set(const std::string& path, int expected_cols = 24) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open stimulus file: " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    bool header_allowed = true;
    while (std::getline(in, line)) {
        ++line_no;
        // Normalize separators, then split on whitespace.
        for (char& c : line)
            if (c == ',' || c == '\t' || c == ';') c = ' ';
        std::istringstream ls(line);
        std::vector<std::string> cells;
        std::string cell;
        while (ls >> cell) cells.push_back(cell);
        if (cells.empty()) continue;

        std::vector<double> row;
        row.reserve(cells.size());
        bool numeric = true;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            try {
                std::size_t used = 0;
                double value = std::stod(cells[c], &used);
                if (used != cells[c].size()) throw std::invalid_argument("trailing garbage");
                row.push_back(value);
            } catch (const std::exception&) {
                numeric = false;
                if (header_allowed) break;
                throw IngestError("non-numeric cell at row " + std::to_string(line_no) + ", column " +
                                  std::to_string(c + 1) + ": '" + cells[c] + "'");
            }
        }
        if (!numeric) {
            header_allowed = false;  // at most one header line
            continue;
        }
        header_allowed = false;
        if (static_cast<int>(row.size()) != expected_cols)
            throw IngestError("row " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                              " columns, expected " + std::to_string(expected_cols));
        for (std::size_t c = 0; c < row.size(); ++c)
            if (!(row[c] >= 0.0))
                throw IngestError("negative or non-finite rate at row " + std::to_string(line_no) +
                                  ", column " + std::to_string(c + 1));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IngestError("stimulus file has no numeric rows: " + path);

    StimulusSet set;
    set.source = StimulusSet::Source::FileIngested;
    set.rates.resize(static_cast<Eigen::Index>(rows.size()), expected_cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int c = 0; c < expected_cols; ++c) set.rates(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    return set;
}

/// Synthetic surrogate stimuli: i.i.d. lognormal(0, 1) rates rescaled so
/// every channel has sample mean exactly 1.
inline StimulusSet synth_stimulus_set(int n_stimuli, int n_inputs, SplitMix64& rng) {
    if (n_stimuli < 1) throw ConfigError("n_stimuli must be >= 1");
    if (n_inputs < 1) throw ConfigError("n_inputs must be >= 1");
    StimulusSet set;
    set.source = StimulusSet::Source::Synthetic;
    set.rates.resize(n_stimuli, n_inputs);
    std::lognormal_distribution<double> law(0.0, 1.0);
    for (int i = 0; i < n_stimuli; ++i)
        for (int j = 0; j < n_inputs; ++j) set.rates(i, j) = law(rng);
    for (int j = 0; j < n_inputs; ++j) {
        const double mean = set.rates.col(j).mean();
        set.rates.col(j) /= mean;
    }
    return set;
}

/// Static memorization task: a pool of stimuli, each bound to a uniformly
/// random class.
struct StaticTask {
    std::vector<int> stimulus_ids;
    std::vector<int> labels;
    double noise_sigma = 0.3;
    int duration_steps = 50;
    int n_class = 2;

    int n_items() const { return static_cast<int>(stimulus_ids.size()); }
};

inline StaticTask make_static_task(const StimulusSet& set, int n_stimuli, int n_class, double sigma,
                                   int duration_steps, SplitMix64& rng) {
    if (n_class < 2) throw ConfigError("n_class must be >= 2");
    if (n_stimuli < 1) throw ConfigError("n_stimuli must be >= 1");
    if (n_stimuli > set.n_stimuli())
        throw ConfigError("n_stimuli (" + std::to_string(n_stimuli) + ") exceeds available stimuli (" +
                          std::to_string(set.n_stimuli()) + ")");
    if (sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
    if (duration_steps < 1) throw ConfigError("duration_steps must be >= 1");

    StaticTask task;
    task.noise_sigma = sigma;
    task.duration_steps = duration_steps;
    task.n_class = n_class;
    // Draw the stimulus subset without replacement.
    std::vector<int> pool(static_cast<std::size_t>(set.n_stimuli()));
    std::iota(pool.begin(), pool.end(), 0);
    for (int j = 0; j < n_stimuli; ++j) {
        std::uniform_int_distribution<int> pick(j, set.n_stimuli() - 1);
        std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    pool.resize(static_cast<std::size_t>(n_stimuli));
    task.stimulus_ids = pool;
    std::uniform_int_distribution<int> label(0, n_class - 1);
    task.labels.resize(static_cast<std::size_t>(n_stimuli));
    for (auto& l : task.labels) l = label(rng);
    return task;
}

/// Noisy sample s_i = rate_i * (1 + sigma * xi), xi ~ N(0,1), fresh per
/// channel. Multiplicative: silent channels stay silent at any sigma.
template <typename Rng>
void noisy_stimulus(const StimulusSet& set, int stimulus_id, double sigma, Rng& rng, Eigen::VectorXd& out) {
    const auto row = set.rates.row(stimulus_id);
    out.resize(row.size());
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index j = 0; j < row.size(); ++j) out[j] = row[j] * (1.0 + sigma * gauss(rng));
}

/// Sequence classification task. Each item is a triple of stimulus ids.
/// Items are generated per base triple by substituting one element
/// ("perturbation") and, for each perturbed sequence, replacing the two
/// remaining elements ("context") with fresh stimuli.
struct SequenceTask {
    struct Provenance {
        int base_index;          // which base triple this item derives from
        int perturbed_position;  // 0..2
        int context_variant;     // 0 = original context, >0 = replaced context
    };

    std::vector<std::array<int, 3>> bases;
    std::vector<std::array<int, 3>> sequences;
    std::vector<int> labels;
    std::vector<Provenance> provenance;
    double noise_sigma = 0.2;
    int element_steps = 10;
    int n_class = 2;

    int n_items() const { return static_cast<int>(sequences.size()); }
    int duration_steps() const { return 3 * element_steps; }
};

inline SequenceTask make_sequence_task(const StimulusSet& set, int n_base, int n_class,
                                       double sigma, int element_steps, SplitMix64& rng) {
    if (n_base < 1) throw ConfigError("n_base must be >= 1");
    if (n_class < 1) throw ConfigError("n_class must be >= 1");
    if (sigma < 0.0) throw ConfigError("noise sigma must be >= 0");
    if (element_steps < 1) throw ConfigError("element_steps must be >= 1");
    // Stimuli consumed per base family, drawn without replacement inside the
    // family: 3 base + 3*n_class perturbations + 2 per context variant.
    const int per_family = 3 + 3 * n_class + 3 * n_class * (n_class - 1) * 2;
    if (per_family > set.n_stimuli())
        throw ConfigError("stimulus pool exhausted: a base family needs " + std::to_string(per_family) +
                          " distinct stimuli but only " + std::to_string(set.n_stimuli()) + " are available");

    SequenceTask task;
    task.noise_sigma = sigma;
    task.element_steps = element_steps;
    task.n_class = n_class;
    task.sequences.reserve(static_cast<std::size_t>(3 * n_class * n_class * n_base));

    std::vector<int> pool(static_cast<std::size_t>(set.n_stimuli()));
    for (int b = 0; b < n_base; ++b) {
        // Fresh shuffled pool per family: sequential draws are uniform
        // without replacement inside the family, independent across families.
        std::iota(pool.begin(), pool.end(), 0);
        for (std::size_t j = 0; j + 1 < pool.size(); ++j) {
            std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
            std::swap(pool[j], pool[pick(rng)]);
        }
        std::size_t next = 0;
        auto draw = [&]() { return pool[next++]; };

        std::array<int, 3> base{draw(), draw(), draw()};
        task.bases.push_back(base);

        for (int pos = 0; pos < 3; ++pos) {
            // Distinct random labels across the n_class perturbation variants.
            std::vector<int> label_perm(static_cast<std::size_t>(n_class));
            std::iota(label_perm.begin(), label_perm.end(), 0);
            for (std::size_t j = 0; j + 1 < label_perm.size(); ++j) {
                std::uniform_int_distribution<std::size_t> pick(j, label_perm.size() - 1);
                std::swap(label_perm[j], label_perm[pick(rng)]);
            }
            for (int variant = 0; variant < n_class; ++variant) {
                std::array<int, 3> seq = base;
                seq[static_cast<std::size_t>(pos)] = draw();
                const int label = label_perm[static_cast<std::size_t>(variant)];
                task.sequences.push_back(seq);
                task.labels.push_back(label);
                task.provenance.push_back({b, pos, 0});
                for (int ctx = 1; ctx < n_class; ++ctx) {
                    std::array<int, 3> cseq = seq;
                    for (int p = 0; p < 3; ++p)
                        if (p != pos) cseq[static_cast<std::size_t>(p)] = draw();
                    // Context change flips the class: uniform among the others.
                    std::uniform_int_distribution<int> other(0, n_class - 2);
                    int clabel = other(rng);
                    if (clabel >= label) ++clabel;
                    task.sequences.push_back(cseq);
                    task.labels.push_back(clabel);
                    task.provenance.push_back({b, pos, ctx});
                }
            }
        }
    }
    return task;
}

/// A single presentation: everything needed to regenerate its noisy input
/// deterministically, step by step.
struct Episode {
    int item = 0;
    int label = 0;
    int total_steps = 0;
    std::uint64_t noise_seed = 0;
};

/// Uniform episode generator over a task. Episode index e maps to an item
/// via one substream and to a noise seed via another, so an episode stream
/// is a pure function of (seed, e) and replays exactly.
class EpisodeSource {
public:
    virtual ~EpisodeSource() = default;
    virtual int n_class() const = 0;
    virtual int n_items() const = 0;
    virtual int total_steps() const = 0;
    virtual int item_label(int item) const = 0;
    /// Deterministic noisy input for (episode, step).
    virtual void input_at(const Episode& ep, int step, Eigen::VectorXd& out) const = 0;

    Episode episode(std::uint64_t stream_seed, std::uint64_t index) const {
        Episode ep;
        SplitMix64 pick(rng::derive(stream_seed, rng::kEpisodeItem, index));
        std::uniform_int_distribution<int> item(0, n_items() - 1);
        ep.item = item(pick);
        ep.label = item_label(ep.item);
        ep.total_steps = total_steps();
        ep.noise_seed = rng::derive(stream_seed, rng::kEpisodeNoise, index);
        return ep;
    }
};

class StaticEpisodeSource final : public EpisodeSource {
public:
    StaticEpisodeSource(std::shared_ptr<const StimulusSet> set, StaticTask task)
        : set_(std::move(set)), task_(std::move(task)) {}

    int n_class() const override { return task_.n_class; }
    int n_items() const override { return task_.n_items(); }
    int total_steps() const override { return task_.duration_steps; }
    int item_label(int item) const override { return task_.labels[static_cast<std::size_t>(item)]; }

    void input_at(const Episode& ep, int step, Eigen::VectorXd& out) const override {
        if (step < 0 || step >= ep.total_steps) throw ContractError("step out of range for episode");
        SplitMix64 eng(rng::derive(ep.noise_seed, rng::kNoiseStep, static_cast<std::uint64_t>(step)));
        noisy_stimulus(*set_, task_.stimulus_ids[static_cast<std::size_t>(ep.item)], task_.noise_sigma, eng, out);
    }

    const StaticTask& task() const { return task_; }
    const StimulusSet& stimuli() const { return *set_; }

private:
    std::shared_ptr<const StimulusSet> set_;
    StaticTask task_;
};

class SequenceEpisodeSource final : public EpisodeSource {
public:
    SequenceEpisodeSource(std::shared_ptr<const StimulusSet> set, SequenceTask task)
        : set_(std::move(set)), task_(std::move(task)) {}

    int n_class() const override { return task_.n_class; }
    int n_items() const override { return task_.n_items(); }
    int total_steps() const override { return task_.duration_steps(); }
    int item_label(int item) const override { return task_.labels[static_cast<std::size_t>(item)]; }

    void input_at(const Episode& ep, int step, Eigen::VectorXd& out) const override {
        if (step < 0 || step >= ep.total_steps) throw ContractError("step out of range for episode");
        const int element = step / task_.element_steps;
        const int stim = task_.sequences[static_cast<std::size_t>(ep.item)][static_cast<std::size_t>(element)];
        SplitMix64 eng(rng::derive(ep.noise_seed, rng::kNoiseStep, static_cast<std::uint64_t>(step)));
        noisy_stimulus(*set_, stim, task_.noise_sigma, eng, out);
    }

    const SequenceTask& task() const { return task_; }
    const StimulusSet& stimuli() const { return *set_; }

private:
    std::shared_ptr<const StimulusSet> set_;
    SequenceTask task_;
};

}  // namespace resparse

#pragma once
// End-to-end experiment pipeline shared by the CLI and the acceptance tests:
// world -> dataset -> memory -> training -> evaluation -> files, plus sweeps
// on a bounded worker pool and the figure presets.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "icr/analysis.hpp"
#include "icr/config.hpp"
#include "icr/training.hpp"

namespace icr {

struct RunResult {
    KnowledgeWorld world;
    std::vector<IcSequence> data;
    DatasetStats stats;
    RunTrace trace;              // partial attention only
    std::optional<FullState> full;  // full attention only
    std::optional<PretrainResult> pretrained;
    std::vector<double> v, q;    // final step-1 / step-2 attention (mean over the training set in full mode)
    EvalReport eval;
};

KnowledgeWorld make_world(const ExperimentConfig& cfg);
// dataset_size == 0 enumerates every sequence.
std::vector<IcSequence> make_dataset(const ExperimentConfig& cfg, const KnowledgeWorld& world);
EmbeddingBasis make_experiment_basis(const ExperimentConfig& cfg, const KnowledgeWorld& world);
// The frozen memory for the run: the construction, or a pretraining run.
FullState make_memory_state(const ExperimentConfig& cfg, const KnowledgeWorld& world, const EmbeddingBasis& basis,
                            std::optional<PretrainResult>* pretrained = nullptr);

// Pure function of the config (validates it first).
RunResult run_experiment(const ExperimentConfig& cfg);

// Trained parameters: {"attention": "partial", theta, omega} or
// {"attention": "full", "D", "kq", "mlp"} (mlp in the MLP JSON schema).
Json state_to_json(const ExperimentConfig& cfg, const RunResult& r);
// Rebuilds world + basis from the config and evaluates the stored state.
EvalReport evaluate_state(const ExperimentConfig& cfg, const Json& state);

Json run_summary(const ExperimentConfig& cfg, const RunResult& r);

// Writes config.json, dataset.json, state.json, summary.json, eval.json and,
// as enabled, trace.csv and attention.{csv,svg}.
void write_run(const ExperimentConfig& cfg, const RunResult& r, const std::string& dir);

struct SweepRow {
    int m = 0;
    double value = 0.0;  // seed, sample count or temperature
    std::uint64_t seed = 0;
    double acc1 = 0.0, acc2 = 0.0, acc_end_to_end = 0.0, acc1_consistent = 0.0;
    double L1 = 0.0, L2 = 0.0;
    double p_conf = 0.0, p_mis = 0.0;
};

// The configs a sweep expands to, in output order (series, value, seed).
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg);
// Runs every expanded config on up to `workers` threads. When run_root is not
// empty each run writes its own directory below it. Results are in expansion
// order regardless of scheduling.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, unsigned workers, const std::string& run_root = "");
std::string sweep_rows_csv(const std::vector<SweepRow>& rows);
// One line per (m, value): count, mean and population std of acc1 / acc2.
std::string sweep_aggregate_csv(const std::vector<SweepRow>& rows);
std::string sweep_plot_svg(const std::vector<SweepRow>& rows, const std::string& x_label, const std::string& title);

// Figure presets "2a", "2b", "3", "4a", "4b" at their published hyperparameters.
ExperimentConfig figure_config(const std::string& id, std::uint64_t seed);
// Runs a figure preset and writes its data and SVG under dir. Returns a JSON summary.
Json run_figure(const std::string& id, std::uint64_t seed, const std::string& dir, unsigned workers);

// Bounded pool: calls fn(i) for i in [0, count) on up to `workers` threads and
// rethrows the first failure (lowest index) after all tasks finish.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace icr

#pragma once
// Experiment configuration: one JSON document per run, archived next to its
// outputs. Every seed is explicit and the document round-trips exactly.

#include <cstdint>
#include <string>
#include <vector>

#include "icr/analysis.hpp"
#include "icr/io.hpp"
#include "icr/training.hpp"
#include "icr/vocab_data.hpp"

namespace icr {

enum class MemoryKind { constructed, pretrained };
std::string to_string(MemoryKind m);
MemoryKind memory_kind_from_string(const std::string& s);

std::string to_string(AttnMode m);
AttnMode attn_mode_from_string(const std::string& s);

enum class SweepAxis { seeds, samples, T };
std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

struct ExperimentConfig {
    struct World {
        int n = 8;
        int m = 64;
        std::uint64_t seed = 0;
        WorldMode mode = WorldMode::unconstrained;
        long long max_retries = 1'000'000;
    } world;

    struct Task {
        int k = 2;
        // Number of training sequences; 0 uses every IC-recall sequence.
        std::size_t dataset_size = 8;
        std::uint64_t dataset_seed = 0;
        EvalScope eval_scope = EvalScope::all();
    } task;

    struct ModelSection {
        EmbeddingMode embedding = EmbeddingMode::random_orthonormal;
        std::uint64_t embedding_seed = 0;
        int d_mlp = 0;  // 0: 3 n^2 (pretrained memory only; the construction fixes its own width)
        MemoryKind memory = MemoryKind::constructed;
        AttnMode attention = AttnMode::partial;
    } model;

    // Defaults follow the published fine-tuning setup (Adam, lr 1e-3, T = 0.05).
    TrainConfig train = [] {
        TrainConfig t;
        t.optimizer = Optimizer::adam;
        return t;
    }();
    PretrainConfig pretrain;

    struct Outputs {
        std::string dir = "runs";
        bool emit_svg = true;
        bool emit_csv = true;
    } outputs;

    struct Sweep {
        SweepAxis axis = SweepAxis::seeds;
        std::vector<double> values;    // seeds, sample counts or temperatures
        std::vector<int> series_m;     // optional |R| series; empty keeps world.m
        // Seeds repeated at every point of a samples / T sweep (empty: the
        // config's own seeds). Ignored for the seeds axis.
        std::vector<std::uint64_t> seeds;
    } sweep;

    // Sets every seed in the document to s (streams stay independent because
    // each consumer derives its own named stream).
    void reseed(std::uint64_t s);

    // Throws InvalidConfig on inconsistent settings.
    void validate() const;
};

Json config_to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys and bad values throw InvalidConfig.
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace icr

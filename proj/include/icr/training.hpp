#pragma once
// CoT losses, analytic / numeric / reverse-mode gradients, the two-stage
// temperature-scaled perturbed gradient descent, Adam loops, and the
// triplet-completion pretraining pipeline.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "icr/model.hpp"
#include "icr/vocab_data.hpp"

namespace icr {

enum class Optimizer { gd, adam };
enum class Trainable { partial, full, pretrain };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);
std::string to_string(Trainable t);
Trainable trainable_from_string(const std::string& s);

struct TrainConfig {
    double T = 0.05;
    // Step sizes; a value <= 0 selects the schedule default c * (order).
    double eta1 = 0.0;  // default c_eta1 * T^1.5 * log(1/T)
    double eta2 = 0.0;  // default c_eta2 * T^2
    long long t1 = 1;
    long long t2 = 0;   // <= 0 selects ceil(c_t2 / T * log(1/T))
    double xi_radius = -1.0;  // < 0 selects c_xi * T^3 / log^2(1/delta)
    double delta = 0.1;
    double c_eta1 = 1.0, c_eta2 = 1.0, c_xi = 1.0, c_t2 = 5.0;
    bool perturb_theta_only = false;  // default: joint (theta, omega) ball
    // Stage stop rule for the converge-to-limit regime: stop a stage early once
    // the gradient norm drops below grad_tol (0 disables).
    double grad_tol = 0.0;
    std::size_t sample_count = 64;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::gd;
    double adam_lr = 1e-3;
    long long adam_iters = 20000;
    long long trace_every = 0;  // 0: only endpoints of each stage
};

// Fills schedule defaults; throws InvalidConfig on T <= 0, eta <= 0, xi < 0.
TrainConfig resolve_schedule(TrainConfig cfg);

// ---- losses ----------------------------------------------------------------
struct LossBreakdown {
    double L1 = 0.0, L2 = 0.0, L = 0.0;
    std::vector<double> l1, l2;  // per sequence
};

// Ground truth through the literal forward pass (teacher-forced L2).
LossBreakdown loss(const Model& model, const AttnParams& attn, const std::vector<IcSequence>& data, double T);

// Partial mode with constructed memory, via closed-form logits.
LossBreakdown loss_closed_form(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                               const std::vector<double>& theta, const std::vector<double>& omega, double T);

// ---- analytic gradients (partial mode, constructed memory) -----------------
// d l1 / d v for one sequence and d L1 / d v averaged over a dataset.
std::vector<double> grad_v_step1(const KnowledgeWorld& world, const IcSequence& seq, const std::vector<double>& v,
                                 double T);
std::vector<double> grad_v_step1(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                 const std::vector<double>& v, double T);
std::vector<double> grad_q_step2(const KnowledgeWorld& world, const IcSequence& seq, const std::vector<double>& q,
                                 double T);
std::vector<double> grad_q_step2(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                 const std::vector<double>& q, double T);
// Softmax chain rule: d/d theta_i = v_i (g_i - v^T g).
std::vector<double> softmax_chain(const std::vector<double>& v, const std::vector<double>& g);
std::vector<double> grad_theta_analytic(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                        const std::vector<double>& theta, double T);
std::vector<double> grad_omega_analytic(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                        const std::vector<double>& omega, double T);

// Central differences of an arbitrary scalar function.
std::vector<double> grad_numeric(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<double>& x, double h);

// ---- compiled dataset -------------------------------------------------------
// A dataset reduced to what the step-1 loss depends on: for each sequence, the
// multiset of relation incidence masks (bit i*k+j set iff r(s_i) = a_j) with the
// target relation kept separate. Identical multisets are merged with a weight.
// Step 2 (teacher forced) has the same structure for every sequence.
struct CompiledDataset {
    struct RelClass {
        std::uint32_t mask = 0;
        double mult = 0.0;
        bool target = false;
    };
    struct Pattern {
        double weight = 0.0;  // fraction of the dataset
        std::vector<RelClass> classes;
    };
    int k = 2;
    int n = 0;
    std::vector<Pattern> patterns;
};

CompiledDataset compile_dataset(const KnowledgeWorld& world, const std::vector<IcSequence>& data);

// L1 and d L1 / d v (grad has 2k+2 entries) from the compiled dataset.
double compiled_step1(const CompiledDataset& cd, const std::vector<double>& v, double T, std::vector<double>* grad);
// L2 and d L2 / d q (grad has 2k+3 entries).
double compiled_step2(const CompiledDataset& cd, const std::vector<double>& q, double T, std::vector<double>* grad);

// ---- traces -----------------------------------------------------------------
struct TraceRow {
    long long iter = 0;
    int stage = 0;
    double L1 = 0.0, L2 = 0.0;
    std::vector<double> v, q;
    double psi = 0.0;  // NaN when degenerate
    double g = 0.0;
    double acc1 = 0.0, acc2 = 0.0;  // on the training set
};

struct RunTrace {
    std::vector<TraceRow> rows;
    std::vector<double> theta, omega;  // final parameters
    std::vector<double> theta_stage1, omega_stage1;  // end of stage 1 (PGD only)
    std::vector<double> perturbation;                // xi (PGD only)
    long long stage1_iters = 0, stage2_iters = 0;
    TrainConfig config;
};

// Called after every parameter update (and once at initialization, iter 0).
struct IterateView {
    long long iter;
    int stage;
    const std::vector<double>& theta;
    const std::vector<double>& omega;
    const std::vector<double>& v;
    const std::vector<double>& q;
    double L1, L2;
};
using Observer = std::function<void(const IterateView&)>;

// Keeps theta finite once an attention weight underflows (log-space floor).
inline constexpr double kThetaFloor = -700.0;

RunTrace run_pgd(const TrainConfig& cfg, const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                 const Observer& observer = {});

// Adam on (theta, omega) with analytic gradients (partial mode, constructed memory).
RunTrace run_adam_partial(const TrainConfig& cfg, const KnowledgeWorld& world,
                          const std::vector<IcSequence>& data, const Observer& observer = {});

// ---- full-mode reverse-mode engine -------------------------------------------
// One supervised prediction: softmax over tokens [group_first, group_first+group_count).
struct Example {
    std::vector<int> tokens;
    int target = 0;
    int group_first = 0;
    int group_count = 0;
    double weight = 1.0;
    // Extra tokens accepted as correct for accuracy (e.g. any r in R(s,a)).
    std::vector<int> also_correct;
};

// Trainable state for full-attention / pretraining runs. The MLP is held in
// token coordinates (see TokenMlp).
struct FullState {
    Matrix kq;     // D x D attention matrix
    TokenMlp mlp;  // key/value rows
};

struct FullGrad {
    Matrix kq;
    Matrix key, value;
    double loss = 0.0;
};

// Weighted sum over the batch of weight * CE(softmax(logits / T), target) and its
// exact gradient. Frozen blocks get zero gradient and are not touched.
FullGrad backprop_full(const EmbeddingBasis& basis, const FullState& state, const std::vector<Example>& batch,
                       double T, bool train_attention, bool train_mlp);
double loss_full(const EmbeddingBasis& basis, const FullState& state, const std::vector<Example>& batch, double T);
// Group logits through the token-space fast path.
std::vector<double> logits_full(const EmbeddingBasis& basis, const FullState& state, const std::vector<int>& tokens,
                                int group_first, int group_count, std::vector<double>* attention = nullptr);
double accuracy_full(const EmbeddingBasis& basis, const FullState& state, const std::vector<Example>& batch);

std::vector<Example> ic_examples(const KnowledgeWorld& world, const std::vector<IcSequence>& data);
std::vector<Example> pretrain_examples(const KnowledgeWorld& world, const std::vector<PretrainSample>& data);

struct PretrainConfig {
    double T = 1.0;
    double lr = 1e-3;
    long long max_epochs = 3000;
    double target_accuracy = 0.99;
    long long check_every = 25;
    int d_mlp = 0;  // 0: 3 n^2
    std::uint64_t seed = 0;
};

struct PretrainResult {
    FullState state;
    long long epochs = 0;
    double accuracy = 0.0;
    double final_loss = 0.0;
};

// Full-batch Adam on every (triplet, held-out element, order) example, with the
// attention matrix and the MLP both trainable, starting from W^KQ = 0.
PretrainResult pretrain(const PretrainConfig& cfg, const KnowledgeWorld& world, const EmbeddingBasis& basis);

struct FullRunResult {
    FullState state;
    double final_loss = 0.0;
    std::vector<double> v_mean, q_mean;  // mean attention over the training set
};

// Adam on the full attention matrix with the MLP frozen (L = L1 + L2).
FullRunResult run_adam_full(const TrainConfig& cfg, const KnowledgeWorld& world, const EmbeddingBasis& basis,
                            FullState init, const std::vector<IcSequence>& data);

}  // namespace icr

#pragma once
// One-layer transformer with a frozen (or pretrained) quadratic MLP, masked
// temperature softmax readout, two-step decoding, and closed-form logits.
//
// Input representation: z_i = [e_i ; phi(u_i)] with the d_p positional
// coordinates first, so the attention parameter block W^KQ[0:L, L-1] is the
// "from the last position" score vector. Partial mode stores only
// theta = W^KQ[0:2k+2, 2k+1] and omega = W^KQ[0:2k+3, 2k+2].

#include <string>
#include <vector>

#include "icr/linalg.hpp"
#include "icr/memory.hpp"
#include "icr/vocab_data.hpp"

namespace icr {

enum class AttnMode { partial, full };

struct AttnParams {
    AttnMode mode = AttnMode::partial;
    int k = 2;
    std::vector<double> theta;  // 2k+2 scores used for the step-1 input
    std::vector<double> omega;  // 2k+3 scores used for the step-2 input
    Matrix full;                // D x D, full mode only

    static AttnParams partial_zero(int k);
    static AttnParams full_zero(int k, int model_dim);

    // The literal W^KQ this parameter set denotes.
    Matrix as_matrix(int model_dim) const;
};

// Everything the forward pass needs; immutable once built.
struct Model {
    KnowledgeWorld world;
    EmbeddingBasis basis;
    MlpParams mlp;
    TokenMlp tok;  // derived from mlp + basis
    int k = 2;

    static Model make(KnowledgeWorld world, EmbeddingBasis basis, MlpParams mlp, int k);
    int model_dim() const { return basis.model_dim(); }
};

// Stacked inputs z_1..z_L as rows (L x D).
Matrix embed_sequence(const Model& model, const std::vector<int>& tokens);

// Attention weights from the last position (literal z_i^T W^KQ z_L scores).
std::vector<double> attention_weights(const Model& model, const AttnParams& attn, const std::vector<int>& tokens);

// Pre-readout output f(Z; W) in embedding coordinates (d entries).
std::vector<double> forward(const Model& model, const AttnParams& attn, const std::vector<int>& tokens);

struct StepLogits {
    int step = 1;                // 1: relation group, 2: answer group
    int first_token = 0;         // token id of values[0]
    std::vector<double> values;  // phi(u)^T f for u in the group
    double T = 1.0;
};

StepLogits step_logits(const Model& model, const AttnParams& attn, const std::vector<int>& tokens, int step,
                       double T);

// Masked softmax at temperature T with max subtraction. Throws InvalidTemperature.
std::vector<double> predict(const StepLogits& logits);
std::vector<double> softmax_t(const std::vector<double>& logits, double T);
// log-sum-exp(l / T) computed stably.
double log_sum_exp_t(const double* logits, std::size_t count, double T);

// Lowest index among the maxima; values within 1e-12 (relative) of the
// maximum count as tied, so roundoff from the embedding basis cannot break a
// tie that is exact in real arithmetic.
int argmax_lowest(const std::vector<double>& values);
// True when more than one value lies in the tie band of the maximum.
bool max_is_tied(const std::vector<double>& values);

struct Decode {
    int relation = -1;        // predicted relation index
    int answer_token = -1;    // predicted answer token id
    bool relation_tie = false;
    bool answer_tie = false;
};

// Step 1 argmax over relations; the predicted (or, when teacher_forced, the true)
// relation token is appended; step 2 argmax over answers.
Decode decode_two_step(const Model& model, const AttnParams& attn, const IcSequence& seq, double T,
                       bool teacher_forced = false);

// Step-2 input: the sequence followed by a relation token.
std::vector<int> with_relation(const KnowledgeWorld& world, const IcSequence& seq, int relation);

// ---- closed forms (constructed memory, any orthonormal basis) -------------
// l(r) = 2 sum_{i<=k+1, j<=k} v_{s_i} v_{a_j} [r(s_i) = a_j] + sum_{pos < 2k+1} v_pos^2
std::vector<double> step1_logits_closed_form(const KnowledgeWorld& world, const IcSequence& seq,
                                             const std::vector<double>& v);
// Step-1 answer logits: all equal sum_i v_{s_i}^2.
std::vector<double> step1_answer_logits_closed_form(const KnowledgeWorld& world, const IcSequence& seq,
                                                    const std::vector<double>& v);
// Step 2 conditioned on relation r (default: teacher-forced r*):
// l(a) = sum_i q_{s_i}^2 + (1+q_L)^2 + 2 (1+q_L) sum_i q_{s_i} [r(s_i) = a]
std::vector<double> step2_logits_closed_form(const KnowledgeWorld& world, const IcSequence& seq,
                                             const std::vector<double>& q, int relation = -1);

}  // namespace icr

#pragma once
// MLP associative memory: the exact 3n^2-row construction, the quadratic MLP
// forward pass, exhaustive verification, and a trainable container.

#include <array>
#include <string>
#include <vector>

#include "icr/linalg.hpp"
#include "icr/rng.hpp"
#include "icr/vocab_data.hpp"

namespace icr {

struct MlpParams {
    int d = 0;
    int d_mlp = 0;
    Matrix W;  // d_mlp x d
    Matrix V;  // d_mlp x d
    bool frozen = false;
    // True when produced by construct_memory; enables the closed-form fast paths.
    bool constructed = false;
};

// Row layout per (s, a) pair, pair index i = s * n + a (1-based rows 3i-2, 3i-1, 3i):
//   w = phi(s) + sum_{r in R(s,a)} phi(r),  v = phi(a)
//   w = phi(a) + phi(s),                     v = sum_{r in R(s,a)} phi(r)
//   w = phi(a) + sum_{r in R(s,a)} phi(r),  v = phi(s)
MlpParams construct_memory(const KnowledgeWorld& world, const EmbeddingBasis& basis);

// Entries i.i.d. N(0, 1/d_mlp).
MlpParams init_trainable_mlp(int d, int d_mlp, Rng& rng);

// out = V^T (W x)^2, x and out have d entries.
void mlp_forward(const MlpParams& mlp, const double* x, double* out);
std::vector<double> mlp_forward(const MlpParams& mlp, const std::vector<double>& x);

// The MLP expressed in token coordinates: key row u = W phi(u), value row
// u = V phi(u). For an input x = sum_u c_u phi(u) the hidden layer is
// (sum_u c_u key_u)^2 and the logit of token u is value_u . hidden.
struct TokenMlp {
    int d = 0;
    int d_mlp = 0;
    Matrix key;    // d x d_mlp
    Matrix value;  // d x d_mlp
};

TokenMlp to_token_space(const MlpParams& mlp, const EmbeddingBasis& basis);
MlpParams from_token_space(const TokenMlp& tok, const EmbeddingBasis& basis);

struct MemoryReport {
    long long total_probes = 0;
    long long failures = 0;
    long long ties = 0;  // probes whose maximum is shared with an unacceptable token
    std::array<long long, 3> failures_by_direction{};  // predict subject / relation / answer
    std::vector<std::string> failure_examples;        // first few, human readable
};

// Exhaustive leave-one-out probe of every triplet with input phi(u1) + phi(u2).
// Argmax is over the whole vocabulary with lowest-id tie-breaking; for the
// "predict relation" direction any r with r(s) = a is accepted.
MemoryReport verify_memory(const MlpParams& mlp, const KnowledgeWorld& world, const EmbeddingBasis& basis);

// phi(u)^T f_MLP(phi(u1) + phi(u2)) for every token u.
std::vector<double> probe_logits(const TokenMlp& tok, int u1, int u2);

}  // namespace icr

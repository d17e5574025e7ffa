#pragma once
// Synthetic knowledge world, embeddings, and IC-recall / pretraining sequence
// generators.
//
// Token-id layout (fixed so logit groups can be masked by range):
//   subjects  0 .. n-1
//   answers   n .. 2n-1
//   relations 2n .. 2n+m-1
//   EoS       2n+m

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icr/linalg.hpp"
#include "icr/rng.hpp"

namespace icr {

enum class WorldMode {
    rejection,      // random permutations, rejecting any that break identifiability
    affine,         // x -> a*x + b over GF(n); maximal identifiable world (n prime power)
    unconstrained,  // independent random permutations, identifiability not enforced
};

std::string to_string(WorldMode mode);
WorldMode world_mode_from_string(const std::string& s);

struct KnowledgeWorld {
    int n = 0;
    int m = 0;
    std::uint64_t seed = 0;
    WorldMode mode = WorldMode::rejection;
    // m x n row-major; table[r * n + s] is the answer index r(s) in [0, n).
    std::vector<int> table;

    int answer(int r, int s) const { return table[static_cast<std::size_t>(r) * n + s]; }

    int vocab_size() const { return 2 * n + m + 1; }
    int subject_token(int s) const { return s; }
    int answer_token(int a) const { return n + a; }
    int relation_token(int r) const { return 2 * n + r; }
    int eos() const { return 2 * n + m; }

    bool is_subject(int t) const { return t >= 0 && t < n; }
    bool is_answer(int t) const { return t >= n && t < 2 * n; }
    bool is_relation(int t) const { return t >= 2 * n && t < 2 * n + m; }
};

// Upper bound on m for an identifiable world: for a fixed subject pair every
// relation claims a distinct ordered answer pair, so m <= n(n-1).
long long identifiable_capacity(int n);

// Rejection mode: draws random permutations and rejects any that agree with an
// accepted relation on two subjects. max_retries bounds the total number of
// rejected draws. Throws InvalidArgs (n < 3, m < 1, affine with non prime-power
// n) and CapacityExceeded (m above capacity or retry budget exhausted).
KnowledgeWorld build_world(int n, int m, std::uint64_t seed, long long max_retries = 1'000'000,
                           WorldMode mode = WorldMode::rejection);

// Exhaustive check that no two relations agree on two distinct subjects.
bool check_identifiability(const KnowledgeWorld& world);

// True iff every row of the table is a permutation of 0..n-1.
bool rows_are_permutations(const KnowledgeWorld& world);

enum class EmbeddingMode { one_hot, random_orthonormal };
std::string to_string(EmbeddingMode mode);
EmbeddingMode embedding_mode_from_string(const std::string& s);

struct EmbeddingBasis {
    int d = 0;    // token embedding dimension = vocabulary size
    int d_p = 0;  // maximum sequence length (one-hot positional block)
    EmbeddingMode mode = EmbeddingMode::one_hot;
    Matrix phi;   // d x d; row u is the embedding phi(u)

    const double* embedding(int u) const { return phi.row(static_cast<std::size_t>(u)); }
    int model_dim() const { return d + d_p; }
};

// d_p defaults to 2k+3 (context, query, EoS and the appended relation token).
EmbeddingBasis make_basis(const KnowledgeWorld& world, int k, EmbeddingMode mode,
                          std::uint64_t seed);

struct SequenceFlags {
    bool confusing = false;
    bool mismatched = false;
    int two_matching_count = 0;  // I(Z)
};

struct IcSequence {
    int k = 2;
    std::vector<int> tokens;  // s1, a1, ..., sk, ak, s_{k+1}, EoS
    int relation = 0;         // hidden relation index r*
    int target_answer = 0;    // answer token id r*(s_{k+1})
    bool has_flags = false;   // flags are only defined for k = 2
    SequenceFlags flags;

    int subject(int i) const { return tokens[2 * i]; }  // i in [0, k]
    int answer(int j) const { return tokens[2 * j + 1]; }  // j in [0, k)
};

IcSequence make_ic_sequence(const KnowledgeWorld& world, int relation,
                            const std::vector<int>& subjects);
IcSequence sample_ic_sequence(const KnowledgeWorld& world, int k, Rng& rng);
// Every sequence: relation-major, then ordered distinct subject tuples.
std::vector<IcSequence> enumerate_ic_sequences(const KnowledgeWorld& world, int k);
// Same order as enumerate_ic_sequences without materializing the list.
void for_each_ic_sequence(const KnowledgeWorld& world, int k, const std::function<void(const IcSequence&)>& fn);
long long ic_sequence_count(const KnowledgeWorld& world, int k);

// Throws Unsupported for k != 2.
SequenceFlags classify_sequence(const KnowledgeWorld& world, const IcSequence& seq);

struct DatasetStats {
    double p_conf = 0.0;
    double p_mis = 0.0;
    std::size_t sample_count = 0;
};
DatasetStats dataset_stats(const std::vector<IcSequence>& data);

std::vector<IcSequence> sample_dataset(const KnowledgeWorld& world, int k, std::size_t count,
                                       Rng& rng);

struct PretrainSample {
    std::array<int, 2> input{};  // two distinct elements of one triplet
    int target = 0;              // the remaining element
    int subject = 0, relation = 0, answer = 0;  // triplet indices (not token ids)
    int dropped = 0;             // 0 subject, 1 relation, 2 answer
};

// Uniform (s, r), uniform held-out element, uniform order of the two inputs.
PretrainSample sample_pretrain_sequence(const KnowledgeWorld& world, Rng& rng);
// All triplet x held-out x order combinations (6 n m samples).
std::vector<PretrainSample> enumerate_pretrain_set(const KnowledgeWorld& world);

}  // namespace icr

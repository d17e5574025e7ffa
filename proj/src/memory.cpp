#include "icr/memory.hpp"

#include <cmath>

#include "icr/error.hpp"
#include "icr/kernels.hpp"

namespace icr {

MlpParams construct_memory(const KnowledgeWorld& world, const EmbeddingBasis& basis) {
    if (basis.d != world.vocab_size()) throw InvalidArgs("basis does not cover the world's vocabulary");
    const int n = world.n;
    const auto d = static_cast<std::size_t>(basis.d);
    MlpParams mlp;
    mlp.d = basis.d;
    mlp.d_mlp = 3 * n * n;
    mlp.W = Matrix(static_cast<std::size_t>(mlp.d_mlp), d);
    mlp.V = Matrix(static_cast<std::size_t>(mlp.d_mlp), d);
    mlp.frozen = true;
    mlp.constructed = true;
    const auto& K = kernels::active();
    std::vector<double> rel_sum(d);
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < n; ++a) {
            std::fill(rel_sum.begin(), rel_sum.end(), 0.0);
            for (int r = 0; r < world.m; ++r)
                if (world.answer(r, s) == a) K.axpy(1.0, basis.embedding(world.relation_token(r)), rel_sum.data(), d);
            const double* ps = basis.embedding(world.subject_token(s));
            const double* pa = basis.embedding(world.answer_token(a));
            const auto row = static_cast<std::size_t>(3 * (s * n + a));
            double* w0 = mlp.W.row(row);
            double* w1 = mlp.W.row(row + 1);
            double* w2 = mlp.W.row(row + 2);
            for (std::size_t j = 0; j < d; ++j) {
                w0[j] = ps[j] + rel_sum[j];
                w1[j] = pa[j] + ps[j];
                w2[j] = pa[j] + rel_sum[j];
            }
            std::copy(pa, pa + d, mlp.V.row(row));
            std::copy(rel_sum.begin(), rel_sum.end(), mlp.V.row(row + 1));
            std::copy(ps, ps + d, mlp.V.row(row + 2));
        }
    }
    return mlp;
}

MlpParams init_trainable_mlp(int d, int d_mlp, Rng& rng) {
    if (d <= 0 || d_mlp <= 0) throw InvalidArgs("MLP dimensions must be positive");
    MlpParams mlp;
    mlp.d = d;
    mlp.d_mlp = d_mlp;
    mlp.W = Matrix(static_cast<std::size_t>(d_mlp), static_cast<std::size_t>(d));
    mlp.V = Matrix(static_cast<std::size_t>(d_mlp), static_cast<std::size_t>(d));
    const double sd = 1.0 / std::sqrt(static_cast<double>(d_mlp));
    for (auto& x : mlp.W.data) x = sd * rng.normal();
    for (auto& x : mlp.V.data) x = sd * rng.normal();
    return mlp;
}

void mlp_forward(const MlpParams& mlp, const double* x, double* out) {
    const auto& K = kernels::active();
    const auto dm = static_cast<std::size_t>(mlp.d_mlp);
    const auto d = static_cast<std::size_t>(mlp.d);
    std::vector<double> hidden(dm);
    K.gemv(mlp.W.data.data(), dm, d, x, hidden.data());
    K.square(hidden.data(), hidden.data(), dm);
    K.gemv_t(mlp.V.data.data(), dm, d, hidden.data(), out);
}

std::vector<double> mlp_forward(const MlpParams& mlp, const std::vector<double>& x) {
    if (x.size() != static_cast<std::size_t>(mlp.d)) throw InvalidArgs("MLP input has the wrong dimension");
    std::vector<double> out(static_cast<std::size_t>(mlp.d));
    mlp_forward(mlp, x.data(), out.data());
    return out;
}

TokenMlp to_token_space(const MlpParams& mlp, const EmbeddingBasis& basis) {
    if (basis.d != mlp.d) throw InvalidArgs("basis and MLP dimensions differ");
    const auto& K = kernels::active();
    const auto d = static_cast<std::size_t>(mlp.d);
    const auto dm = static_cast<std::size_t>(mlp.d_mlp);
    TokenMlp t;
    t.d = mlp.d;
    t.d_mlp = mlp.d_mlp;
    t.key = Matrix(d, dm);
    t.value = Matrix(d, dm);
    for (std::size_t u = 0; u < d; ++u) {
        K.gemv(mlp.W.data.data(), dm, d, basis.embedding(static_cast<int>(u)), t.key.row(u));
        K.gemv(mlp.V.data.data(), dm, d, basis.embedding(static_cast<int>(u)), t.value.row(u));
    }
    return t;
}

MlpParams from_token_space(const TokenMlp& tok, const EmbeddingBasis& basis) {
    // W = sum_u key_u phi(u)^T, since the basis is orthonormal.
    const auto d = static_cast<std::size_t>(tok.d);
    const auto dm = static_cast<std::size_t>(tok.d_mlp);
    MlpParams mlp;
    mlp.d = tok.d;
    mlp.d_mlp = tok.d_mlp;
    mlp.W = Matrix(dm, d);
    mlp.V = Matrix(dm, d);
    const auto& K = kernels::active();
    for (std::size_t u = 0; u < d; ++u) {
        K.rank1(mlp.W.data.data(), dm, d, 1.0, tok.key.row(u), basis.embedding(static_cast<int>(u)));
        K.rank1(mlp.V.data.data(), dm, d, 1.0, tok.value.row(u), basis.embedding(static_cast<int>(u)));
    }
    return mlp;
}

std::vector<double> probe_logits(const TokenMlp& tok, int u1, int u2) {
    const auto& K = kernels::active();
    const auto dm = static_cast<std::size_t>(tok.d_mlp);
    std::vector<double> hidden(tok.key.row(static_cast<std::size_t>(u1)),
                               tok.key.row(static_cast<std::size_t>(u1)) + dm);
    K.axpy(1.0, tok.key.row(static_cast<std::size_t>(u2)), hidden.data(), dm);
    K.square(hidden.data(), hidden.data(), dm);
    std::vector<double> logits(static_cast<std::size_t>(tok.d));
    K.gemv(tok.value.data.data(), static_cast<std::size_t>(tok.d), dm, hidden.data(), logits.data());
    return logits;
}

MemoryReport verify_memory(const MlpParams& mlp, const KnowledgeWorld& world, const EmbeddingBasis& basis) {
    const TokenMlp tok = to_token_space(mlp, basis);
    MemoryReport rep;
    static const char* names[3] = {"subject", "relation", "answer"};
    for (int r = 0; r < world.m; ++r) {
        for (int s = 0; s < world.n; ++s) {
            const int a = world.answer(r, s);
            const int ts = world.subject_token(s), tr = world.relation_token(r), ta = world.answer_token(a);
            const std::array<std::array<int, 3>, 3> probes{{{tr, ta, ts}, {ts, ta, tr}, {ts, tr, ta}}};
            for (int dir = 0; dir < 3; ++dir) {
                const auto& p = probes[static_cast<std::size_t>(dir)];
                const auto logits = probe_logits(tok, p[0], p[1]);
                auto acceptable = [&](int u) {
                    if (dir == 1) return world.is_relation(u) && world.answer(u - 2 * world.n, s) == a;
                    return u == p[2];
                };
                int best = 0;
                for (int u = 1; u < tok.d; ++u)
                    if (logits[static_cast<std::size_t>(u)] > logits[static_cast<std::size_t>(best)]) best = u;
                bool tie_with_wrong = false;
                for (int u = 0; u < tok.d; ++u)
                    if (logits[static_cast<std::size_t>(u)] == logits[static_cast<std::size_t>(best)] && !acceptable(u))
                        tie_with_wrong = true;
                ++rep.total_probes;
                if (!acceptable(best)) {
                    ++rep.failures;
                    ++rep.failures_by_direction[static_cast<std::size_t>(dir)];
                    if (rep.failure_examples.size() < 8)
                        rep.failure_examples.push_back("predict " + std::string(names[dir]) + " of (s=" +
                                                       std::to_string(s) + ", r=" + std::to_string(r) +
                                                       ", a=" + std::to_string(a) + "): got token " +
                                                       std::to_string(best));
                }
                if (tie_with_wrong) ++rep.ties;
            }
        }
    }
    return rep;
}

}  // namespace icr

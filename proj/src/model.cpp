#include "icr/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icr/error.hpp"
#include "icr/kernels.hpp"

namespace icr {

AttnParams AttnParams::partial_zero(int k) {
    AttnParams a;
    a.mode = AttnMode::partial;
    a.k = k;
    a.theta.assign(static_cast<std::size_t>(2 * k + 2), 0.0);
    a.omega.assign(static_cast<std::size_t>(2 * k + 3), 0.0);
    return a;
}

AttnParams AttnParams::full_zero(int k, int model_dim) {
    AttnParams a;
    a.mode = AttnMode::full;
    a.k = k;
    a.full = Matrix(static_cast<std::size_t>(model_dim), static_cast<std::size_t>(model_dim));
    return a;
}

Matrix AttnParams::as_matrix(int model_dim) const {
    if (mode == AttnMode::full) return full;
    Matrix m(static_cast<std::size_t>(model_dim), static_cast<std::size_t>(model_dim));
    const auto c1 = static_cast<std::size_t>(2 * k + 1);
    const auto c2 = static_cast<std::size_t>(2 * k + 2);
    for (std::size_t i = 0; i < theta.size(); ++i) m(i, c1) = theta[i];
    for (std::size_t i = 0; i < omega.size(); ++i) m(i, c2) = omega[i];
    return m;
}

Model Model::make(KnowledgeWorld world, EmbeddingBasis basis, MlpParams mlp, int k) {
    if (basis.d != world.vocab_size() || mlp.d != basis.d)
        throw InvalidArgs("world, basis and MLP dimensions disagree");
    Model m;
    m.tok = to_token_space(mlp, basis);
    m.world = std::move(world);
    m.basis = std::move(basis);
    m.mlp = std::move(mlp);
    m.k = k;
    return m;
}

Matrix embed_sequence(const Model& model, const std::vector<int>& tokens) {
    const int L = static_cast<int>(tokens.size());
    if (L == 0) throw InvalidArgs("empty token sequence");
    if (L > model.basis.d_p)
        throw LengthExceeded("sequence length " + std::to_string(L) + " exceeds d_P = " +
                             std::to_string(model.basis.d_p));
    const auto D = static_cast<std::size_t>(model.model_dim());
    const auto dp = static_cast<std::size_t>(model.basis.d_p);
    Matrix Z(static_cast<std::size_t>(L), D);
    for (int i = 0; i < L; ++i) {
        const int u = tokens[static_cast<std::size_t>(i)];
        if (u < 0 || u >= model.basis.d) throw InvalidArgs("token id out of range");
        double* z = Z.row(static_cast<std::size_t>(i));
        z[i] = 1.0;
        std::copy(model.basis.embedding(u), model.basis.embedding(u) + model.basis.d, z + dp);
    }
    return Z;
}

namespace {

std::vector<double> softmax_plain(const std::vector<double>& s) {
    const double mx = *std::max_element(s.begin(), s.end());
    std::vector<double> p(s.size());
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) total += (p[i] = std::exp(s[i] - mx));
    for (auto& x : p) x /= total;
    return p;
}

}  // namespace

std::vector<double> attention_weights(const Model& model, const AttnParams& attn, const std::vector<int>& tokens) {
    const Matrix Z = embed_sequence(model, tokens);
    const Matrix M = attn.as_matrix(model.model_dim());
    const auto& K = kernels::active();
    const std::size_t D = Z.cols, L = Z.rows;
    std::vector<double> mz(D);
    K.gemv(M.data.data(), D, D, Z.row(L - 1), mz.data());
    std::vector<double> scores(L);
    for (std::size_t i = 0; i < L; ++i) scores[i] = K.dot(Z.row(i), mz.data(), D);
    return softmax_plain(scores);
}

std::vector<double> forward(const Model& model, const AttnParams& attn, const std::vector<int>& tokens) {
    const Matrix Z = embed_sequence(model, tokens);
    const auto alpha = attention_weights(model, attn, tokens);
    const auto& K = kernels::active();
    const std::size_t D = Z.cols, L = Z.rows;
    // y = z_L + Z alpha; W^P keeps the token coordinates.
    std::vector<double> y(Z.row(L - 1), Z.row(L - 1) + D);
    for (std::size_t i = 0; i < L; ++i) K.axpy(alpha[i], Z.row(i), y.data(), D);
    const auto dp = static_cast<std::size_t>(model.basis.d_p);
    std::vector<double> h(y.begin() + static_cast<std::ptrdiff_t>(dp), y.end());
    return mlp_forward(model.mlp, h);
}

StepLogits step_logits(const Model& model, const AttnParams& attn, const std::vector<int>& tokens, int step,
                       double T) {
    const auto f = forward(model, attn, tokens);
    const auto& w = model.world;
    StepLogits out;
    out.step = step;
    out.T = T;
    int count = 0;
    if (step == 1) {
        out.first_token = w.relation_token(0);
        count = w.m;
    } else if (step == 2) {
        out.first_token = w.answer_token(0);
        count = w.n;
    } else {
        throw InvalidArgs("decoding step must be 1 or 2");
    }
    const auto& K = kernels::active();
    out.values.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        out.values[static_cast<std::size_t>(i)] =
            K.dot(model.basis.embedding(out.first_token + i), f.data(), static_cast<std::size_t>(model.basis.d));
    return out;
}

std::vector<double> softmax_t(const std::vector<double>& logits, double T) {
    if (!(T > 0.0)) throw InvalidTemperature("temperature must be positive, got " + std::to_string(T));
    if (logits.empty()) return {};
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) total += (p[i] = std::exp((logits[i] - mx) / T));
    for (auto& x : p) x /= total;
    return p;
}

double log_sum_exp_t(const double* logits, std::size_t count, double T) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < count; ++i) mx = std::max(mx, logits[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) total += std::exp((logits[i] - mx) / T);
    return mx / T + std::log(total);
}

std::vector<double> predict(const StepLogits& logits) { return softmax_t(logits.values, logits.T); }

namespace {

// Logits equal in exact arithmetic can differ by roundoff depending on the
// embedding basis; values within this relative band of the maximum tie.
double tie_band(double max_value) { return 1e-12 * std::max(1.0, std::abs(max_value)); }

}  // namespace

int argmax_lowest(const std::vector<double>& values) {
    if (values.empty()) throw InvalidArgs("argmax of an empty vector");
    const double mx = *std::max_element(values.begin(), values.end());
    const double band = tie_band(mx);
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i] >= mx - band) return static_cast<int>(i);
    return 0;
}

bool max_is_tied(const std::vector<double>& values) {
    const double mx = *std::max_element(values.begin(), values.end());
    const double band = tie_band(mx);
    int count = 0;
    for (double x : values) count += (std::abs(x - mx) <= band) ? 1 : 0;
    return count > 1;
}

std::vector<int> with_relation(const KnowledgeWorld& world, const IcSequence& seq, int relation) {
    std::vector<int> t = seq.tokens;
    t.push_back(world.relation_token(relation));
    return t;
}

Decode decode_two_step(const Model& model, const AttnParams& attn, const IcSequence& seq, double T,
                       bool teacher_forced) {
    Decode d;
    const auto l1 = step_logits(model, attn, seq.tokens, 1, T);
    d.relation = argmax_lowest(l1.values);
    d.relation_tie = max_is_tied(l1.values);
    const int cond = teacher_forced ? seq.relation : d.relation;
    const auto l2 = step_logits(model, attn, with_relation(model.world, seq, cond), 2, T);
    const int a = argmax_lowest(l2.values);
    d.answer_tie = max_is_tied(l2.values);
    d.answer_token = l2.first_token + a;
    return d;
}

std::vector<double> step1_logits_closed_form(const KnowledgeWorld& world, const IcSequence& seq,
                                             const std::vector<double>& v) {
    const int k = seq.k;
    if (v.size() != static_cast<std::size_t>(2 * k + 2)) throw InvalidArgs("v must have 2k+2 entries");
    double base = 0.0;
    for (int p = 0; p < 2 * k + 1; ++p) base += v[static_cast<std::size_t>(p)] * v[static_cast<std::size_t>(p)];
    std::vector<double> out(static_cast<std::size_t>(world.m));
    for (int r = 0; r < world.m; ++r) {
        double cross = 0.0;
        for (int i = 0; i <= k; ++i) {
            const int img = world.answer_token(world.answer(r, seq.subject(i)));
            for (int j = 0; j < k; ++j)
                if (img == seq.answer(j)) cross += v[static_cast<std::size_t>(2 * i)] * v[static_cast<std::size_t>(2 * j + 1)];
        }
        out[static_cast<std::size_t>(r)] = 2.0 * cross + base;
    }
    return out;
}

std::vector<double> step1_answer_logits_closed_form(const KnowledgeWorld& world, const IcSequence& seq,
                                                    const std::vector<double>& v) {
    double s = 0.0;
    for (int i = 0; i <= seq.k; ++i) s += v[static_cast<std::size_t>(2 * i)] * v[static_cast<std::size_t>(2 * i)];
    return std::vector<double>(static_cast<std::size_t>(world.n), s);
}

std::vector<double> step2_logits_closed_form(const KnowledgeWorld& world, const IcSequence& seq,
                                             const std::vector<double>& q, int relation) {
    if (relation < 0) relation = seq.relation;
    const int k = seq.k;
    if (q.size() != static_cast<std::size_t>(2 * k + 3)) throw InvalidArgs("q must have 2k+3 entries");
    const double qL = 1.0 + q.back();
    double base = qL * qL;
    for (int i = 0; i <= k; ++i) base += q[static_cast<std::size_t>(2 * i)] * q[static_cast<std::size_t>(2 * i)];
    std::vector<double> out(static_cast<std::size_t>(world.n), base);
    for (int i = 0; i <= k; ++i) {
        const int a = world.answer(relation, seq.subject(i));
        out[static_cast<std::size_t>(a)] += 2.0 * qL * q[static_cast<std::size_t>(2 * i)];
    }
    return out;
}

}  // namespace icr

#include "icr/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "icr/error.hpp"

namespace icr {

std::optional<double> pairing_metric(const std::vector<double>& v) {
    if (v.size() < 4) throw InvalidArgs("pairing metric needs at least four attention weights");
    for (int i = 0; i < 4; ++i)
        if (v[static_cast<std::size_t>(i)] < 1e-12) return std::nullopt;
    const double a = v[0] / v[1], b = v[2] / v[3];
    return std::max({a, b, 1.0 / a, 1.0 / b});
}

double logit_gap(const std::vector<double>& v) { return 2.0 * (v[0] - v[2]) * (v[1] - v[3]); }

double distance_to_saddle(const std::vector<double>& v) {
    double worst = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(v[i] - (i < 4 ? 0.25 : 0.0)));
    return worst;
}

Diagnostics diagnose(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                     const std::vector<double>& theta, const std::vector<double>& omega, double T) {
    Diagnostics dg;
    dg.v = softmax_t(theta, 1.0);
    dg.q = softmax_t(omega, 1.0);
    dg.psi = pairing_metric(dg.v);
    dg.g = logit_gap(dg.v);
    dg.distance_to_saddle = distance_to_saddle(dg.v);
    dg.loss = loss_closed_form(world, data, theta, omega, T);
    long long c1 = 0, c2 = 0;
    for (const auto& seq : data) {
        c1 += argmax_lowest(step1_logits_closed_form(world, seq, dg.v)) == seq.relation;
        c2 += argmax_lowest(step2_logits_closed_form(world, seq, dg.q)) + world.n == seq.target_answer;
    }
    dg.acc1 = static_cast<double>(c1) / static_cast<double>(data.size());
    dg.acc2 = static_cast<double>(c2) / static_cast<double>(data.size());
    return dg;
}

// ---- evaluation ----------------------------------------------------------------------

namespace {

// Per-sequence decoding results fed to the accumulator.
struct SeqOutcome {
    int rel_pred = 0;
    bool rel_tie = false;
    int ans_forced = 0;  // answer index, teacher forced
    bool ans_tie = false;
    int ans_free = 0;    // answer index, conditioned on rel_pred
};

class Accumulator {
public:
    explicit Accumulator(const KnowledgeWorld& w) : world_(w) {}

    void add(const IcSequence& seq, const SeqOutcome& o) {
        ++rep_.evaluated;
        const bool ok1 = o.rel_pred == seq.relation;
        const int target = seq.target_answer - world_.n;
        c1_ += ok1;
        c2_ += o.ans_forced == target;
        ce_ += o.ans_free == target;
        bool consistent = true;
        for (int i = 0; i <= seq.k; ++i)
            consistent = consistent && world_.answer(o.rel_pred, seq.subject(i)) == world_.answer(seq.relation, seq.subject(i));
        cc_ += consistent;
        rep_.ties1 += o.rel_tie;
        rep_.ties2 += o.ans_tie;
        if (seq.has_flags) {
            if (seq.flags.confusing) bump(rep_.confusing, ok1);
            if (seq.flags.mismatched) bump(rep_.mismatched, ok1);
            if (!seq.flags.confusing && !seq.flags.mismatched) bump(rep_.other, ok1);
        }
    }

    EvalReport finish(bool exhaustive) {
        rep_.exhaustive = exhaustive;
        const double n = static_cast<double>(std::max<long long>(rep_.evaluated, 1));
        rep_.acc1 = static_cast<double>(c1_) / n;
        rep_.acc2 = static_cast<double>(c2_) / n;
        rep_.acc_end_to_end = static_cast<double>(ce_) / n;
        rep_.acc1_consistent = static_cast<double>(cc_) / n;
        return rep_;
    }

private:
    static void bump(ClassAccuracy& c, bool ok) {
        ++c.count;
        c.correct1 += ok;
    }
    const KnowledgeWorld& world_;
    EvalReport rep_;
    long long c1_ = 0, c2_ = 0, ce_ = 0, cc_ = 0;
};

template <class Fn>
EvalReport run_scope(const KnowledgeWorld& world, int k, const EvalScope& scope, Fn&& outcome) {
    Accumulator acc(world);
    const bool exhaustive = scope.exhaustive && ic_sequence_count(world, k) <= kExhaustiveCutoff;
    if (exhaustive) {
        for_each_ic_sequence(world, k, [&](const IcSequence& s) { acc.add(s, outcome(s)); });
    } else {
        const std::size_t n = scope.samples > 0 ? scope.samples : 100000;
        Rng rng = Rng::derive(scope.seed, stream::eval);
        for (std::size_t i = 0; i < n; ++i) {
            const IcSequence s = sample_ic_sequence(world, k, rng);
            acc.add(s, outcome(s));
        }
    }
    return acc.finish(exhaustive);
}

}  // namespace

EvalReport evaluate_closed_form(const KnowledgeWorld& world, const std::vector<double>& theta,
                                const std::vector<double>& omega, double T, const EvalScope& scope) {
    if (!(T > 0.0)) throw InvalidTemperature("temperature must be positive");
    const int k = static_cast<int>(theta.size()) / 2 - 1;
    const auto v = softmax_t(theta, 1.0);
    const auto q = softmax_t(omega, 1.0);
    return run_scope(world, k, scope, [&](const IcSequence& s) {
        SeqOutcome o;
        const auto l1 = step1_logits_closed_form(world, s, v);
        o.rel_pred = argmax_lowest(l1);
        o.rel_tie = max_is_tied(l1);
        const auto l2 = step2_logits_closed_form(world, s, q);
        o.ans_forced = argmax_lowest(l2);
        o.ans_tie = max_is_tied(l2);
        o.ans_free = o.rel_pred == s.relation ? o.ans_forced
                                              : argmax_lowest(step2_logits_closed_form(world, s, q, o.rel_pred));
        return o;
    });
}

EvalReport evaluate_full(const KnowledgeWorld& world, const EmbeddingBasis& basis, const FullState& state, double T,
                         const EvalScope& scope) {
    if (!(T > 0.0)) throw InvalidTemperature("temperature must be positive");
    const int k = (basis.d_p - 3) / 2;
    return run_scope(world, k, scope, [&](const IcSequence& s) {
        SeqOutcome o;
        const auto l1 = logits_full(basis, state, s.tokens, world.relation_token(0), world.m);
        o.rel_pred = argmax_lowest(l1);
        o.rel_tie = max_is_tied(l1);
        const auto l2 = logits_full(basis, state, with_relation(world, s, s.relation), world.answer_token(0), world.n);
        o.ans_forced = argmax_lowest(l2);
        o.ans_tie = max_is_tied(l2);
        o.ans_free = o.rel_pred == s.relation
                         ? o.ans_forced
                         : argmax_lowest(logits_full(basis, state, with_relation(world, s, o.rel_pred),
                                                     world.answer_token(0), world.n));
        return o;
    });
}

EvalReport evaluate(const Model& model, const AttnParams& attn, double T, const EvalScope& scope) {
    if (attn.mode == AttnMode::partial && model.mlp.constructed)
        return evaluate_closed_form(model.world, attn.theta, attn.omega, T, scope);
    FullState st{attn.as_matrix(model.model_dim()), model.tok};
    return evaluate_full(model.world, model.basis, st, T, scope);
}

// ---- curvature -----------------------------------------------------------------------

double second_directional_derivative(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, const std::vector<double>& dir, double h) {
    auto along = [&](double t) {
        std::vector<double> y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += t * dir[i];
        return f(y);
    };
    const double f0 = along(0.0);
    auto d2 = [&](double s) { return (along(s) - 2.0 * f0 + along(-s)) / (s * s); };
    const double coarse = d2(h), fine = d2(h / 2.0);
    return (4.0 * fine - coarse) / 3.0;
}

double hessian_probe(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                     const std::vector<double>& theta, double T, std::vector<double> dir, double h) {
    if (dir.empty()) {
        dir.assign(theta.size(), 0.0);
        dir[0] = dir[1] = 0.5;
        dir[2] = dir[3] = -0.5;
    }
    const CompiledDataset cd = compile_dataset(world, data);
    auto f = [&](const std::vector<double>& th) { return compiled_step1(cd, softmax_t(th, 1.0), T, nullptr); };
    return second_directional_derivative(f, theta, dir, h);
}

FirstStepPrediction first_gd_step_prediction(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                             double T, double eta1) {
    const int k = data.front().k;
    const std::size_t P = static_cast<std::size_t>(2 * k + 2);
    const std::vector<double> theta0(P, 0.0);
    const auto v0 = softmax_t(theta0, 1.0);
    const auto g = grad_theta_analytic(world, data, theta0, T);
    FirstStepPrediction out;
    // J = Diag(v0) - v0 v0^T
    double vg = 0.0;
    for (std::size_t i = 0; i < P; ++i) vg += v0[i] * g[i];
    out.v_linear.resize(P);
    for (std::size_t i = 0; i < P; ++i) out.v_linear[i] = v0[i] - eta1 * v0[i] * (g[i] - vg);
    std::vector<double> theta1(P);
    for (std::size_t i = 0; i < P; ++i) theta1[i] = -eta1 * g[i];
    out.v_actual = softmax_t(theta1, 1.0);
    const double base = 1.0 / static_cast<double>(P);
    out.alpha = 0.5 * (out.v_linear[0] + out.v_linear[2]) - base;
    out.v_pattern.assign(P, base);
    if (k == 2) {
        out.v_pattern[0] += out.alpha;
        out.v_pattern[2] += out.alpha;
        out.v_pattern[4] -= 2.0 * out.alpha;
    }
    out.p_mis = dataset_stats(data).p_mis;
    out.c = out.p_mis > 0.0 ? out.alpha * T / (out.p_mis * eta1) : std::numeric_limits<double>::quiet_NaN();
    out.envelope = eta1 * eta1 / (T * T);
    return out;
}

// ---- heatmap export ------------------------------------------------------------------

std::string heatmap_csv(const std::vector<double>& v, const std::vector<double>& q) {
    std::ostringstream os;
    os.precision(17);
    const std::size_t cols = std::max(v.size(), q.size());
    os << "row";
    for (std::size_t i = 0; i < cols; ++i) os << ",p" << (i + 1);
    os << "\n";
    auto emit = [&](const char* name, const std::vector<double>& x) {
        os << name;
        for (std::size_t i = 0; i < cols; ++i) {
            os << ",";
            if (i < x.size()) os << x[i];
        }
        os << "\n";
    };
    emit("v", v);
    emit("q", q);
    return os.str();
}

namespace {

// Sequential colormap (viridis control points), value clamped to [0, 1].
std::string color_for(double x) {
    static const double stops[5][3] = {
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    x = std::clamp(x, 0.0, 1.0) * 4.0;
    const int i = std::min(3, static_cast<int>(x));
    const double t = x - i;
    char buf[8];
    int rgb[3];
    for (int c = 0; c < 3; ++c) rgb[c] = static_cast<int>(std::lround(stops[i][c] + t * (stops[i + 1][c] - stops[i][c])));
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

}  // namespace

std::string heatmap_svg(const std::vector<double>& v, const std::vector<double>& q, const std::string& title) {
    const std::size_t cols = std::max(v.size(), q.size());
    const int cell = 64, left = 40, top = 40;
    const int width = left + static_cast<int>(cols) * cell + 20;
    const int height = top + 2 * cell + 40;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
    auto row = [&](int r, const char* name, const std::vector<double>& x) {
        const int y = top + r * cell;
        os << "<text x=\"8\" y=\"" << y + cell / 2 + 4 << "\">" << name << "</text>\n";
        for (std::size_t i = 0; i < x.size(); ++i) {
            const int xx = left + static_cast<int>(i) * cell;
            os << "<rect x=\"" << xx << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
               << "\" fill=\"" << color_for(x[i]) << "\" stroke=\"white\"/>\n";
            char label[32];
            std::snprintf(label, sizeof label, "%.3f", x[i]);
            os << "<text x=\"" << xx + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
               << (x[i] > 0.5 ? "black" : "white") << "\">" << label << "</text>\n";
        }
    };
    row(0, "v", v);
    row(1, "q", q);
    for (std::size_t i = 0; i < cols; ++i)
        os << "<text x=\"" << left + static_cast<int>(i) * cell + cell / 2 << "\" y=\"" << top + 2 * cell + 16
           << "\" text-anchor=\"middle\">" << (i + 1) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

void export_attention_heatmap(const std::vector<double>& v, const std::vector<double>& q, const std::string& prefix,
                              const std::string& title) {
    auto write = [](const std::string& path, const std::string& body) {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write " + path);
        f << body;
        if (!f) throw IoError("failed writing " + path);
    };
    write(prefix + ".csv", heatmap_csv(v, q));
    write(prefix + ".svg", heatmap_svg(v, q, title));
}

}  // namespace icr

#include "icr/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "icr/analysis.hpp"
#include "icr/error.hpp"
#include "icr/kernels.hpp"

namespace icr {

std::string to_string(Optimizer o) { return o == Optimizer::gd ? "gd" : "adam"; }

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "gd") return Optimizer::gd;
    if (s == "adam") return Optimizer::adam;
    throw InvalidConfig("unknown optimizer '" + s + "'");
}

std::string to_string(Trainable t) {
    switch (t) {
        case Trainable::partial: return "partial";
        case Trainable::full: return "full";
        case Trainable::pretrain: return "pretrain";
    }
    return "?";
}

Trainable trainable_from_string(const std::string& s) {
    if (s == "partial") return Trainable::partial;
    if (s == "full") return Trainable::full;
    if (s == "pretrain") return Trainable::pretrain;
    throw InvalidConfig("unknown trainable set '" + s + "'");
}

TrainConfig resolve_schedule(TrainConfig cfg) {
    if (!(cfg.T > 0.0)) throw InvalidConfig("temperature T must be positive");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw InvalidConfig("delta must lie in (0, 1)");
    const double log_inv_t = std::log(1.0 / cfg.T);
    if (cfg.eta1 <= 0.0) cfg.eta1 = cfg.c_eta1 * cfg.T * std::sqrt(cfg.T) * log_inv_t;
    if (cfg.eta2 <= 0.0) cfg.eta2 = cfg.c_eta2 * cfg.T * cfg.T;
    if (cfg.t2 <= 0) cfg.t2 = static_cast<long long>(std::ceil(cfg.c_t2 / cfg.T * log_inv_t));
    if (cfg.xi_radius < 0.0) {
        const double l = std::log(1.0 / cfg.delta);
        cfg.xi_radius = cfg.c_xi * cfg.T * cfg.T * cfg.T / (l * l);
    }
    if (!(cfg.eta1 > 0.0) || !(cfg.eta2 > 0.0))
        throw InvalidConfig("step sizes must be positive (T < 1 is required for the default schedule)");
    if (cfg.t1 < 0) throw InvalidConfig("t1 must be non-negative");
    if (cfg.adam_lr <= 0.0) throw InvalidConfig("adam_lr must be positive");
    return cfg;
}

namespace {

std::vector<double> softmax_vec(const std::vector<double>& x) { return softmax_t(x, 1.0); }

double log_sum_exp(const std::vector<double>& l, double T) { return log_sum_exp_t(l.data(), l.size(), T); }

void check_finite(double x, std::size_t index, const char* what) {
    if (!std::isfinite(x))
        throw NonFinite(std::string(what) + " is not finite for sequence " + std::to_string(index));
}

}  // namespace

// ---- losses --------------------------------------------------------------------

LossBreakdown loss(const Model& model, const AttnParams& attn, const std::vector<IcSequence>& data, double T) {
    if (data.empty()) throw InvalidArgs("loss over an empty dataset");
    if (!(T > 0.0)) throw InvalidTemperature("temperature must be positive");
    LossBreakdown out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& seq = data[i];
        const auto l1 = step_logits(model, attn, seq.tokens, 1, T);
        const double a = log_sum_exp(l1.values, T) - l1.values[static_cast<std::size_t>(seq.relation)] / T;
        const auto l2 = step_logits(model, attn, with_relation(model.world, seq, seq.relation), 2, T);
        const double b =
            log_sum_exp(l2.values, T) - l2.values[static_cast<std::size_t>(seq.target_answer - l2.first_token)] / T;
        check_finite(a, i, "l1");
        check_finite(b, i, "l2");
        out.l1.push_back(a);
        out.l2.push_back(b);
        out.L1 += a;
        out.L2 += b;
    }
    out.L1 /= static_cast<double>(data.size());
    out.L2 /= static_cast<double>(data.size());
    out.L = out.L1 + out.L2;
    return out;
}

LossBreakdown loss_closed_form(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                               const std::vector<double>& theta, const std::vector<double>& omega, double T) {
    if (data.empty()) throw InvalidArgs("loss over an empty dataset");
    if (!(T > 0.0)) throw InvalidTemperature("temperature must be positive");
    const auto v = softmax_vec(theta);
    const auto q = softmax_vec(omega);
    LossBreakdown out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& seq = data[i];
        const auto l1 = step1_logits_closed_form(world, seq, v);
        const auto l2 = step2_logits_closed_form(world, seq, q);
        const double a = log_sum_exp(l1, T) - l1[static_cast<std::size_t>(seq.relation)] / T;
        const double b = log_sum_exp(l2, T) - l2[static_cast<std::size_t>(seq.target_answer - world.n)] / T;
        check_finite(a, i, "l1");
        check_finite(b, i, "l2");
        out.l1.push_back(a);
        out.l2.push_back(b);
        out.L1 += a;
        out.L2 += b;
    }
    out.L1 /= static_cast<double>(data.size());
    out.L2 /= static_cast<double>(data.size());
    out.L = out.L1 + out.L2;
    return out;
}

// ---- analytic gradients ------------------------------------------------------------

std::vector<double> grad_v_step1(const KnowledgeWorld& world, const IcSequence& seq, const std::vector<double>& v,
                                 double T) {
    const int k = seq.k;
    const auto l = step1_logits_closed_form(world, seq, v);
    const auto p = softmax_t(l, T);
    // P_ij = sum over relations with r(s_i) = a_j of (p(r) - [r = r*]).
    std::vector<double> P(static_cast<std::size_t>((k + 1) * k), 0.0);
    for (int r = 0; r < world.m; ++r) {
        const double coef = p[static_cast<std::size_t>(r)] - (r == seq.relation ? 1.0 : 0.0);
        for (int i = 0; i <= k; ++i) {
            const int img = world.answer_token(world.answer(r, seq.subject(i)));
            for (int j = 0; j < k; ++j)
                if (img == seq.answer(j)) P[static_cast<std::size_t>(i * k + j)] += coef;
        }
    }
    std::vector<double> g(static_cast<std::size_t>(2 * k + 2), 0.0);
    for (int i = 0; i <= k; ++i)
        for (int j = 0; j < k; ++j) {
            const double pij = P[static_cast<std::size_t>(i * k + j)];
            g[static_cast<std::size_t>(2 * i)] += 2.0 / T * pij * v[static_cast<std::size_t>(2 * j + 1)];
            g[static_cast<std::size_t>(2 * j + 1)] += 2.0 / T * pij * v[static_cast<std::size_t>(2 * i)];
        }
    return g;
}

std::vector<double> grad_v_step1(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                 const std::vector<double>& v, double T) {
    std::vector<double> g(v.size(), 0.0);
    for (const auto& seq : data) {
        const auto gi = grad_v_step1(world, seq, v, T);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gi[i];
    }
    for (auto& x : g) x /= static_cast<double>(data.size());
    return g;
}

std::vector<double> grad_q_step2(const KnowledgeWorld& world, const IcSequence& seq, const std::vector<double>& q,
                                 double T) {
    const int k = seq.k;
    const auto l = step2_logits_closed_form(world, seq, q);
    const auto p = softmax_t(l, T);
    const double qL = 1.0 + q.back();
    std::vector<double> g(q.size(), 0.0);
    double mix = 0.0;
    for (int i = 0; i <= k; ++i) {
        const double pa = p[static_cast<std::size_t>(world.answer(seq.relation, seq.subject(i)))];
        g[static_cast<std::size_t>(2 * i)] = 2.0 * qL / T * (pa - (i == k ? 1.0 : 0.0));
        mix += pa * q[static_cast<std::size_t>(2 * i)];
    }
    g.back() = 2.0 / T * (mix - q[static_cast<std::size_t>(2 * k)]);
    return g;
}

std::vector<double> grad_q_step2(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                 const std::vector<double>& q, double T) {
    std::vector<double> g(q.size(), 0.0);
    for (const auto& seq : data) {
        const auto gi = grad_q_step2(world, seq, q, T);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gi[i];
    }
    for (auto& x : g) x /= static_cast<double>(data.size());
    return g;
}

std::vector<double> softmax_chain(const std::vector<double>& v, const std::vector<double>& g) {
    double vg = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) vg += v[i] * g[i];
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * (g[i] - vg);
    return out;
}

std::vector<double> grad_theta_analytic(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                        const std::vector<double>& theta, double T) {
    const auto v = softmax_vec(theta);
    return softmax_chain(v, grad_v_step1(world, data, v, T));
}

std::vector<double> grad_omega_analytic(const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                                        const std::vector<double>& omega, double T) {
    const auto q = softmax_vec(omega);
    return softmax_chain(q, grad_q_step2(world, data, q, T));
}

std::vector<double> grad_numeric(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<double>& x, double h) {
    if (!(h > 0.0)) throw InvalidArgs("finite-difference step must be positive");
    std::vector<double> g(x.size());
    std::vector<double> y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] + h;
        const double fp = f(y);
        y[i] = x[i] - h;
        const double fm = f(y);
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// ---- compiled dataset ------------------------------------------------------------

CompiledDataset compile_dataset(const KnowledgeWorld& world, const std::vector<IcSequence>& data) {
    if (data.empty()) throw InvalidArgs("cannot compile an empty dataset");
    CompiledDataset cd;
    cd.k = data.front().k;
    cd.n = world.n;
    const int k = cd.k;
    using Key = std::vector<std::pair<std::uint32_t, int>>;  // (mask, target) per relation, sorted
    std::map<Key, double> counts;
    for (const auto& seq : data) {
        if (seq.k != k) throw InvalidArgs("dataset mixes different k");
        Key key;
        key.reserve(static_cast<std::size_t>(world.m));
        for (int r = 0; r < world.m; ++r) {
            std::uint32_t mask = 0;
            for (int i = 0; i <= k; ++i) {
                const int img = world.answer_token(world.answer(r, seq.subject(i)));
                for (int j = 0; j < k; ++j)
                    if (img == seq.answer(j)) mask |= 1u << (i * k + j);
            }
            key.emplace_back(mask, r == seq.relation ? 1 : 0);
        }
        std::sort(key.begin(), key.end());
        counts[key] += 1.0;
    }
    for (const auto& [key, count] : counts) {
        CompiledDataset::Pattern p;
        p.weight = count / static_cast<double>(data.size());
        for (const auto& [mask, target] : key) {
            if (!p.classes.empty() && p.classes.back().mask == mask && p.classes.back().target == (target == 1)) {
                p.classes.back().mult += 1.0;
            } else {
                p.classes.push_back({mask, 1.0, target == 1});
            }
        }
        cd.patterns.push_back(std::move(p));
    }
    return cd;
}

double compiled_step1(const CompiledDataset& cd, const std::vector<double>& v, double T, std::vector<double>* grad) {
    const int k = cd.k;
    const int bits = (k + 1) * k;
    if (grad) grad->assign(static_cast<std::size_t>(2 * k + 2), 0.0);
    std::vector<double> logits, P(static_cast<std::size_t>(bits));
    double total = 0.0;
    for (const auto& pat : cd.patterns) {
        logits.assign(pat.classes.size(), 0.0);
        double mx = -std::numeric_limits<double>::infinity();
        double target_logit = 0.0;
        for (std::size_t c = 0; c < pat.classes.size(); ++c) {
            double cross = 0.0;
            for (int b = 0; b < bits; ++b)
                if (pat.classes[c].mask & (1u << b))
                    cross += v[static_cast<std::size_t>(2 * (b / k))] * v[static_cast<std::size_t>(2 * (b % k) + 1)];
            logits[c] = 2.0 * cross;
            mx = std::max(mx, logits[c]);
            if (pat.classes[c].target) target_logit = logits[c];
        }
        double z = 0.0;
        for (std::size_t c = 0; c < pat.classes.size(); ++c) {
            logits[c] = std::exp((logits[c] - mx) / T);  // reused as unnormalized probabilities
            z += pat.classes[c].mult * logits[c];
        }
        total += pat.weight * ((mx - target_logit) / T + std::log(z));
        if (!grad) continue;
        std::fill(P.begin(), P.end(), 0.0);
        for (std::size_t c = 0; c < pat.classes.size(); ++c) {
            const auto& rc = pat.classes[c];
            if (rc.mask == 0) continue;
            const double coef = rc.mult * logits[c] / z - (rc.target ? 1.0 : 0.0);
            for (int b = 0; b < bits; ++b)
                if (rc.mask & (1u << b)) P[static_cast<std::size_t>(b)] += coef;
        }
        // Sums run over the pair index in a fixed order so that the gradient is
        // exactly symmetric under swapping the two in-context pairs.
        for (int i = 0; i <= k; ++i) {
            double s = 0.0;
            for (int j = 0; j < k; ++j)
                s += P[static_cast<std::size_t>(i * k + j)] * v[static_cast<std::size_t>(2 * j + 1)];
            (*grad)[static_cast<std::size_t>(2 * i)] += pat.weight * (2.0 / T) * s;
        }
        for (int j = 0; j < k; ++j) {
            double s = 0.0;
            for (int i = 0; i <= k; ++i)
                s += P[static_cast<std::size_t>(i * k + j)] * v[static_cast<std::size_t>(2 * i)];
            (*grad)[static_cast<std::size_t>(2 * j + 1)] += pat.weight * (2.0 / T) * s;
        }
    }
    return total;
}

double compiled_step2(const CompiledDataset& cd, const std::vector<double>& q, double T, std::vector<double>* grad) {
    const int k = cd.k;
    const double qL = 1.0 + q.back();
    // In-sequence answers r*(s_i), i = 0..k (target i = k), plus n-k-1 others at 0.
    std::vector<double> l(static_cast<std::size_t>(k + 1));
    double mx = 0.0;
    for (int i = 0; i <= k; ++i) {
        l[static_cast<std::size_t>(i)] = 2.0 * qL * q[static_cast<std::size_t>(2 * i)];
        mx = std::max(mx, l[static_cast<std::size_t>(i)]);
    }
    const double others = static_cast<double>(cd.n - k - 1);
    double z = others * std::exp(-mx / T);
    std::vector<double> e(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) z += (e[i] = std::exp((l[i] - mx) / T));
    const double value = (mx - l.back()) / T + std::log(z);
    if (grad) {
        grad->assign(q.size(), 0.0);
        double mix = 0.0;
        for (int i = 0; i <= k; ++i) {
            const double p = e[static_cast<std::size_t>(i)] / z;
            (*grad)[static_cast<std::size_t>(2 * i)] = 2.0 * qL / T * (p - (i == k ? 1.0 : 0.0));
            mix += p * q[static_cast<std::size_t>(2 * i)];
        }
        grad->back() = 2.0 / T * (mix - q[static_cast<std::size_t>(2 * k)]);
    }
    return value;
}

// ---- PGD / Adam on (theta, omega) ---------------------------------------------------

namespace {

void floor_logits(std::vector<double>& x) {
    const double mx = *std::max_element(x.begin(), x.end());
    for (auto& t : x) t = std::max(t, mx + kThetaFloor);
}

double norm2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (double x : a) s += x * x;
    for (double x : b) s += x * x;
    return std::sqrt(s);
}

struct PartialEval {
    std::vector<double> v, q, gv, gq, gtheta, gomega;
    double L1 = 0.0, L2 = 0.0;
};

void eval_partial(const CompiledDataset& cd, const std::vector<double>& theta, const std::vector<double>& omega,
                  double T, PartialEval& e) {
    e.v = softmax_vec(theta);
    e.q = softmax_vec(omega);
    e.L1 = compiled_step1(cd, e.v, T, &e.gv);
    e.L2 = compiled_step2(cd, e.q, T, &e.gq);
    if (!std::isfinite(e.L1) || !std::isfinite(e.L2)) throw NonFinite("training loss became non-finite");
    e.gtheta = softmax_chain(e.v, e.gv);
    e.gomega = softmax_chain(e.q, e.gq);
}

TraceRow make_row(const KnowledgeWorld& world, const std::vector<IcSequence>& data, long long iter, int stage,
                  const PartialEval& e) {
    TraceRow row;
    row.iter = iter;
    row.stage = stage;
    row.L1 = e.L1;
    row.L2 = e.L2;
    row.v = e.v;
    row.q = e.q;
    const auto psi = pairing_metric(e.v);
    row.psi = psi ? *psi : std::numeric_limits<double>::quiet_NaN();
    row.g = logit_gap(e.v);
    long long c1 = 0, c2 = 0;
    for (const auto& seq : data) {
        c1 += argmax_lowest(step1_logits_closed_form(world, seq, e.v)) == seq.relation;
        c2 += argmax_lowest(step2_logits_closed_form(world, seq, e.q)) + world.n == seq.target_answer;
    }
    row.acc1 = static_cast<double>(c1) / static_cast<double>(data.size());
    row.acc2 = static_cast<double>(c2) / static_cast<double>(data.size());
    return row;
}

std::vector<double> sample_ball(std::size_t dim, double radius, Rng& rng) {
    std::vector<double> x(dim);
    double nrm = 0.0;
    do {
        nrm = 0.0;
        for (auto& t : x) {
            t = rng.normal();
            nrm += t * t;
        }
    } while (nrm == 0.0);
    nrm = std::sqrt(nrm);
    const double scale = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim)) / nrm;
    for (auto& t : x) t *= scale;
    return x;
}

class Adam {
public:
    explicit Adam(std::size_t n) : m1_(n, 0.0), m2_(n, 0.0) {}
    void step(double* param, const double* grad, double lr) {
        ++t_;
        const double b1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double b2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        kernels::active().adam_step(param, grad, m1_.data(), m2_.data(), m1_.size(), lr, kBeta1, kBeta2, b1, b2,
                                    kEps);
    }

    static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

private:
    std::vector<double> m1_, m2_;
    long long t_ = 0;
};

bool should_trace(long long every, long long iter) { return every > 0 && iter % every == 0; }

}  // namespace

RunTrace run_pgd(const TrainConfig& cfg_in, const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                 const Observer& observer) {
    const TrainConfig cfg = resolve_schedule(cfg_in);
    const CompiledDataset cd = compile_dataset(world, data);
    const int k = cd.k;
    RunTrace trace;
    trace.config = cfg;
    std::vector<double> theta(static_cast<std::size_t>(2 * k + 2), 0.0);
    std::vector<double> omega(static_cast<std::size_t>(2 * k + 3), 0.0);
    PartialEval e;
    long long iter = 0;

    auto run_stage = [&](int stage, double eta, long long steps) {
        long long done = 0;
        for (;; ++done) {
            eval_partial(cd, theta, omega, cfg.T, e);
            if (observer) observer(IterateView{iter, stage, theta, omega, e.v, e.q, e.L1, e.L2});
            const bool last = done == steps || (cfg.grad_tol > 0.0 && norm2(e.gtheta, e.gomega) < cfg.grad_tol);
            if (done == 0 || last || should_trace(cfg.trace_every, iter))
                trace.rows.push_back(make_row(world, data, iter, stage, e));
            if (last) break;
            for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= eta * e.gtheta[i];
            for (std::size_t i = 0; i < omega.size(); ++i) omega[i] -= eta * e.gomega[i];
            floor_logits(theta);
            floor_logits(omega);
            ++iter;
        }
        return done;
    };

    trace.stage1_iters = run_stage(1, cfg.eta1, cfg.t1);
    trace.theta_stage1 = theta;
    trace.omega_stage1 = omega;

    Rng rng = Rng::derive(cfg.seed, stream::perturb);
    const std::size_t dim = cfg.perturb_theta_only ? theta.size() : theta.size() + omega.size();
    trace.perturbation = sample_ball(dim, cfg.xi_radius, rng);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += trace.perturbation[i];
    if (!cfg.perturb_theta_only)
        for (std::size_t i = 0; i < omega.size(); ++i) omega[i] += trace.perturbation[theta.size() + i];

    trace.stage2_iters = run_stage(2, cfg.eta2, cfg.t2);
    trace.theta = theta;
    trace.omega = omega;
    return trace;
}

RunTrace run_adam_partial(const TrainConfig& cfg_in, const KnowledgeWorld& world, const std::vector<IcSequence>& data,
                          const Observer& observer) {
    const TrainConfig cfg = resolve_schedule(cfg_in);
    const CompiledDataset cd = compile_dataset(world, data);
    const int k = cd.k;
    RunTrace trace;
    trace.config = cfg;
    std::vector<double> theta(static_cast<std::size_t>(2 * k + 2), 0.0);
    std::vector<double> omega(static_cast<std::size_t>(2 * k + 3), 0.0);
    Adam adam_t(theta.size()), adam_o(omega.size());
    PartialEval e;
    for (long long iter = 0;; ++iter) {
        eval_partial(cd, theta, omega, cfg.T, e);
        if (observer) observer(IterateView{iter, 1, theta, omega, e.v, e.q, e.L1, e.L2});
        const bool last = iter == cfg.adam_iters;
        if (iter == 0 || last || should_trace(cfg.trace_every, iter))
            trace.rows.push_back(make_row(world, data, iter, 1, e));
        if (last) break;
        adam_t.step(theta.data(), e.gtheta.data(), cfg.adam_lr);
        adam_o.step(omega.data(), e.gomega.data(), cfg.adam_lr);
    }
    trace.stage1_iters = cfg.adam_iters;
    trace.theta = theta;
    trace.omega = omega;
    return trace;
}

// ---- full-mode reverse-mode engine ------------------------------------------------

namespace {

struct Workspace {
    std::vector<double> Z, mz, scores, alpha, u, sigma, logits, dsigma, du, dalpha, wsum;
    std::vector<std::pair<int, double>> coef;
};

// Forward pass for one example; fills the workspace and returns the logits.
void forward_example(const EmbeddingBasis& basis, const FullState& st, const std::vector<int>& tokens, int first,
                     int count, Workspace& w) {
    const auto& K = kernels::active();
    const std::size_t L = tokens.size();
    const auto dp = static_cast<std::size_t>(basis.d_p);
    const auto d = static_cast<std::size_t>(basis.d);
    const std::size_t D = dp + d;
    const auto dm = static_cast<std::size_t>(st.mlp.d_mlp);
    if (L == 0 || L > dp) throw LengthExceeded("sequence length exceeds d_P");
    w.Z.assign(L * D, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
        w.Z[i * D + i] = 1.0;
        const double* e = basis.embedding(tokens[i]);
        std::copy(e, e + d, w.Z.begin() + static_cast<std::ptrdiff_t>(i * D + dp));
    }
    const double* zL = w.Z.data() + (L - 1) * D;
    w.mz.resize(D);
    K.gemv(st.kq.data.data(), D, D, zL, w.mz.data());
    w.scores.resize(L);
    for (std::size_t i = 0; i < L; ++i) w.scores[i] = K.dot(w.Z.data() + i * D, w.mz.data(), D);
    w.alpha = softmax_t(w.scores, 1.0);
    w.coef.clear();
    for (std::size_t i = 0; i < L; ++i) w.coef.emplace_back(tokens[i], w.alpha[i]);
    w.coef.emplace_back(tokens[L - 1], 1.0);  // residual
    w.u.assign(dm, 0.0);
    for (const auto& [t, c] : w.coef) K.axpy(c, st.mlp.key.row(static_cast<std::size_t>(t)), w.u.data(), dm);
    w.sigma.resize(dm);
    K.square(w.u.data(), w.sigma.data(), dm);
    w.logits.resize(static_cast<std::size_t>(count));
    K.gemv(st.mlp.value.row(static_cast<std::size_t>(first)), static_cast<std::size_t>(count), dm, w.sigma.data(),
           w.logits.data());
}

}  // namespace

std::vector<double> logits_full(const EmbeddingBasis& basis, const FullState& state, const std::vector<int>& tokens,
                                int group_first, int group_count, std::vector<double>* attention) {
    Workspace w;
    forward_example(basis, state, tokens, group_first, group_count, w);
    if (attention) *attention = w.alpha;
    return w.logits;
}

FullGrad backprop_full(const EmbeddingBasis& basis, const FullState& st, const std::vector<Example>& batch, double T,
                       bool train_attention, bool train_mlp) {
    if (!(T > 0.0)) throw InvalidTemperature("temperature must be positive");
    const auto& K = kernels::active();
    const auto dp = static_cast<std::size_t>(basis.d_p);
    const auto d = static_cast<std::size_t>(basis.d);
    const std::size_t D = dp + d;
    const auto dm = static_cast<std::size_t>(st.mlp.d_mlp);
    FullGrad g;
    g.kq = Matrix(D, D);
    g.key = Matrix(d, dm);
    g.value = Matrix(d, dm);
    Workspace w;
    std::vector<double> dlogit;
    for (const auto& ex : batch) {
        forward_example(basis, st, ex.tokens, ex.group_first, ex.group_count, w);
        const auto p = softmax_t(w.logits, T);
        const auto tgt = static_cast<std::size_t>(ex.target - ex.group_first);
        const double lse = log_sum_exp(w.logits, T);
        g.loss += ex.weight * (lse - w.logits[tgt] / T);
        dlogit.resize(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) dlogit[i] = ex.weight * (p[i] - (i == tgt ? 1.0 : 0.0)) / T;
        // d sigma = sum_g dlogit_g value_g ; d value_g += dlogit_g sigma
        w.dsigma.resize(dm);
        K.gemv_t(st.mlp.value.row(static_cast<std::size_t>(ex.group_first)), p.size(), dm, dlogit.data(),
                 w.dsigma.data());
        if (train_mlp)
            K.rank1(g.value.row(static_cast<std::size_t>(ex.group_first)), p.size(), dm, 1.0, dlogit.data(),
                    w.sigma.data());
        w.du.resize(dm);
        for (std::size_t j = 0; j < dm; ++j) w.du[j] = 2.0 * w.u[j] * w.dsigma[j];
        if (train_mlp)
            for (const auto& [t, c] : w.coef) K.axpy(c, w.du.data(), g.key.row(static_cast<std::size_t>(t)), dm);
        if (!train_attention) continue;
        const std::size_t L = ex.tokens.size();
        w.dalpha.resize(L);
        double adot = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            w.dalpha[i] = K.dot(st.mlp.key.row(static_cast<std::size_t>(ex.tokens[i])), w.du.data(), dm);
            adot += w.alpha[i] * w.dalpha[i];
        }
        w.wsum.assign(D, 0.0);
        for (std::size_t i = 0; i < L; ++i) {
            const double ds = w.alpha[i] * (w.dalpha[i] - adot);
            if (ds != 0.0) K.axpy(ds, w.Z.data() + i * D, w.wsum.data(), D);
        }
        K.rank1(g.kq.data.data(), D, D, 1.0, w.wsum.data(), w.Z.data() + (L - 1) * D);
    }
    return g;
}

double loss_full(const EmbeddingBasis& basis, const FullState& st, const std::vector<Example>& batch, double T) {
    if (!(T > 0.0)) throw InvalidTemperature("temperature must be positive");
    Workspace w;
    double total = 0.0;
    for (const auto& ex : batch) {
        forward_example(basis, st, ex.tokens, ex.group_first, ex.group_count, w);
        total += ex.weight * (log_sum_exp(w.logits, T) -
                              w.logits[static_cast<std::size_t>(ex.target - ex.group_first)] / T);
    }
    return total;
}

double accuracy_full(const EmbeddingBasis& basis, const FullState& st, const std::vector<Example>& batch) {
    if (batch.empty()) return 0.0;
    Workspace w;
    long long correct = 0;
    for (const auto& ex : batch) {
        forward_example(basis, st, ex.tokens, ex.group_first, ex.group_count, w);
        const int pred = ex.group_first + argmax_lowest(w.logits);
        correct += pred == ex.target ||
                   std::find(ex.also_correct.begin(), ex.also_correct.end(), pred) != ex.also_correct.end();
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

std::vector<Example> ic_examples(const KnowledgeWorld& world, const std::vector<IcSequence>& data) {
    std::vector<Example> out;
    const double w = 1.0 / static_cast<double>(data.size());
    for (const auto& seq : data) {
        out.push_back({seq.tokens, world.relation_token(seq.relation), world.relation_token(0), world.m, w, {}});
        out.push_back({with_relation(world, seq, seq.relation), seq.target_answer, world.answer_token(0), world.n, w,
                       {}});
    }
    return out;
}

std::vector<Example> pretrain_examples(const KnowledgeWorld& world, const std::vector<PretrainSample>& data) {
    std::vector<Example> out;
    const double w = 1.0 / static_cast<double>(data.size());
    for (const auto& p : data) {
        Example ex{{p.input[0], p.input[1]}, p.target, 0, world.vocab_size(), w, {}};
        if (p.dropped == 1)
            for (int r = 0; r < world.m; ++r)
                if (r != p.relation && world.answer(r, p.subject) == p.answer)
                    ex.also_correct.push_back(world.relation_token(r));
        out.push_back(std::move(ex));
    }
    return out;
}

PretrainResult pretrain(const PretrainConfig& cfg, const KnowledgeWorld& world, const EmbeddingBasis& basis) {
    if (!(cfg.T > 0.0)) throw InvalidConfig("pretraining temperature must be positive");
    const int d_mlp = cfg.d_mlp > 0 ? cfg.d_mlp : 3 * world.n * world.n;
    Rng rng = Rng::derive(cfg.seed, stream::init);
    const MlpParams init = init_trainable_mlp(basis.d, d_mlp, rng);
    PretrainResult res;
    res.state.mlp = to_token_space(init, basis);
    const auto D = static_cast<std::size_t>(basis.model_dim());
    res.state.kq = Matrix(D, D);
    const auto batch = pretrain_examples(world, enumerate_pretrain_set(world));
    Adam a_kq(res.state.kq.data.size()), a_key(res.state.mlp.key.data.size()),
        a_val(res.state.mlp.value.data.size());
    for (long long epoch = 0;; ++epoch) {
        if (epoch % cfg.check_every == 0 || epoch == cfg.max_epochs) {
            res.accuracy = accuracy_full(basis, res.state, batch);
            res.epochs = epoch;
            if (res.accuracy >= cfg.target_accuracy || epoch == cfg.max_epochs) break;
        }
        const FullGrad g = backprop_full(basis, res.state, batch, cfg.T, true, true);
        res.final_loss = g.loss;
        a_kq.step(res.state.kq.data.data(), g.kq.data.data(), cfg.lr);
        a_key.step(res.state.mlp.key.data.data(), g.key.data.data(), cfg.lr);
        a_val.step(res.state.mlp.value.data.data(), g.value.data.data(), cfg.lr);
    }
    res.final_loss = loss_full(basis, res.state, batch, cfg.T);
    return res;
}

FullRunResult run_adam_full(const TrainConfig& cfg_in, const KnowledgeWorld& world, const EmbeddingBasis& basis,
                            FullState init, const std::vector<IcSequence>& data) {
    const TrainConfig cfg = resolve_schedule(cfg_in);
    FullRunResult res;
    res.state = std::move(init);
    const auto batch = ic_examples(world, data);
    Adam a_kq(res.state.kq.data.size());
    for (long long iter = 0; iter < cfg.adam_iters; ++iter) {
        const FullGrad g = backprop_full(basis, res.state, batch, cfg.T, true, false);
        a_kq.step(res.state.kq.data.data(), g.kq.data.data(), cfg.adam_lr);
    }
    res.final_loss = loss_full(basis, res.state, batch, cfg.T);
    const int k = data.front().k;
    res.v_mean.assign(static_cast<std::size_t>(2 * k + 2), 0.0);
    res.q_mean.assign(static_cast<std::size_t>(2 * k + 3), 0.0);
    std::vector<double> att;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        logits_full(basis, res.state, batch[i].tokens, batch[i].group_first, batch[i].group_count, &att);
        auto& dst = (i % 2 == 0) ? res.v_mean : res.q_mean;
        for (std::size_t j = 0; j < att.size(); ++j) dst[j] += att[j] / static_cast<double>(data.size());
    }
    return res;
}

}  // namespace icr

// Acceptance harness: one PASS/FAIL line per criterion. Usage:
//   icr_acceptance <1..10|scaling|all>
// The thresholds below are the published targets; a criterion that the
// implementation does not reach is reported as FAIL, never relaxed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "icr/analysis.hpp"
#include "icr/experiments.hpp"
#include "icr/memory.hpp"
#include "icr/model.hpp"
#include "icr/training.hpp"

using namespace icr;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Context printed next to the checks; never affects the verdict.
void note(Outcome& o, const std::string& what) {
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += "info " + what;
}

void check(Outcome& o, bool ok, const std::string& what) {
    if (!ok) o.pass = false;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += (ok ? "" : "MISS ") + what;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

unsigned workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max({den, std::abs(a[i]), std::abs(b[i])});
    }
    return num / std::max(den, 1e-300);
}

// ---- 1. memory exactness -------------------------------------------------------
Outcome memory_exactness() {
    Outcome o;
    for (int n : {3, 8, 16}) {
        const long long cap = identifiable_capacity(n);
        // Prime powers reach full capacity with the affine construction.
        const WorldMode mode = n == 3 ? WorldMode::rejection : WorldMode::affine;
        const int m = static_cast<int>(cap);
        const KnowledgeWorld w = build_world(n, m, 1, 1'000'000, mode);
        const EmbeddingBasis b = make_basis(w, 2, EmbeddingMode::random_orthonormal, 1);
        const MemoryReport rep = verify_memory(construct_memory(w, b), w, b);
        check(o, rep.failures == 0 && rep.ties == 0,
              "n=" + std::to_string(n) + " m=" + std::to_string(m) + " probes=" + std::to_string(rep.total_probes) +
                  " failures=" + std::to_string(rep.failures));
    }
    return o;
}

// ---- 2. oracle equivalence -----------------------------------------------------
Outcome oracle_equivalence() {
    Outcome o;
    const KnowledgeWorld w = build_world(8, 56, 2, 1'000'000, WorldMode::affine);
    const EmbeddingBasis b = make_basis(w, 2, EmbeddingMode::random_orthonormal, 2);
    const Model model = Model::make(w, b, construct_memory(w, b), 2);
    Rng rng = Rng::derive(2, stream::test);
    double err1 = 0.0, err2 = 0.0;
    for (int t = 0; t < 1000; ++t) {
        AttnParams attn = AttnParams::partial_zero(2);
        for (auto& x : attn.theta) x = 2.0 * rng.normal();
        for (auto& x : attn.omega) x = 2.0 * rng.normal();
        const IcSequence seq = sample_ic_sequence(w, 2, rng);
        const auto lit1 = step_logits(model, attn, seq.tokens, 1, 1.0).values;
        const auto cf1 = step1_logits_closed_form(w, seq, softmax_t(attn.theta, 1.0));
        for (std::size_t i = 0; i < lit1.size(); ++i) err1 = std::max(err1, std::abs(lit1[i] - cf1[i]));
        const auto lit2 = step_logits(model, attn, with_relation(w, seq, seq.relation), 2, 1.0).values;
        const auto cf2 = step2_logits_closed_form(w, seq, softmax_t(attn.omega, 1.0));
        for (std::size_t i = 0; i < lit2.size(); ++i) err2 = std::max(err2, std::abs(lit2[i] - cf2[i]));
    }
    check(o, err1 <= 1e-10, "step-1 max abs err " + fmt("%.2e", err1));
    check(o, err2 <= 1e-10, "step-2 max abs err " + fmt("%.2e", err2));
    return o;
}

// ---- 3. gradient gate ----------------------------------------------------------
Outcome gradient_gate() {
    Outcome o;
    Rng rng = Rng::derive(3, stream::test);
    constexpr double kNoiseFloor = 1e-4;
    double worst = 0.0, worst_abs = 0.0;
    int below_floor = 0;
    for (int t = 0; t < 200; ++t) {
        const int n = 3 + static_cast<int>(rng.below(6));
        const KnowledgeWorld w =
            build_world(n, 12, 100 + static_cast<std::uint64_t>(t), 1'000'000, WorldMode::unconstrained);
        Rng drng = Rng::derive(static_cast<std::uint64_t>(t), stream::dataset);
        const auto data = sample_dataset(w, 2, 8, drng);
        const double T = 0.02 + 0.18 * rng.uniform();
        std::vector<double> theta(6), omega(7);
        for (auto& x : theta) x = rng.normal();
        for (auto& x : omega) x = rng.normal();
        const auto gt = grad_theta_analytic(w, data, theta, T);
        const auto nt = grad_numeric(
            [&](const std::vector<double>& x) { return loss_closed_form(w, data, x, omega, T).L1; }, theta, 1e-5);
        const auto go = grad_omega_analytic(w, data, omega, T);
        const auto no = grad_numeric(
            [&](const std::vector<double>& x) { return loss_closed_form(w, data, theta, x, T).L2; }, omega, 1e-5);
        // A saturated softmax can leave a gradient below the resolution of the
        // central difference (roundoff ~1e-10 absolute); such vectors are
        // judged on absolute error instead and counted separately.
        for (const auto* pr : {&gt, &go}) {
            const auto& a = *pr;
            const auto& num = pr == &gt ? nt : no;
            double scale = 0.0, abs_err = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                scale = std::max({scale, std::abs(a[i]), std::abs(num[i])});
                abs_err = std::max(abs_err, std::abs(a[i] - num[i]));
            }
            if (scale < kNoiseFloor) {
                ++below_floor;
                worst_abs = std::max(worst_abs, abs_err);
            } else {
                worst = std::max(worst, rel_err(a, num));
            }
        }
    }
    check(o, worst <= 1e-5, "worst relative error " + fmt("%.2e", worst) + " over 200 configs");
    check(o, worst_abs <= 1e-8, std::to_string(below_floor) + " gradient vectors below " + fmt("%.0e", kNoiseFloor) +
                                    ", worst absolute error " + fmt("%.2e", worst_abs));

    const KnowledgeWorld w3 = build_world(3, 6, 0);
    const auto all3 = enumerate_ic_sequences(w3, 2);
    double init_err = 0.0;
    for (double T : {0.02, 0.05, 0.2}) {
        const auto g = grad_v_step1(w3, all3, std::vector<double>(6, 1.0 / 6.0), T);
        init_err = std::max({init_err, std::abs(g[0] * 9 * T + 1.0), std::abs(g[4] * 9 * T - 2.0)});
        for (const auto& seq : all3) {
            const std::vector<double> q(7, 1.0 / 7.0);
            const double p = softmax_t(step2_logits_closed_form(w3, seq, q), T)[static_cast<std::size_t>(
                seq.answer(0) - w3.n)];
            const auto gq = grad_q_step2(w3, seq, q, T);
            const std::vector<double> ex{16 * p, 0, 16 * p, 0, 16 * (p - 1), 0, 2 * (3 * p - 1)};
            for (std::size_t i = 0; i < 7; ++i) init_err = std::max(init_err, std::abs(gq[i] * 7 * T - ex[i]));
        }
    }
    check(o, init_err <= 1e-12, "initialization values, max err " + fmt("%.2e", init_err));
    return o;
}

// ---- 4. n = 3 two-stage dynamics ---------------------------------------------
// Explicit step-1 loss of the n = 3 task on v = (x, x, 1/2 - x, 1/2 - x, 0, 0):
// the true relation scores 2(x^2 + y^2), the swap 4xy, the four partial
// matches 2x^2, 2xy, 2xy, 2y^2 (constants shared by all relations dropped).
double explicit_l1(double x, double T) {
    const double y = 0.5 - x;
    const double l[6] = {2 * (x * x + y * y), 4 * x * y, 2 * x * x, 2 * x * y, 2 * x * y, 2 * y * y};
    const double mx = *std::max_element(l, l + 6);
    double s = 0.0;
    for (double v : l) s += std::exp((v - mx) / T);
    return -((l[0] - mx) / T - std::log(s));
}

Outcome two_stage_n3() {
    Outcome o;
    const double T = 0.02;
    const KnowledgeWorld w = build_world(3, 6, 0);
    const auto data = enumerate_ic_sequences(w, 2);
    TrainConfig c;
    c.T = T;
    c.eta1 = c.eta2 = T * T;
    c.t1 = 35'000'000;
    c.t2 = 5'000'000;
    c.grad_tol = 1e-8;
    c.seed = 0;
    double asym = 0.0;
    double prev = 1e300;
    bool monotone = true;
    const RunTrace tr = run_pgd(c, w, data, [&](const IterateView& it) {
        if (it.stage != 1) return;
        asym = std::max({asym, std::abs(it.v[0] - it.v[2]), std::abs(it.v[1] - it.v[3])});
        if (it.iter > 0 && !(it.L1 < prev)) monotone = false;
        prev = it.L1;
    });
    const auto v1 = softmax_t(tr.theta_stage1, 1.0);
    const LossBreakdown l1 = loss_closed_form(w, data, tr.theta_stage1, tr.omega_stage1, T);
    check(o, asym <= 1e-12, "stage-1 symmetry " + fmt("%.1e", asym));
    check(o, monotone, std::string("stage-1 L1 strictly decreasing: ") + (monotone ? "yes" : "no"));
    check(o, distance_to_saddle(v1) < 1e-3, "stage-1 ||v - saddle||_inf " + fmt("%.2e", distance_to_saddle(v1)) +
                                                " after " + std::to_string(tr.stage1_iters) + " iters");
    check(o, std::abs(l1.L1 - std::log(2.0)) <= 1e-3, "stage-1 L1 - log 2 = " + fmt("%.6f", l1.L1 - std::log(2.0)));

    const auto v = softmax_t(tr.theta, 1.0);
    const LossBreakdown l2 = loss_closed_form(w, data, tr.theta, tr.omega, T);
    const auto psi = pairing_metric(v);
    check(o, l2.L1 < std::log(2.0) - 1e-4, "final L1 - log 2 = " + fmt("%.6f", l2.L1 - std::log(2.0)));
    check(o, psi && *psi <= 1 + 1e-3, "psi " + (psi ? fmt("%.6f", *psi) : std::string("degenerate")));
    // Independent oracle: grid minimization of the explicit loss (symmetric in x <-> 1/2 - x).
    double best_x = 0.0, best = 1e300;
    for (int i = 1; i < 250000; ++i) {
        const double x = 0.25 * i / 250000.0;
        const double f = explicit_l1(x, T);
        if (f < best) best = f, best_x = x;
    }
    const double a = std::min(0.5 * (v[0] + v[1]), 0.5 * (v[2] + v[3]));
    check(o, std::abs(a - best_x) < 1e-2, "a=" + fmt("%.4f", a) + " x_T=" + fmt("%.4f", best_x));
    check(o, v[4] + v[5] < 1e-3, "v5+v6 " + fmt("%.1e", v[4] + v[5]));
    return o;
}

// ---- 5. saddle curvature -------------------------------------------------------
Outcome saddle_curvature() {
    Outcome o;
    const KnowledgeWorld w = build_world(3, 6, 0);
    const auto data = enumerate_ic_sequences(w, 2);
    // The Stage-1 limit: v = (1/4, 1/4, 1/4, 1/4, 0, 0), with theta_5, theta_6 at the log-space floor.
    const std::vector<double> saddle{0, 0, 0, 0, kThetaFloor, kThetaFloor};
    for (double T : {0.02, 0.05}) {
        const double down = hessian_probe(w, data, saddle, T);
        const double up = hessian_probe(w, data, saddle, T, {0.5, -0.5, -0.5, 0.5, 0, 0});
        check(o, down < -1.0 / (16 * T),
              "T=" + fmt("%.2f", T) + " f''(eps)=" + fmt("%.3f", down) + " (bound " + fmt("%.3f", -1 / (16 * T)) + ")");
        check(o, up > 0.0, "T=" + fmt("%.2f", T) + " f''(1,-1,-1,1)=" + fmt("%.3f", up));
    }
    return o;
}

// ---- 6. step-1 answer logits are uninformative -----------------------------------
Outcome answer_logits_tied() {
    Outcome o;
    const KnowledgeWorld w = build_world(8, 56, 6, 1'000'000, WorldMode::affine);
    const EmbeddingBasis b = make_basis(w, 2, EmbeddingMode::random_orthonormal, 6);
    const Model model = Model::make(w, b, construct_memory(w, b), 2);
    Rng rng = Rng::derive(6, stream::test);
    double spread = 0.0;
    long long exact_closed = 0;
    const int draws = 100000;
    long long correct_low = 0, correct_rand = 0, evaluated = 0;
    for (int t = 0; t < draws; ++t) {
        AttnParams attn = AttnParams::partial_zero(2);
        for (auto& x : attn.theta) x = 2.0 * rng.normal();
        const IcSequence seq = sample_ic_sequence(w, 2, rng);
        const auto v = softmax_t(attn.theta, 1.0);
        const auto cf = step1_answer_logits_closed_form(w, seq, v);
        if (std::all_of(cf.begin(), cf.end(), [&](double x) { return x == cf[0]; })) ++exact_closed;
        if (t % 10 != 0) continue;  // the literal forward on every tenth draw (10^4 sequences)
        const auto f = forward(model, attn, seq.tokens);
        std::vector<double> ans(static_cast<std::size_t>(w.n));
        for (int a = 0; a < w.n; ++a) {
            const double* phi = b.embedding(w.answer_token(a));
            double s = 0.0;
            for (int i = 0; i < b.d; ++i) s += phi[i] * f[static_cast<std::size_t>(i)];
            ans[static_cast<std::size_t>(a)] = s;
        }
        const auto [lo, hi] = std::minmax_element(ans.begin(), ans.end());
        spread = std::max(spread, (*hi - *lo) / std::max(1.0, std::abs(*hi)));
        // Decode from the literal logits: lowest-index argmax, and a uniform
        // pick among the (numerically) tied maxima.
        std::vector<int> tied;
        for (int a = 0; a < w.n; ++a)
            if (ans[static_cast<std::size_t>(a)] >= *hi - 1e-9 * std::max(1.0, std::abs(*hi))) tied.push_back(a);
        const int target = seq.target_answer - w.n;
        ++evaluated;
        if (argmax_lowest(ans) == target) ++correct_low;
        if (tied[rng.below(tied.size())] == target) ++correct_rand;
    }
    check(o, exact_closed == draws, "closed-form answer logits exactly equal in " + std::to_string(exact_closed) + "/" +
                                        std::to_string(draws) + " draws");
    check(o, spread <= 1e-12, "literal forward relative spread " + fmt("%.1e", spread));
    const double acc_low = static_cast<double>(correct_low) / static_cast<double>(evaluated);
    const double acc_rand = static_cast<double>(correct_rand) / static_cast<double>(evaluated);
    check(o, acc_low <= 0.34 && acc_rand <= 0.34,
          "answer accuracy lowest-index " + fmt("%.4f", acc_low) + ", random " + fmt("%.4f", acc_rand));
    return o;
}

// ---- 7. second decoding step ---------------------------------------------------
Outcome second_step() {
    Outcome o;
    const double T = 0.05;
    const KnowledgeWorld w = build_world(8, 64, 7, 1'000'000, WorldMode::unconstrained);
    Rng drng = Rng::derive(7, stream::dataset);
    const auto data = sample_dataset(w, 2, 64, drng);
    TrainConfig c;
    c.T = T;
    c.t1 = 20000;
    c.seed = 7;  // eta1, eta2, t2, xi at their schedule defaults
    double prev = -1e300;
    bool monotone = true;
    const RunTrace tr = run_pgd(c, w, data, [&](const IterateView& it) {
        if (it.stage != 2) return;
        double mx = -1e300;
        for (std::size_t i = 0; i < it.omega.size(); ++i)
            if (i != 4) mx = std::max(mx, it.omega[i]);
        const double gap = it.omega[4] - mx;
        if (gap < prev) monotone = false;
        prev = gap;
    });
    const EvalReport s1 = evaluate_closed_form(w, tr.theta_stage1, tr.omega_stage1, T, EvalScope::all());
    const EvalReport fin = evaluate_closed_form(w, tr.theta, tr.omega, T, EvalScope::all());
    check(o, s1.acc2 == 1.0 && s1.exhaustive,
          "after stage 1: acc2 " + fmt("%.6f", s1.acc2) + " over " + std::to_string(s1.evaluated) + " sequences");
    check(o, fin.acc2 == 1.0, "after stage 2: acc2 " + fmt("%.6f", fin.acc2));
    check(o, monotone, "omega5 - max omega_i non-decreasing over " + std::to_string(tr.stage2_iters) +
                           " stage-2 steps (final gap " + fmt("%.4f", prev) + ")");
    return o;
}

// ---- 8 / scaling. sample efficiency -----------------------------------------------
struct SampleEfficiency {
    double acc1 = 0.0, acc1_consistent = 0.0;
    std::vector<double> per_seed;
};

SampleEfficiency at_8_samples(int n, int m, WorldMode mode) {
    ExperimentConfig c = figure_config("3", 0);
    c.world.n = n;
    c.world.m = m;
    c.world.mode = mode;
    c.sweep.values = {8};
    c.sweep.series_m = {m};
    const auto rows = run_sweep(c, workers());
    SampleEfficiency out;
    for (const auto& r : rows) {
        out.acc1 += r.acc1 / static_cast<double>(rows.size());
        out.acc1_consistent += r.acc1_consistent / static_cast<double>(rows.size());
        out.per_seed.push_back(r.acc1);
    }
    return out;
}

// Expected step-1 accuracy of any decoder when every other relation of a
// world of m random bijections independently reproduces both in-context pairs
// with probability 1 / (n (n-1)): E[1 / (1 + J)], J ~ Binomial(m-1, p).
double ambiguity_ceiling(int n, int m) {
    const double p = 1.0 / (n * (n - 1.0));
    return (1.0 - std::pow(1.0 - p, m)) / (m * p);
}

Outcome figure3() {
    Outcome o;
    const SampleEfficiency s = at_8_samples(8, 64, WorldMode::unconstrained);
    std::string seeds;
    for (double a : s.per_seed) seeds += fmt(" %.3f", a);
    check(o, s.acc1 >= 0.9, "mean step-1 accuracy " + fmt("%.4f", s.acc1) + " over 10 seeds (" + seeds.substr(1) + ")");
    note(o, "ambiguity ceiling for |R|=64 random bijections " + fmt("%.4f", ambiguity_ceiling(8, 64)));
    note(o, "accuracy counting any relation consistent with all three subjects " + fmt("%.4f", s.acc1_consistent));
    return o;
}

Outcome scaling() {
    Outcome o;
    for (int n : {8, 16}) {
        const SampleEfficiency s = at_8_samples(n, 64, WorldMode::unconstrained);
        check(o, s.acc1 >= 0.85, "n=" + std::to_string(n) + " mean step-1 accuracy " + fmt("%.4f", s.acc1));
        note(o, "n=" + std::to_string(n) + " ambiguity ceiling " + fmt("%.4f", ambiguity_ceiling(n, 64)));
    }
    return o;
}

// ---- 9. figure-2 pattern -------------------------------------------------------
void pairwise_checks(Outcome& o, const std::vector<double>& v, const std::vector<double>& q, double pair_tol,
                     double mass_tol) {
    check(o, std::abs(v[0] - v[1]) < pair_tol, "|v1-v2| " + fmt("%.4f", std::abs(v[0] - v[1])));
    check(o, std::abs(v[2] - v[3]) < pair_tol, "|v3-v4| " + fmt("%.4f", std::abs(v[2] - v[3])));
    check(o, std::abs(v[0] - v[2]) > 0.1, "|v1-v3| " + fmt("%.4f", std::abs(v[0] - v[2])));
    check(o, v[4] + v[5] < mass_tol, "v5+v6 " + fmt("%.4f", v[4] + v[5]));
    (void)q;
}

Outcome figure2() {
    Outcome o;
    const ExperimentConfig c = figure_config("2a", 0);
    const RunResult r = run_experiment(c);
    pairwise_checks(o, r.v, r.q, 0.05, 0.05);
    check(o, r.q[4] > 0.5, "q5 " + fmt("%.4f", r.q[4]));
    return o;
}

// ---- 10. pretrained-memory pipeline ----------------------------------------------
Outcome figure4() {
    Outcome o;
    const int seeds = 10;
    std::vector<RunResult> runs(seeds);
    parallel_for(seeds, workers(), [&](std::size_t i) { runs[i] = run_experiment(figure_config("4a", i)); });
    int pretrain_ok = 0, pattern_ok = 0;
    std::string per;
    for (int s = 0; s < seeds; ++s) {
        const RunResult& r = runs[static_cast<std::size_t>(s)];
        if (r.pretrained && r.pretrained->accuracy >= 0.99) ++pretrain_ok;
        Outcome seed_o;
        pairwise_checks(seed_o, r.v, r.q, 0.1, 0.05);
        const double eos = r.q.back();
        check(seed_o, eos > 0.05, "EoS " + fmt("%.3f", eos));
        if (seed_o.pass) ++pattern_ok;
        per += " " + std::string(seed_o.pass ? "ok" : "no");
    }
    check(o, pretrain_ok == seeds, "pretraining >= 0.99 in " + std::to_string(pretrain_ok) + "/10 seeds");
    check(o, pattern_ok >= 7, "pairwise pattern + EoS mass in " + std::to_string(pattern_ok) + "/10 seeds (" +
                                  per.substr(1) + ")");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::pair<const char*, std::function<Outcome()>>> criteria{
        {"1", {"memory exactness", memory_exactness}},
        {"2", {"oracle equivalence", oracle_equivalence}},
        {"3", {"gradient gate", gradient_gate}},
        {"4", {"n=3 two-stage dynamics", two_stage_n3}},
        {"5", {"saddle curvature", saddle_curvature}},
        {"6", {"step-1 answer logits tied", answer_logits_tied}},
        {"7", {"second decoding step", second_step}},
        {"8", {"figure 3 sample efficiency", figure3}},
        {"9", {"figure 2 pairwise pattern", figure2}},
        {"10", {"figure 4 pretrained pipeline", figure4}},
        {"scaling", {"n-scaling at 8 samples", scaling}},
    };
    std::vector<std::string> which;
    const std::string arg = argc > 1 ? argv[1] : "all";
    if (arg == "all") {
        for (const char* k : {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "scaling"}) which.emplace_back(k);
    } else if (criteria.count(arg)) {
        which.push_back(arg);
    } else {
        std::fprintf(stderr, "usage: icr_acceptance <1..10|scaling|all>\n");
        return 2;
    }
    bool all_pass = true;
    for (const auto& id : which) {
        const auto& [name, fn] = criteria.at(id);
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %s (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id.c_str(), name,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        all_pass = all_pass && o.pass;
    }
    return all_pass ? 0 : 1;
}

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "icr/analysis.hpp"
#include "icr/error.hpp"
#include "icr/training.hpp"

using namespace icr;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale) {
    std::vector<double> x(n);
    for (auto& t : x) t = scale * rng.normal();
    return x;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::max(std::abs(a[i]), std::abs(b[i])));
    }
    return num / std::max(den, 1e-300);
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("schedule defaults follow the stated orders") {
    TrainConfig c;
    c.T = 0.05;
    const TrainConfig r = resolve_schedule(c);
    const double l = std::log(20.0);
    CHECK(r.eta1 == doctest::Approx(0.05 * std::sqrt(0.05) * l).epsilon(1e-14));
    CHECK(r.eta2 == doctest::Approx(0.0025).epsilon(1e-14));
    CHECK(r.t2 == static_cast<long long>(std::ceil(5.0 / 0.05 * l)));
    CHECK(r.xi_radius == doctest::Approx(std::pow(0.05, 3) / std::pow(std::log(10.0), 2)).epsilon(1e-14));
    c.T = 0.0;
    CHECK_THROWS_AS(resolve_schedule(c), InvalidConfig);
    c.T = 2.0;  // log(1/T) < 0 makes the default eta1 negative
    CHECK_THROWS_AS(resolve_schedule(c), InvalidConfig);
}

TEST_CASE("n = 3 gradients at initialization") {
    const KnowledgeWorld w = build_world(3, 6, 0);
    const auto data = enumerate_ic_sequences(w, 2);
    for (double T : {0.02, 0.05, 0.2}) {
        const std::vector<double> v0(6, 1.0 / 6.0);
        const auto g = grad_v_step1(w, data, v0, T);
        CHECK(g[0] == doctest::Approx(-1.0 / (9.0 * T)).epsilon(1e-12));
        CHECK(g[2] == doctest::Approx(-1.0 / (9.0 * T)).epsilon(1e-12));
        CHECK(g[4] == doctest::Approx(2.0 / (9.0 * T)).epsilon(1e-12));
        for (int i : {1, 3, 5}) CHECK(std::abs(g[static_cast<std::size_t>(i)]) < 1e-12 / T);
        double vg = 0.0;
        for (int i = 0; i < 6; ++i) vg += v0[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
        CHECK(std::abs(vg) < 1e-12 / T);
        const auto lb = loss_closed_form(w, data, std::vector<double>(6, 0.0), std::vector<double>(7, 0.0), T);
        CHECK(lb.L1 == doctest::Approx(std::log(6.0)).epsilon(1e-12));
    }
}

TEST_CASE("step-2 gradient at omega = 0") {
    const KnowledgeWorld w = build_world(3, 6, 1);
    const std::vector<double> q0(7, 1.0 / 7.0);
    for (double T : {0.02, 0.1}) {
        for (const auto& seq : enumerate_ic_sequences(w, 2)) {
            const auto p2 = softmax_t(step2_logits_closed_form(w, seq, q0), T);
            const double p = p2[static_cast<std::size_t>(seq.answer(0) - w.n)];
            const auto g = grad_q_step2(w, seq, q0, T);
            const std::vector<double> expected{16 * p, 0, 16 * p, 0, 16 * (p - 1), 0, 2 * (3 * p - 1)};
            for (std::size_t i = 0; i < 7; ++i) CHECK(g[i] == doctest::Approx(expected[i] / (7 * T)).epsilon(1e-12));
        }
    }
}

TEST_CASE("analytic gradients match central differences") {
    Rng rng = Rng::derive(1, stream::test);
    const KnowledgeWorld w = build_world(8, 64, 1, 1'000'000, WorldMode::unconstrained);
    Rng drng = Rng::derive(1, stream::dataset);
    for (int t = 0; t < 20; ++t) {
        const double T = 0.02 + 0.18 * rng.uniform();
        const auto data = sample_dataset(w, 2, 16, drng);
        const auto theta = random_vec(6, rng, 1.0), omega = random_vec(7, rng, 1.0);
        const auto ga = grad_theta_analytic(w, data, theta, T);
        const auto gn = grad_numeric(
            [&](const std::vector<double>& x) { return loss_closed_form(w, data, x, omega, T).L1; }, theta, 1e-5);
        CHECK(rel_err(ga, gn) < 1e-5);
        const auto oa = grad_omega_analytic(w, data, omega, T);
        const auto on = grad_numeric(
            [&](const std::vector<double>& x) { return loss_closed_form(w, data, theta, x, T).L2; }, omega, 1e-5);
        CHECK(rel_err(oa, on) < 1e-5);
    }
}

TEST_CASE("closed-form, compiled and literal losses agree") {
    const KnowledgeWorld w = build_world(8, 64, 2, 1'000'000, WorldMode::unconstrained);
    const EmbeddingBasis b = make_basis(w, 2, EmbeddingMode::random_orthonormal, 2);
    const Model model = Model::make(w, b, construct_memory(w, b), 2);
    Rng rng = Rng::derive(2, stream::test);
    Rng drng = Rng::derive(2, stream::dataset);
    const auto data = sample_dataset(w, 2, 16, drng);
    const CompiledDataset cd = compile_dataset(w, data);
    for (int t = 0; t < 5; ++t) {
        AttnParams attn = AttnParams::partial_zero(2);
        attn.theta = random_vec(6, rng, 1.0);
        attn.omega = random_vec(7, rng, 1.0);
        const double T = 0.05;
        const LossBreakdown lit = loss(model, attn, data, T);
        const LossBreakdown cf = loss_closed_form(w, data, attn.theta, attn.omega, T);
        CHECK(lit.L1 == doctest::Approx(cf.L1).epsilon(1e-10));
        CHECK(lit.L2 == doctest::Approx(cf.L2).epsilon(1e-10));
        CHECK(lit.L == lit.L1 + lit.L2);
        CHECK(lit.L >= 0.0);
        // Per-sequence naive recomputation.
        double l1 = 0.0;
        for (const auto& seq : data) {
            const auto p = softmax_t(step1_logits_closed_form(w, seq, softmax_t(attn.theta, 1.0)), T);
            l1 -= std::log(p[static_cast<std::size_t>(seq.relation)]) / static_cast<double>(data.size());
        }
        CHECK(cf.L1 == doctest::Approx(l1).epsilon(1e-12));
        std::vector<double> gv, gq;
        const auto v = softmax_t(attn.theta, 1.0), q = softmax_t(attn.omega, 1.0);
        CHECK(compiled_step1(cd, v, T, &gv) == doctest::Approx(cf.L1).epsilon(1e-12));
        CHECK(compiled_step2(cd, q, T, &gq) == doctest::Approx(cf.L2).epsilon(1e-12));
        CHECK(rel_err(gv, grad_v_step1(w, data, v, T)) < 1e-12);
        CHECK(rel_err(gq, grad_q_step2(w, data, q, T)) < 1e-12);
    }
}

TEST_CASE("numeric gradient of a quadratic") {
    const std::vector<double> x{1.0, -2.0, 0.5};
    const auto g = grad_numeric(
        [](const std::vector<double>& y) {
            double s = 0.0;
            for (double t : y) s += t * t;
            return s;
        },
        x, 1e-4);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(g[i] - 2.0 * x[i]) < 1e-8);
}

TEST_CASE("stage 1 at n = 3 keeps the pair symmetry and decreases L1") {
    const KnowledgeWorld w = build_world(3, 6, 0);
    const auto data = enumerate_ic_sequences(w, 2);
    TrainConfig c;
    c.T = 0.05;
    c.eta1 = c.eta2 = c.T * c.T;
    c.t1 = 2000;
    c.t2 = 10;
    double prev = 1e300;
    bool monotone = true;
    double asym = 0.0;
    const RunTrace tr = run_pgd(c, w, data, [&](const IterateView& it) {
        if (it.stage != 1) return;
        asym = std::max({asym, std::abs(it.v[0] - it.v[2]), std::abs(it.v[1] - it.v[3])});
        if (it.iter > 0) monotone = monotone && it.L1 < prev;
        prev = it.L1;
    });
    CHECK(asym <= 1e-12);
    CHECK(monotone);
    CHECK(tr.stage1_iters == 2000);
    CHECK(tr.stage2_iters == 10);
    CHECK(tr.perturbation.size() == 13);
    double nrm = 0.0;
    for (double x : tr.perturbation) nrm += x * x;
    CHECK(std::sqrt(nrm) <= resolve_schedule(c).xi_radius);
    CHECK(tr.rows.front().iter == 0);
    CHECK(tr.rows.back().stage == 2);
}

TEST_CASE("the first gradient step already separates omega_5") {
    const KnowledgeWorld w = build_world(8, 56, 3, 1'000'000, WorldMode::affine);
    Rng drng = Rng::derive(3, stream::dataset);
    const auto data = sample_dataset(w, 2, 64, drng);
    TrainConfig c;
    c.T = 0.05;
    c.t1 = 1;
    c.t2 = 1;
    const RunTrace tr = run_pgd(c, w, data);
    const auto& om = tr.omega_stage1;
    double mx = -1e300;
    for (std::size_t i = 0; i < om.size(); ++i)
        if (i != 4) mx = std::max(mx, om[i]);
    const double eta1 = resolve_schedule(c).eta1;
    CHECK(om[4] - mx >= 32.0 * eta1 / (147.0 * c.T) - 1e-15);
}

TEST_CASE("theta-only perturbation and Adam determinism") {
    const KnowledgeWorld w = build_world(5, 12, 4);
    Rng drng = Rng::derive(4, stream::dataset);
    const auto data = sample_dataset(w, 2, 8, drng);
    TrainConfig c;
    c.T = 0.1;
    c.perturb_theta_only = true;
    c.t1 = 3;
    c.t2 = 3;
    CHECK(run_pgd(c, w, data).perturbation.size() == 6);
    c.adam_iters = 200;
    c.trace_every = 50;
    const RunTrace a = run_adam_partial(c, w, data), b = run_adam_partial(c, w, data);
    CHECK(a.theta == b.theta);
    CHECK(a.omega == b.omega);
    CHECK(a.rows.size() == 5);
    CHECK(a.rows.back().L1 + a.rows.back().L2 < a.rows.front().L1 + a.rows.front().L2);
}

}

TEST_SUITE("training") {

TEST_CASE("the n = 3 pairwise landscape is symmetric under x <-> 1/2 - x, not 1/4 - x") {
    const KnowledgeWorld w = build_world(3, 6, 0);
    const auto data = enumerate_ic_sequences(w, 2);
    const std::vector<double> omega(7, 0.0);
    auto l1 = [&](double x) {
        const std::vector<double> theta{std::log(x), std::log(x), std::log(0.5 - x), std::log(0.5 - x), kThetaFloor,
                                        kThetaFloor};
        return loss_closed_form(w, data, theta, omega, 0.05).L1;
    };
    for (double x : {0.05, 0.1, 0.155, 0.2}) CHECK(l1(x) == doctest::Approx(l1(0.5 - x)).epsilon(1e-12));
    for (double x : {0.05, 0.1, 0.2}) CHECK(std::abs(l1(x) - l1(0.25 - x)) > 1e-3);
}

}

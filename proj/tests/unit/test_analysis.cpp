#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "icr/analysis.hpp"
#include "icr/io.hpp"

using namespace icr;

TEST_SUITE("analysis") {

TEST_CASE("pairing metric and logit gap") {
    CHECK(*pairing_metric({0.25, 0.25, 0.25, 0.25, 0, 0}) == doctest::Approx(1.0));
    CHECK(*pairing_metric({0.4, 0.1, 0.3, 0.2, 0, 0}) == doctest::Approx(4.0));
    CHECK_FALSE(pairing_metric({0.5, 0.0, 0.5, 0.0, 0, 0}).has_value());
    CHECK(logit_gap({0.5, 0.5, 0, 0, 0, 0}) == doctest::Approx(0.5));
    CHECK(logit_gap({0.25, 0.25, 0.25, 0.25, 0, 0}) == 0.0);
    CHECK(logit_gap({0.5, 0.0, 0.0, 0.5, 0, 0}) == doctest::Approx(-0.5));
    CHECK(distance_to_saddle({0.25, 0.25, 0.25, 0.25, 0, 0}) == 0.0);
    CHECK(distance_to_saddle({0.5, 0.0, 0.25, 0.25, 0, 0}) == doctest::Approx(0.25));
}

TEST_CASE("the logit gap is the step-1 logit difference") {
    const KnowledgeWorld w = build_world(8, 56, 0, 1'000'000, WorldMode::affine);
    Rng rng = Rng::derive(0, stream::test);
    Rng drng = Rng::derive(0, stream::dataset);
    int checked = 0;
    for (int t = 0; t < 20000 && checked < 20; ++t) {
        const IcSequence seq = sample_ic_sequence(w, 2, drng);
        // A relation that swaps the two in-context pairs.
        int swapped = -1;
        for (int r = 0; r < w.m; ++r)
            if (w.answer(r, seq.subject(0)) == seq.answer(1) - w.n && w.answer(r, seq.subject(1)) == seq.answer(0) - w.n)
                swapped = r;
        if (swapped < 0) continue;
        std::vector<double> v(6);
        double s = 0.0;
        for (auto& x : v) s += (x = rng.uniform());
        for (auto& x : v) x /= s;
        const auto l = step1_logits_closed_form(w, seq, v);
        CHECK(l[static_cast<std::size_t>(seq.relation)] - l[static_cast<std::size_t>(swapped)] ==
              doctest::Approx(logit_gap(v)).epsilon(1e-12));
        ++checked;
    }
    CHECK(checked == 20);
}

TEST_CASE("second directional derivative is exact on quadratics") {
    auto f = [](const std::vector<double>& x) { return 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + x[1] * x[1] + x[0]; };
    const std::vector<double> x{0.3, -0.7};
    // d^T H d with H = [[6,-2],[-2,2]]
    CHECK(second_directional_derivative(f, x, {1.0, 0.0}) == doctest::Approx(6.0).epsilon(1e-7));
    CHECK(second_directional_derivative(f, x, {1.0, 1.0}) == doctest::Approx(4.0).epsilon(1e-7));
    CHECK(second_directional_derivative(f, x, {1.0, -1.0}) == doctest::Approx(12.0).epsilon(1e-7));
}

TEST_CASE("hessian probe agrees with a direct second difference") {
    const KnowledgeWorld w = build_world(3, 6, 0);
    const auto data = enumerate_ic_sequences(w, 2);
    const std::vector<double> theta{2.0, 2.0, 2.0, 2.0, -8.0, -8.0};
    const double T = 0.1;
    const double h = 1e-3;
    auto L = [&](double x) {
        std::vector<double> t = theta;
        const double dir[6] = {0.5, 0.5, -0.5, -0.5, 0, 0};
        for (int i = 0; i < 6; ++i) t[static_cast<std::size_t>(i)] += x * dir[i];
        return loss_closed_form(w, data, t, std::vector<double>(7, 0.0), T).L1;
    };
    const double direct = (L(h) - 2 * L(0) + L(-h)) / (h * h);
    CHECK(hessian_probe(w, data, theta, T) == doctest::Approx(direct).epsilon(1e-4));
}

TEST_CASE("first-step prediction at n = 3 has the symmetric pattern") {
    const KnowledgeWorld w = build_world(3, 6, 0);
    const auto data = enumerate_ic_sequences(w, 2);
    const double T = 0.05, eta = 1e-4;
    const FirstStepPrediction p = first_gd_step_prediction(w, data, T, eta);
    for (std::size_t i = 0; i < 6; ++i) CHECK(p.v_linear[i] == doctest::Approx(p.v_pattern[i]).epsilon(1e-14));
    CHECK(p.alpha > 0.0);
    CHECK(p.alpha == doctest::Approx(eta / (324.0 * T)).epsilon(1e-12));
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(p.v_linear[i] - p.v_actual[i]) <= p.envelope);
    CHECK(p.p_mis == 1.0);
}

TEST_CASE("diagnose is consistent with its parts") {
    const KnowledgeWorld w = build_world(5, 12, 1);
    Rng drng = Rng::derive(1, stream::dataset);
    const auto data = sample_dataset(w, 2, 16, drng);
    const std::vector<double> theta{1, 0.5, 1, 0.5, -1, -2}, omega{0, 0, 0, 0, 3, 0, 0};
    const Diagnostics d = diagnose(w, data, theta, omega, 0.1);
    CHECK(d.v == softmax_t(theta, 1.0));
    CHECK(d.q == softmax_t(omega, 1.0));
    CHECK(d.g == logit_gap(d.v));
    CHECK(d.loss.L1 == loss_closed_form(w, data, theta, omega, 0.1).L1);
    CHECK(d.acc1 >= 0.0);
    CHECK(d.acc2 == 1.0);
}

TEST_CASE("evaluation is pure and the closed form matches the literal path") {
    const KnowledgeWorld w = build_world(4, 8, 2);
    const EmbeddingBasis b = make_basis(w, 2, EmbeddingMode::random_orthonormal, 2);
    const Model model = Model::make(w, b, construct_memory(w, b), 2);
    AttnParams attn = AttnParams::partial_zero(2);
    attn.theta = {3, 0, 3, 0, -5, -5};
    attn.omega = {0, 0, 0, 0, 4, 0, 0};
    const EvalReport a = evaluate(model, attn, 0.05, EvalScope::all());
    const EvalReport c = evaluate_closed_form(w, attn.theta, attn.omega, 0.05, EvalScope::all());
    const EvalReport a2 = evaluate(model, attn, 0.05, EvalScope::all());
    CHECK(a.evaluated == ic_sequence_count(w, 2));
    CHECK(a.exhaustive);
    CHECK(a.acc1 == c.acc1);
    CHECK(a.acc2 == c.acc2);
    CHECK(a.acc_end_to_end == c.acc_end_to_end);
    CHECK(a.acc1 == a2.acc1);
    CHECK(a.acc2 == 1.0);
    // A sequence can be both confusing and mismatched.
    CHECK(a.confusing.count + a.mismatched.count + a.other.count >= a.evaluated);
    CHECK(a.other.count <= a.evaluated);
    const EvalReport s1 = evaluate_closed_form(w, attn.theta, attn.omega, 0.05, EvalScope::sample(50, 7));
    const EvalReport s2 = evaluate_closed_form(w, attn.theta, attn.omega, 0.05, EvalScope::sample(50, 7));
    CHECK(s1.evaluated == 50);
    CHECK_FALSE(s1.exhaustive);
    CHECK(s1.acc1 == s2.acc1);
}

TEST_CASE("heatmap CSV round trip") {
    const std::vector<double> v{0.3, 0.3, 0.2, 0.2, 0, 0}, q{0, 0, 0, 0, 1, 0, 0};
    const std::string csv = heatmap_csv(v, q);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    CHECK(line == "row,p1,p2,p3,p4,p5,p6,p7");
    auto parse = [&](const std::string& name) {
        std::getline(is, line);
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        CHECK(cell == name);
        std::vector<double> out;
        while (std::getline(ls, cell, ','))
            if (!cell.empty()) out.push_back(std::stod(cell));
        return out;
    };
    CHECK(parse("v") == v);
    CHECK(parse("q") == q);
    const std::string svg = heatmap_svg(v, q, "t");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    const auto dir = std::filesystem::temp_directory_path() / "icr_heatmap_test";
    std::filesystem::create_directories(dir);
    export_attention_heatmap(v, q, (dir / "attn").string());
    CHECK(read_text_file((dir / "attn.csv").string()) == csv);
    CHECK(std::filesystem::exists(dir / "attn.svg"));
    std::filesystem::remove_all(dir);
}

}

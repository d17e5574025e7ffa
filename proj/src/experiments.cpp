#include "icr/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "icr/error.hpp"
#include "icr/io.hpp"
#include "json_util.hpp"

namespace icr {

KnowledgeWorld make_world(const ExperimentConfig& cfg) {
    return build_world(cfg.world.n, cfg.world.m, cfg.world.seed, cfg.world.max_retries, cfg.world.mode);
}

std::vector<IcSequence> make_dataset(const ExperimentConfig& cfg, const KnowledgeWorld& world) {
    if (cfg.task.dataset_size == 0) return enumerate_ic_sequences(world, cfg.task.k);
    Rng rng = Rng::derive(cfg.task.dataset_seed, stream::dataset);
    return sample_dataset(world, cfg.task.k, cfg.task.dataset_size, rng);
}

EmbeddingBasis make_experiment_basis(const ExperimentConfig& cfg, const KnowledgeWorld& world) {
    return make_basis(world, cfg.task.k, cfg.model.embedding, cfg.model.embedding_seed);
}

FullState make_memory_state(const ExperimentConfig& cfg, const KnowledgeWorld& world, const EmbeddingBasis& basis,
                            std::optional<PretrainResult>* pretrained) {
    if (cfg.model.memory == MemoryKind::constructed) {
        FullState st;
        const auto D = static_cast<std::size_t>(basis.model_dim());
        st.kq = Matrix(D, D);
        st.mlp = to_token_space(construct_memory(world, basis), basis);
        return st;
    }
    PretrainConfig pc = cfg.pretrain;
    pc.d_mlp = cfg.model.d_mlp;
    PretrainResult res = pretrain(pc, world, basis);
    FullState st = res.state;  // the pretrained attention is kept as the fine-tuning start
    if (pretrained != nullptr) *pretrained = std::move(res);
    return st;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunResult r;
    r.world = make_world(cfg);
    r.data = make_dataset(cfg, r.world);
    if (r.data.empty()) throw InvalidConfig("the training set is empty");
    r.stats = dataset_stats(r.data);
    TrainConfig tc = cfg.train;
    tc.sample_count = r.data.size();
    if (cfg.model.attention == AttnMode::partial) {
        r.trace = tc.optimizer == Optimizer::gd ? run_pgd(tc, r.world, r.data) : run_adam_partial(tc, r.world, r.data);
        r.v = softmax_t(r.trace.theta, 1.0);
        r.q = softmax_t(r.trace.omega, 1.0);
        r.eval = evaluate_closed_form(r.world, r.trace.theta, r.trace.omega, tc.T, cfg.task.eval_scope);
        return r;
    }
    const EmbeddingBasis basis = make_experiment_basis(cfg, r.world);
    FullState init = make_memory_state(cfg, r.world, basis, &r.pretrained);
    FullRunResult fr = run_adam_full(tc, r.world, basis, std::move(init), r.data);
    r.v = fr.v_mean;
    r.q = fr.q_mean;
    r.eval = evaluate_full(r.world, basis, fr.state, tc.T, cfg.task.eval_scope);
    r.full = std::move(fr.state);
    return r;
}

// ---- state files --------------------------------------------------------------

Json state_to_json(const ExperimentConfig& cfg, const RunResult& r) {
    Json j;
    j["attention"] = to_string(cfg.model.attention);
    if (!r.full) {
        j["theta"] = r.trace.theta;
        j["omega"] = r.trace.omega;
        return j;
    }
    // The MLP is stored in token coordinates (key/value rows per token) so a
    // reload evaluates bit-identically.
    j["D"] = r.full->kq.rows;
    j["kq"] = r.full->kq.data;
    j["d"] = r.full->mlp.d;
    j["d_mlp"] = r.full->mlp.d_mlp;
    j["key"] = r.full->mlp.key.data;
    j["value"] = r.full->mlp.value.data;
    return j;
}

EvalReport evaluate_state(const ExperimentConfig& cfg, const Json& state) {
    cfg.validate();
    const std::string w = "state";
    const auto mode = attn_mode_from_string(detail::read_req<std::string>(state, "attention", w));
    const KnowledgeWorld world = make_world(cfg);
    if (mode == AttnMode::partial) {
        detail::check_keys(state, w, {"attention", "theta", "omega"});
        const auto theta = detail::read_req<std::vector<double>>(state, "theta", w);
        const auto omega = detail::read_req<std::vector<double>>(state, "omega", w);
        const auto k = static_cast<std::size_t>(cfg.task.k);
        if (theta.size() != 2 * k + 2 || omega.size() != 2 * k + 3)
            throw InvalidConfig("state: theta / omega sizes do not match task.k");
        return evaluate_closed_form(world, theta, omega, cfg.train.T, cfg.task.eval_scope);
    }
    detail::check_keys(state, w, {"attention", "D", "kq", "d", "d_mlp", "key", "value"});
    const EmbeddingBasis basis = make_experiment_basis(cfg, world);
    const auto D = detail::read_req<std::size_t>(state, "D", w);
    const auto d = detail::read_req<int>(state, "d", w);
    const auto dm = detail::read_req<int>(state, "d_mlp", w);
    if (D != static_cast<std::size_t>(basis.model_dim()) || d != basis.d || dm < 1)
        throw InvalidConfig("state: dimensions do not match the configured world");
    FullState st;
    st.kq = Matrix(D, D);
    st.kq.data = detail::read_req<std::vector<double>>(state, "kq", w);
    st.mlp.d = d;
    st.mlp.d_mlp = dm;
    st.mlp.key = Matrix(static_cast<std::size_t>(d), static_cast<std::size_t>(dm));
    st.mlp.value = st.mlp.key;
    st.mlp.key.data = detail::read_req<std::vector<double>>(state, "key", w);
    st.mlp.value.data = detail::read_req<std::vector<double>>(state, "value", w);
    const std::size_t nm = static_cast<std::size_t>(d) * static_cast<std::size_t>(dm);
    if (st.kq.data.size() != D * D || st.mlp.key.data.size() != nm || st.mlp.value.data.size() != nm)
        throw InvalidConfig("state: array sizes do not match the stated dimensions");
    return evaluate_full(world, basis, st, cfg.train.T, cfg.task.eval_scope);
}

Json run_summary(const ExperimentConfig& cfg, const RunResult& r) {
    Json j;
    j["world"] = Json{{"n", r.world.n}, {"m", r.world.m}, {"seed", r.world.seed}, {"mode", to_string(r.world.mode)},
                      {"identifiable", check_identifiability(r.world)}};
    j["dataset"] = Json{{"k", cfg.task.k},
                        {"size", r.data.size()},
                        {"p_conf", r.stats.p_conf},
                        {"p_mis", r.stats.p_mis}};
    j["memory"] = to_string(cfg.model.memory);
    j["attention_mode"] = to_string(cfg.model.attention);
    if (r.pretrained)
        j["pretrain"] = Json{{"epochs", r.pretrained->epochs},
                             {"accuracy", r.pretrained->accuracy},
                             {"final_loss", r.pretrained->final_loss}};
    if (!r.full) j["train"] = trace_summary(r.trace);
    Json att;
    att["v"] = r.v;
    att["q"] = r.q;
    if (cfg.task.k == 2) {
        const auto psi = pairing_metric(r.v);
        att["psi"] = psi ? Json(*psi) : Json("degenerate");
        att["g"] = logit_gap(r.v);
        att["distance_to_saddle"] = distance_to_saddle(r.v);
    }
    j["attention"] = std::move(att);
    j["eval"] = eval_report_to_json(r.eval);
    return j;
}

void write_run(const ExperimentConfig& cfg, const RunResult& r, const std::string& dir) {
    ensure_directory(dir);
    write_text_file(dir + "/config.json", dump_config(cfg));
    write_text_file(dir + "/dataset.json", dataset_to_json(r.world, r.data).dump() + "\n");
    write_text_file(dir + "/state.json", state_to_json(cfg, r).dump() + "\n");
    write_text_file(dir + "/summary.json", run_summary(cfg, r).dump(2) + "\n");
    write_text_file(dir + "/eval.json", eval_report_to_json(r.eval).dump(2) + "\n");
    if (cfg.outputs.emit_csv) {
        if (!r.full) write_text_file(dir + "/trace.csv", trace_to_csv(r.trace, cfg.task.k));
        write_text_file(dir + "/attention.csv", heatmap_csv(r.v, r.q));
    }
    if (cfg.outputs.emit_svg) {
        std::ostringstream title;
        title << "attention (n=" << cfg.world.n << ", |R|=" << cfg.world.m << ", k=" << cfg.task.k
              << ", T=" << cfg.train.T << ")";
        write_text_file(dir + "/attention.svg", heatmap_svg(r.v, r.q, title.str()));
    }
}

// ---- sweeps ---------------------------------------------------------------------

void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    const std::size_t nthreads = std::clamp<std::size_t>(workers == 0 ? 1 : workers, 1, count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg) {
    if (cfg.sweep.values.empty()) throw InvalidConfig("sweep.values is empty");
    cfg.validate();
    std::vector<int> series = cfg.sweep.series_m;
    if (series.empty()) series.push_back(cfg.world.m);
    std::vector<ExperimentConfig> out;
    for (int m : series) {
        for (double value : cfg.sweep.values) {
            ExperimentConfig c = cfg;
            c.world.m = m;
            c.sweep = {};
            if (cfg.sweep.axis == SweepAxis::seeds) {
                c.reseed(static_cast<std::uint64_t>(value));
                out.push_back(c);
                continue;
            }
            if (cfg.sweep.axis == SweepAxis::samples)
                c.task.dataset_size = static_cast<std::size_t>(value);
            else
                c.train.T = value;
            if (cfg.sweep.seeds.empty()) {
                out.push_back(c);
            } else {
                for (std::uint64_t s : cfg.sweep.seeds) {
                    ExperimentConfig cs = c;
                    cs.reseed(s);
                    out.push_back(cs);
                }
            }
        }
    }
    return out;
}

namespace {

double sweep_value(const ExperimentConfig& base, const ExperimentConfig& c) {
    switch (base.sweep.axis) {
        case SweepAxis::seeds: return static_cast<double>(c.world.seed);
        case SweepAxis::samples: return static_cast<double>(c.task.dataset_size);
        case SweepAxis::T: return c.train.T;
    }
    return 0.0;
}

std::string run_dir_name(std::size_t index, const ExperimentConfig& c, const std::string& axis, double value) {
    std::ostringstream os;
    os << "run" << index << "_m" << c.world.m << "_" << axis << format_double(value) << "_seed" << c.world.seed;
    return os.str();
}

}  // namespace

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, unsigned workers, const std::string& run_root) {
    const auto configs = expand_sweep(cfg);
    std::vector<SweepRow> rows(configs.size());
    parallel_for(configs.size(), workers, [&](std::size_t i) {
        const ExperimentConfig& c = configs[i];
        const RunResult r = run_experiment(c);
        SweepRow& row = rows[i];
        row.m = c.world.m;
        row.value = sweep_value(cfg, c);
        row.seed = c.world.seed;
        row.acc1 = r.eval.acc1;
        row.acc2 = r.eval.acc2;
        row.acc_end_to_end = r.eval.acc_end_to_end;
        row.acc1_consistent = r.eval.acc1_consistent;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.L1 = r.trace.rows.empty() ? nan : r.trace.rows.back().L1;
        row.L2 = r.trace.rows.empty() ? nan : r.trace.rows.back().L2;
        row.p_conf = r.stats.p_conf;
        row.p_mis = r.stats.p_mis;
        if (!run_root.empty()) write_run(c, r, run_root + "/" + run_dir_name(i, c, to_string(cfg.sweep.axis), row.value));
    });
    return rows;
}

std::string sweep_rows_csv(const std::vector<SweepRow>& rows) {
    std::string out = "m,value,seed,acc1,acc2,acc_end_to_end,acc1_consistent,L1,L2,p_conf,p_mis\n";
    for (const auto& r : rows) {
        out += std::to_string(r.m) + "," + format_double(r.value) + "," + std::to_string(r.seed) + "," +
               format_double(r.acc1) + "," + format_double(r.acc2) + "," + format_double(r.acc_end_to_end) + "," +
               format_double(r.acc1_consistent) + "," + format_double(r.L1) + "," + format_double(r.L2) + "," +
               format_double(r.p_conf) + "," + format_double(r.p_mis) + "\n";
    }
    return out;
}

namespace {

struct Aggregate {
    int m = 0;
    double value = 0.0;
    std::size_t count = 0;
    double acc1_mean = 0.0, acc1_std = 0.0, acc2_mean = 0.0, acc2_std = 0.0;
};

// Groups rows by (m, value) in first-appearance order.
std::vector<Aggregate> aggregate(const std::vector<SweepRow>& rows) {
    std::vector<Aggregate> out;
    std::vector<std::vector<const SweepRow*>> members;
    for (const auto& r : rows) {
        std::size_t g = 0;
        while (g < out.size() && !(out[g].m == r.m && out[g].value == r.value)) ++g;
        if (g == out.size()) {
            out.push_back({r.m, r.value});
            members.emplace_back();
        }
        members[g].push_back(&r);
    }
    for (std::size_t g = 0; g < out.size(); ++g) {
        auto& a = out[g];
        a.count = members[g].size();
        const auto n = static_cast<double>(a.count);
        for (const auto* r : members[g]) {
            a.acc1_mean += r->acc1 / n;
            a.acc2_mean += r->acc2 / n;
        }
        for (const auto* r : members[g]) {
            a.acc1_std += (r->acc1 - a.acc1_mean) * (r->acc1 - a.acc1_mean) / n;
            a.acc2_std += (r->acc2 - a.acc2_mean) * (r->acc2 - a.acc2_mean) / n;
        }
        a.acc1_std = std::sqrt(a.acc1_std);
        a.acc2_std = std::sqrt(a.acc2_std);
    }
    return out;
}

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string sweep_aggregate_csv(const std::vector<SweepRow>& rows) {
    std::string out = "m,value,count,acc1_mean,acc1_std,acc2_mean,acc2_std\n";
    for (const auto& a : aggregate(rows)) {
        out += std::to_string(a.m) + "," + format_double(a.value) + "," + std::to_string(a.count) + "," +
               format_double(a.acc1_mean) + "," + format_double(a.acc1_std) + "," + format_double(a.acc2_mean) + "," +
               format_double(a.acc2_std) + "\n";
    }
    return out;
}

std::string sweep_plot_svg(const std::vector<SweepRow>& rows, const std::string& x_label, const std::string& title) {
    const auto groups = aggregate(rows);
    std::vector<double> xs;
    std::vector<int> series;
    for (const auto& a : groups) {
        if (std::find(xs.begin(), xs.end(), a.value) == xs.end()) xs.push_back(a.value);
        if (std::find(series.begin(), series.end(), a.m) == series.end()) series.push_back(a.m);
    }
    std::sort(xs.begin(), xs.end());
    // Categorical x axis (sweep grids are usually geometric), y fixed to [0, 1].
    const double left = 70, top = 40, width = 520, height = 300;
    auto px = [&](double x) {
        const auto i = static_cast<double>(std::find(xs.begin(), xs.end(), x) - xs.begin());
        return xs.size() < 2 ? left + width / 2 : left + width * i / static_cast<double>(xs.size() - 1);
    };
    auto py = [&](double y) { return top + height * (1.0 - std::clamp(y, 0.0, 1.0)); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os.precision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"700\" height=\"420\" font-family=\"sans-serif\" "
          "font-size=\"12\">\n";
    os << "<rect width=\"700\" height=\"420\" fill=\"white\"/>\n";
    os << "<text x=\"350\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
    for (int t = 0; t <= 10; t += 2) {
        const double y = py(t / 10.0);
        os << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + width << "\" y2=\"" << y
           << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << t / 10.0 << "</text>\n";
    }
    for (double x : xs)
        os << "<text x=\"" << px(x) << "\" y=\"" << top + height + 18 << "\" text-anchor=\"middle\">"
           << format_double(x) << "</text>\n";
    os << "<text x=\"" << left + width / 2 << "\" y=\"" << top + height + 40 << "\" text-anchor=\"middle\">"
       << svg_escape(x_label) << "</text>\n";
    os << "<text x=\"18\" y=\"" << top + height / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << top + height / 2 << ")\">step-1 test accuracy</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = colors[s % 6];
        std::string path;
        for (const auto& a : groups) {
            if (a.m != series[s]) continue;
            const double x = px(a.value);
            path += (path.empty() ? "M" : " L") + format_double(x) + " " + format_double(py(a.acc1_mean));
            os << "<line x1=\"" << x << "\" y1=\"" << py(a.acc1_mean - a.acc1_std) << "\" x2=\"" << x << "\" y2=\""
               << py(a.acc1_mean + a.acc1_std) << "\" stroke=\"" << color << "\"/>\n";
            os << "<circle cx=\"" << x << "\" cy=\"" << py(a.acc1_mean) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        os << "<text x=\"" << left + width + 10 << "\" y=\"" << top + 14 + 16 * static_cast<double>(s)
           << "\" fill=\"" << color << "\">|R|=" << series[s] << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// ---- figure presets -----------------------------------------------------------

ExperimentConfig figure_config(const std::string& id, std::uint64_t seed) {
    ExperimentConfig c;
    c.world.n = 8;
    c.world.mode = WorldMode::unconstrained;  // |R| = 64 and 512 exceed the identifiable capacity n(n-1) = 56
    c.model.embedding = EmbeddingMode::random_orthonormal;
    c.train.optimizer = Optimizer::adam;
    c.train.adam_lr = 1e-3;
    c.reseed(seed);
    if (id == "2a" || id == "2b") {
        const bool b = id == "2b";
        c.world.m = b ? 512 : 64;
        c.task.k = b ? 3 : 2;
        c.train.T = b ? 0.01 : 0.05;
        c.task.dataset_size = 64;
        c.train.adam_iters = 30000;
        c.train.trace_every = 1000;
        c.model.memory = MemoryKind::constructed;
        c.model.attention = AttnMode::partial;
    } else if (id == "3") {
        c.world.m = 64;
        c.task.k = 2;
        c.train.T = 0.05;
        c.train.adam_iters = 20000;
        c.sweep.axis = SweepAxis::samples;
        c.sweep.values = {1, 2, 4, 8, 16, 32, 64};
        c.sweep.series_m = {64};
        for (std::uint64_t s = 0; s < 10; ++s) c.sweep.seeds.push_back(seed + s);
    } else if (id == "4a" || id == "4b") {
        const bool b = id == "4b";
        c.world.m = b ? 512 : 64;
        c.task.k = b ? 3 : 2;
        c.train.T = b ? 0.01 : 0.05;
        c.task.dataset_size = 64;
        c.task.eval_scope = EvalScope::sample(3000, seed);
        c.train.adam_iters = 8000;
        c.model.memory = MemoryKind::pretrained;
        c.model.attention = AttnMode::full;
        c.pretrain.T = 1.0;
        c.pretrain.check_every = 25;
    } else {
        throw InvalidConfig("unknown figure '" + id + "' (expected 2a, 2b, 3, 4a or 4b)");
    }
    return c;
}

Json run_figure(const std::string& id, std::uint64_t seed, const std::string& dir, unsigned workers) {
    const ExperimentConfig cfg = figure_config(id, seed);
    ensure_directory(dir);
    Json summary;
    summary["figure"] = id;
    summary["seed"] = seed;
    if (id == "3") {
        write_text_file(dir + "/config.json", dump_config(cfg));
        const auto rows = run_sweep(cfg, workers, dir + "/runs");
        write_text_file(dir + "/figure3_runs.csv", sweep_rows_csv(rows));
        write_text_file(dir + "/figure3.csv", sweep_aggregate_csv(rows));
        write_text_file(dir + "/figure3.svg",
                        sweep_plot_svg(rows, "training sequences", "step-1 test accuracy (mean +/- std over seeds)"));
        Json pts = Json::array();
        for (const auto& a : aggregate(rows))
            pts.push_back(Json{{"m", a.m}, {"samples", a.value}, {"acc1_mean", a.acc1_mean}, {"acc1_std", a.acc1_std},
                               {"acc2_mean", a.acc2_mean}});
        summary["points"] = std::move(pts);
        return summary;
    }
    const RunResult r = run_experiment(cfg);
    write_run(cfg, r, dir);
    summary["v"] = r.v;
    summary["q"] = r.q;
    summary["acc1"] = r.eval.acc1;
    summary["acc2"] = r.eval.acc2;
    if (r.pretrained) summary["pretrain_accuracy"] = r.pretrained->accuracy;
    return summary;
}

}  // namespace icr

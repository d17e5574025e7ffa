// icr: command-line driver for the in-context recall lab.
//
//   icr gen      [--config c.json] [--out dir] [--seed s]
//   icr memory   build|verify [--mlp file]
//   icr train    [--config c.json] [--out dir]
//   icr eval     --state state.json [--config c.json]
//   icr sweep    [--axis seeds|samples|T] [--values v1,v2,...] [--workers n]
//   icr figure   --figure 2a|2b|3|4a|4b [--workers n]
//
// Exit codes: 0 success, 1 verification failure or runtime error, 2 invalid
// configuration or arguments. The output root defaults to $ICR_OUT, then to
// the config's outputs.dir.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "icr/config.hpp"
#include "icr/error.hpp"
#include "icr/experiments.hpp"
#include "icr/io.hpp"
#include "icr/kernels.hpp"
#include "icr/memory.hpp"

namespace {

struct Globals {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned workers = 0;
};

icr::ExperimentConfig load(const Globals& g) {
    icr::ExperimentConfig cfg = g.config_path.empty() ? icr::ExperimentConfig{} : icr::load_config(g.config_path);
    if (g.seed) cfg.reseed(*g.seed);
    cfg.validate();
    return cfg;
}

std::string out_dir(const Globals& g, const icr::ExperimentConfig& cfg, const std::string& sub) {
    if (!g.out.empty()) return g.out;
    if (const char* env = std::getenv("ICR_OUT"); env != nullptr && *env != '\0') return std::string(env) + "/" + sub;
    return cfg.outputs.dir + "/" + sub;
}

unsigned worker_count(const Globals& g) {
    if (g.workers > 0) return g.workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

int cmd_gen(const Globals& g) {
    const auto cfg = load(g);
    const auto world = icr::make_world(cfg);
    const auto data = icr::make_dataset(cfg, world);
    const std::string dir = out_dir(g, cfg, "gen");
    icr::ensure_directory(dir);
    icr::write_text_file(dir + "/config.json", icr::dump_config(cfg));
    icr::write_text_file(dir + "/world.json", icr::world_to_json(world).dump() + "\n");
    icr::write_text_file(dir + "/dataset.json", icr::dataset_to_json(world, data).dump() + "\n");
    const auto st = icr::dataset_stats(data);
    std::printf("world n=%d m=%d identifiable=%s; dataset %zu sequences, p_conf=%.6f p_mis=%.6f -> %s\n", world.n,
                world.m, icr::check_identifiability(world) ? "yes" : "no", data.size(), st.p_conf, st.p_mis,
                dir.c_str());
    return 0;
}

int cmd_memory(const Globals& g, const std::string& action, const std::string& mlp_path_in) {
    const auto cfg = load(g);
    const auto world = icr::make_world(cfg);
    const auto basis = icr::make_experiment_basis(cfg, world);
    const std::string dir = out_dir(g, cfg, "memory");
    icr::ensure_directory(dir);
    const std::string mlp_path = mlp_path_in.empty() ? dir + "/mlp.json" : mlp_path_in;
    if (action == "build") {
        std::optional<icr::PretrainResult> pre;
        const icr::FullState st = icr::make_memory_state(cfg, world, basis, &pre);
        icr::MlpParams mlp = cfg.model.memory == icr::MemoryKind::constructed ? icr::construct_memory(world, basis)
                                                                              : icr::from_token_space(st.mlp, basis);
        icr::write_text_file(dir + "/config.json", icr::dump_config(cfg));
        icr::save_mlp(mlp, mlp_path);
        if (pre)
            std::printf("pretrained %lld epochs, triplet accuracy %.4f\n", pre->epochs, pre->accuracy);
        std::printf("memory d=%d d_MLP=%d -> %s\n", mlp.d, mlp.d_mlp, mlp_path.c_str());
        return 0;
    }
    const icr::MlpParams mlp = icr::load_mlp(mlp_path);
    if (mlp.d != basis.d) throw icr::InvalidConfig("MLP width d does not match the configured world");
    const icr::MemoryReport rep = icr::verify_memory(mlp, world, basis);
    icr::write_text_file(dir + "/memory_report.json", icr::memory_report_to_json(rep).dump(2) + "\n");
    std::printf("memory verify: %lld probes, %lld failures, %lld ties\n", rep.total_probes, rep.failures, rep.ties);
    for (const auto& ex : rep.failure_examples) std::printf("  %s\n", ex.c_str());
    return rep.failures == 0 ? 0 : 1;
}

int cmd_train(const Globals& g) {
    const auto cfg = load(g);
    const auto r = icr::run_experiment(cfg);
    const std::string dir = out_dir(g, cfg, "train");
    icr::write_run(cfg, r, dir);
    std::printf("train: acc1=%.4f acc2=%.4f end_to_end=%.4f (%lld sequences%s) -> %s\n", r.eval.acc1, r.eval.acc2,
                r.eval.acc_end_to_end, r.eval.evaluated, r.eval.exhaustive ? ", exhaustive" : ", sampled",
                dir.c_str());
    return 0;
}

int cmd_eval(const Globals& g, const std::string& state_path) {
    const auto cfg = load(g);
    const icr::Json state = icr::Json::parse(icr::read_text_file(state_path), nullptr, false);
    if (state.is_discarded()) throw icr::InvalidConfig("state file is not valid JSON");
    const icr::EvalReport rep = icr::evaluate_state(cfg, state);
    const std::string text = icr::eval_report_to_json(rep).dump(2) + "\n";
    if (!g.out.empty()) {
        icr::ensure_directory(g.out);
        icr::write_text_file(g.out + "/eval.json", text);
    }
    std::fputs(text.c_str(), stdout);
    return 0;
}

int cmd_sweep(const Globals& g, const std::string& axis, const std::vector<double>& values) {
    auto cfg = load(g);
    if (!axis.empty()) cfg.sweep.axis = icr::sweep_axis_from_string(axis);
    if (!values.empty()) cfg.sweep.values = values;
    cfg.validate();
    const std::string dir = out_dir(g, cfg, "sweep");
    icr::ensure_directory(dir);
    icr::write_text_file(dir + "/config.json", icr::dump_config(cfg));
    const auto rows = icr::run_sweep(cfg, worker_count(g), dir + "/runs");
    icr::write_text_file(dir + "/sweep_runs.csv", icr::sweep_rows_csv(rows));
    const std::string agg = icr::sweep_aggregate_csv(rows);
    icr::write_text_file(dir + "/sweep.csv", agg);
    if (cfg.outputs.emit_svg)
        icr::write_text_file(dir + "/sweep.svg",
                             icr::sweep_plot_svg(rows, icr::to_string(cfg.sweep.axis), "sweep over " +
                                                                                         icr::to_string(cfg.sweep.axis)));
    std::fputs(agg.c_str(), stdout);
    return 0;
}

int cmd_figure(const Globals& g, const std::string& id) {
    const std::uint64_t seed = g.seed.value_or(0);
    std::string dir = g.out;
    if (dir.empty()) {
        const char* env = std::getenv("ICR_OUT");
        dir = std::string(env != nullptr && *env != '\0' ? env : "runs") + "/figure" + id;
    }
    const icr::Json summary = icr::run_figure(id, seed, dir, worker_count(g));
    icr::write_text_file(dir + "/figure_summary.json", summary.dump(2) + "\n");
    std::printf("%s\n", summary.dump(2).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"In-context factual recall lab"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed_value = 0;
    app.add_option("--config", g.config_path, "experiment config (JSON)");
    app.add_option("--out", g.out, "output directory");
    auto* seed_opt = app.add_option("--seed", seed_value, "override every seed in the config");
    app.add_option("--workers", g.workers, "worker threads for sweeps (default: hardware threads)");
    app.fallthrough();

    auto* gen = app.add_subcommand("gen", "generate the world and dataset files");

    auto* memory = app.add_subcommand("memory", "build or verify the associative memory");
    std::string action, mlp_path;
    memory->add_option("action", action, "build | verify")->required()->check(CLI::IsMember({"build", "verify"}));
    memory->add_option("--mlp", mlp_path, "MLP file (.json or .csv)");

    auto* train = app.add_subcommand("train", "train attention and write the run directory");

    auto* eval = app.add_subcommand("eval", "evaluate a saved state");
    std::string state_path;
    eval->add_option("--state", state_path, "state.json from a train run")->required();

    auto* sweep = app.add_subcommand("sweep", "run a sweep over seeds, sample counts or temperatures");
    std::string axis;
    std::vector<double> values;
    sweep->add_option("--axis", axis, "seeds | samples | T");
    sweep->add_option("--values", values, "sweep values")->delimiter(',');

    auto* figure = app.add_subcommand("figure", "reproduce a figure experiment");
    std::string figure_id;
    figure->add_option("--figure,id", figure_id, "2a | 2b | 3 | 4a | 4b")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (seed_opt->count() > 0) g.seed = seed_value;

    try {
        if (gen->parsed()) return cmd_gen(g);
        if (memory->parsed()) return cmd_memory(g, action, mlp_path);
        if (train->parsed()) return cmd_train(g);
        if (eval->parsed()) return cmd_eval(g, state_path);
        if (sweep->parsed()) return cmd_sweep(g, axis, values);
        if (figure->parsed()) return cmd_figure(g, figure_id);
    } catch (const icr::InvalidConfig& e) {
        std::fprintf(stderr, "icr: %s\n", e.what());
        return 2;
    } catch (const icr::InvalidArgs& e) {
        std::fprintf(stderr, "icr: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "icr: %s\n", e.what());
        return 1;
    }
    return 2;
}

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "doctest.h"

#include "icr/config.hpp"
#include "icr/error.hpp"
#include "icr/experiments.hpp"
#include "icr/io.hpp"

using namespace icr;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.world.n = 5;
    c.world.m = 10;
    c.task.dataset_size = 16;
    c.train.adam_iters = 300;
    c.train.adam_lr = 0.05;
    c.train.trace_every = 100;
    return c;
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("icr_exp_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(ICR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("runs are a pure function of the config") {
    const ExperimentConfig c = small_config();
    const RunResult a = run_experiment(c), b = run_experiment(c);
    CHECK(a.trace.theta == b.trace.theta);
    CHECK(a.eval.acc1 == b.eval.acc1);
    CHECK(a.data.size() == 16);
    CHECK(a.eval.exhaustive);
    CHECK(a.eval.evaluated == ic_sequence_count(a.world, 2));
    // The stored state reproduces the evaluation.
    const EvalReport re = evaluate_state(c, Json::parse(state_to_json(c, a).dump()));
    CHECK(re.acc1 == a.eval.acc1);
    CHECK(re.acc2 == a.eval.acc2);
}

TEST_CASE("a one-seed sweep equals the single run") {
    ExperimentConfig c = small_config();
    c.reseed(3);
    const RunResult single = run_experiment(c);
    c.sweep.axis = SweepAxis::seeds;
    c.sweep.values = {3};
    const auto rows = run_sweep(c, 2);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].acc1 == single.eval.acc1);
    CHECK(rows[0].acc2 == single.eval.acc2);
    CHECK(rows[0].L1 == single.trace.rows.back().L1);
}

TEST_CASE("sweep expansion order and results are independent of the worker count") {
    ExperimentConfig c = small_config();
    c.train.adam_iters = 50;
    c.sweep.axis = SweepAxis::samples;
    c.sweep.values = {2, 8};
    c.sweep.series_m = {6, 10};
    c.sweep.seeds = {0, 1};
    const auto cfgs = expand_sweep(c);
    REQUIRE(cfgs.size() == 8);
    CHECK(cfgs[0].world.m == 6);
    CHECK(cfgs[0].task.dataset_size == 2);
    CHECK(cfgs[1].world.seed == 1);
    CHECK(cfgs[2].task.dataset_size == 8);
    CHECK(cfgs[4].world.m == 10);
    const auto r1 = run_sweep(c, 1), r4 = run_sweep(c, 4);
    for (std::size_t i = 0; i < r1.size(); ++i) {
        CHECK(r1[i].acc1 == r4[i].acc1);
        CHECK(r1[i].value == r4[i].value);
    }
    const std::string agg = sweep_aggregate_csv(r1);
    CHECK(agg.rfind("m,value,count", 0) == 0);
    c.sweep.values.clear();
    CHECK_THROWS_AS(expand_sweep(c), InvalidConfig);
}

TEST_CASE("parallel_for covers every index and rethrows the first failure") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 8, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    try {
        parallel_for(10, 4, [](std::size_t i) {
            if (i == 3 || i == 7) throw std::runtime_error("task " + std::to_string(i));
        });
        CHECK(false);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "task 3");
    }
}

TEST_CASE("written run directory") {
    const ExperimentConfig c = small_config();
    const RunResult r = run_experiment(c);
    const auto dir = scratch("run");
    write_run(c, r, dir.string());
    for (const char* f : {"config.json", "dataset.json", "state.json", "summary.json", "eval.json", "trace.csv",
                          "attention.csv", "attention.svg"})
        CHECK(std::filesystem::exists(dir / f));
    CHECK(read_text_file((dir / "attention.csv").string()) == heatmap_csv(r.v, r.q));
    CHECK(dump_config(load_config((dir / "config.json").string())) == dump_config(c));
    std::filesystem::remove_all(dir);
}

TEST_CASE("figure presets") {
    const ExperimentConfig a = figure_config("2a", 0);
    CHECK(a.world.n == 8);
    CHECK(a.world.m == 64);
    CHECK(a.task.k == 2);
    CHECK(a.train.T == 0.05);
    CHECK(a.task.dataset_size == 64);
    const ExperimentConfig b = figure_config("2b", 0);
    CHECK(b.world.m == 512);
    CHECK(b.task.k == 3);
    CHECK(b.train.T == 0.01);
    const ExperimentConfig f4 = figure_config("4a", 0);
    CHECK(f4.model.memory == MemoryKind::pretrained);
    CHECK(f4.model.attention == AttnMode::full);
    CHECK(figure_config("3", 0).sweep.axis == SweepAxis::samples);
    CHECK_THROWS_AS(figure_config("5", 0), InvalidConfig);
}

}

TEST_SUITE("cli") {

TEST_CASE("exit codes") {
    const auto dir = scratch("cli");
    const std::string out = " --out " + (dir / "o").string();
    CHECK(run_cli("") == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("gen" + out) == 0);
    CHECK(std::filesystem::exists(dir / "o" / "dataset.json"));
    write_text_file((dir / "bad.json").string(), R"({"world": {"n": 8, "bogus": 1}})");
    CHECK(run_cli("--config " + (dir / "bad.json").string() + " gen" + out) == 2);
    CHECK(run_cli("figure --figure 9" + out) == 2);
    CHECK(run_cli("memory build" + out) == 0);
    CHECK(run_cli("memory verify" + out) == 0);
    // Corrupt one entry of the memory and the verification must fail.
    Json mlp = Json::parse(read_text_file((dir / "o" / "mlp.json").string()));
    for (auto& x : mlp["V"]) x = 0.0;
    write_text_file((dir / "broken.json").string(), mlp.dump());
    CHECK(run_cli("memory verify --mlp " + (dir / "broken.json").string() + out) == 1);
    CHECK(run_cli("eval --state " + (dir / "missing.json").string()) == 1);
    std::filesystem::remove_all(dir);
}

}

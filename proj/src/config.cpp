#include "icr/config.hpp"

#include "icr/error.hpp"
#include "json_util.hpp"

namespace icr {

using detail::check_keys;
using detail::read_opt;

std::string to_string(MemoryKind m) { return m == MemoryKind::constructed ? "constructed" : "pretrained"; }

MemoryKind memory_kind_from_string(const std::string& s) {
    if (s == "constructed") return MemoryKind::constructed;
    if (s == "pretrained") return MemoryKind::pretrained;
    throw InvalidConfig("unknown memory kind '" + s + "'");
}

std::string to_string(AttnMode m) { return m == AttnMode::partial ? "partial" : "full"; }

AttnMode attn_mode_from_string(const std::string& s) {
    if (s == "partial") return AttnMode::partial;
    if (s == "full") return AttnMode::full;
    throw InvalidConfig("unknown attention mode '" + s + "'");
}

std::string to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::seeds: return "seeds";
        case SweepAxis::samples: return "samples";
        case SweepAxis::T: return "T";
    }
    return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "seeds") return SweepAxis::seeds;
    if (s == "samples") return SweepAxis::samples;
    if (s == "T") return SweepAxis::T;
    throw InvalidConfig("unknown sweep axis '" + s + "' (expected seeds, samples or T)");
}

void ExperimentConfig::reseed(std::uint64_t s) {
    world.seed = s;
    task.dataset_seed = s;
    task.eval_scope.seed = s;
    model.embedding_seed = s;
    train.seed = s;
    pretrain.seed = s;
}

void ExperimentConfig::validate() const {
    if (world.n < 3) throw InvalidConfig("world.n must be at least 3");
    if (world.m < 1) throw InvalidConfig("world.m must be positive");
    if (world.max_retries < 0) throw InvalidConfig("world.max_retries must be non-negative");
    if (task.k < 1 || task.k + 1 > world.n) throw InvalidConfig("task.k must satisfy 1 <= k <= n - 1");
    if (!task.eval_scope.exhaustive && task.eval_scope.samples == 0)
        throw InvalidConfig("task.eval_scope.samples must be positive when sampling");
    if (model.d_mlp < 0) throw InvalidConfig("model.d_mlp must be non-negative");
    if (model.attention == AttnMode::partial && model.memory != MemoryKind::constructed)
        throw InvalidConfig("partial attention training requires the constructed memory");
    if (train.optimizer == Optimizer::gd && model.attention != AttnMode::partial)
        throw InvalidConfig("gradient descent is only available for partial attention");
    if (train.adam_iters < 0) throw InvalidConfig("train.adam_iters must be non-negative");
    if (train.trace_every < 0) throw InvalidConfig("train.trace_every must be non-negative");
    resolve_schedule(train);
    if (!(pretrain.T > 0.0) || !(pretrain.lr > 0.0)) throw InvalidConfig("pretrain.T and pretrain.lr must be positive");
    if (pretrain.check_every < 1 || pretrain.max_epochs < 0)
        throw InvalidConfig("pretrain.check_every must be positive and max_epochs non-negative");
    for (double v : sweep.values) {
        if (sweep.axis == SweepAxis::T && !(v > 0.0)) throw InvalidConfig("sweep values for T must be positive");
        if (sweep.axis != SweepAxis::T && (v < 0.0 || v != static_cast<double>(static_cast<long long>(v))))
            throw InvalidConfig("sweep values for seeds / samples must be non-negative integers");
    }
    for (int m : sweep.series_m)
        if (m < 1) throw InvalidConfig("sweep.series_m entries must be positive");
}

Json config_to_json(const ExperimentConfig& c) {
    Json j;
    j["world"] = Json{{"n", c.world.n},
                      {"m", c.world.m},
                      {"seed", c.world.seed},
                      {"mode", to_string(c.world.mode)},
                      {"max_retries", c.world.max_retries}};
    j["task"] = Json{{"k", c.task.k},
                     {"dataset_size", c.task.dataset_size},
                     {"dataset_seed", c.task.dataset_seed},
                     {"eval_scope", Json{{"exhaustive", c.task.eval_scope.exhaustive},
                                         {"samples", c.task.eval_scope.samples},
                                         {"seed", c.task.eval_scope.seed}}}};
    j["model"] = Json{{"embedding", to_string(c.model.embedding)},
                      {"embedding_seed", c.model.embedding_seed},
                      {"d_mlp", c.model.d_mlp},
                      {"memory", to_string(c.model.memory)},
                      {"attention", to_string(c.model.attention)}};
    j["train"] = train_config_to_json(c.train);
    j["pretrain"] = Json{{"T", c.pretrain.T},
                         {"lr", c.pretrain.lr},
                         {"max_epochs", c.pretrain.max_epochs},
                         {"target_accuracy", c.pretrain.target_accuracy},
                         {"check_every", c.pretrain.check_every},
                         {"seed", c.pretrain.seed}};
    j["outputs"] = Json{{"dir", c.outputs.dir}, {"emit_svg", c.outputs.emit_svg}, {"emit_csv", c.outputs.emit_csv}};
    j["sweep"] = Json{{"axis", to_string(c.sweep.axis)}, {"values", c.sweep.values}, {"series_m", c.sweep.series_m},
                      {"seeds", c.sweep.seeds}};
    return j;
}

ExperimentConfig config_from_json(const Json& j) {
    check_keys(j, "config", {"world", "task", "model", "train", "pretrain", "outputs", "sweep"});
    ExperimentConfig c;
    std::string s;
    if (const auto it = j.find("world"); it != j.end()) {
        const std::string w = "world";
        check_keys(*it, w, {"n", "m", "seed", "mode", "max_retries"});
        read_opt(*it, "n", c.world.n, w);
        read_opt(*it, "m", c.world.m, w);
        read_opt(*it, "seed", c.world.seed, w);
        s = to_string(c.world.mode);
        read_opt(*it, "mode", s, w);
        try {
            c.world.mode = world_mode_from_string(s);
        } catch (const Error& e) {
            throw InvalidConfig(e.what());
        }
        read_opt(*it, "max_retries", c.world.max_retries, w);
    }
    if (const auto it = j.find("task"); it != j.end()) {
        const std::string w = "task";
        check_keys(*it, w, {"k", "dataset_size", "dataset_seed", "eval_scope"});
        read_opt(*it, "k", c.task.k, w);
        read_opt(*it, "dataset_size", c.task.dataset_size, w);
        read_opt(*it, "dataset_seed", c.task.dataset_seed, w);
        if (const auto e = it->find("eval_scope"); e != it->end()) {
            check_keys(*e, "task.eval_scope", {"exhaustive", "samples", "seed"});
            read_opt(*e, "exhaustive", c.task.eval_scope.exhaustive, "task.eval_scope");
            read_opt(*e, "samples", c.task.eval_scope.samples, "task.eval_scope");
            read_opt(*e, "seed", c.task.eval_scope.seed, "task.eval_scope");
        }
    }
    if (const auto it = j.find("model"); it != j.end()) {
        const std::string w = "model";
        check_keys(*it, w, {"embedding", "embedding_seed", "d_mlp", "memory", "attention"});
        s = to_string(c.model.embedding);
        read_opt(*it, "embedding", s, w);
        try {
            c.model.embedding = embedding_mode_from_string(s);
        } catch (const Error& e) {
            throw InvalidConfig(e.what());
        }
        read_opt(*it, "embedding_seed", c.model.embedding_seed, w);
        read_opt(*it, "d_mlp", c.model.d_mlp, w);
        s = to_string(c.model.memory);
        read_opt(*it, "memory", s, w);
        c.model.memory = memory_kind_from_string(s);
        s = to_string(c.model.attention);
        read_opt(*it, "attention", s, w);
        c.model.attention = attn_mode_from_string(s);
    }
    if (const auto it = j.find("train"); it != j.end()) c.train = train_config_from_json(*it);
    if (const auto it = j.find("pretrain"); it != j.end()) {
        const std::string w = "pretrain";
        check_keys(*it, w, {"T", "lr", "max_epochs", "target_accuracy", "check_every", "seed"});
        read_opt(*it, "T", c.pretrain.T, w);
        read_opt(*it, "lr", c.pretrain.lr, w);
        read_opt(*it, "max_epochs", c.pretrain.max_epochs, w);
        read_opt(*it, "target_accuracy", c.pretrain.target_accuracy, w);
        read_opt(*it, "check_every", c.pretrain.check_every, w);
        read_opt(*it, "seed", c.pretrain.seed, w);
    }
    if (const auto it = j.find("outputs"); it != j.end()) {
        const std::string w = "outputs";
        check_keys(*it, w, {"dir", "emit_svg", "emit_csv"});
        read_opt(*it, "dir", c.outputs.dir, w);
        read_opt(*it, "emit_svg", c.outputs.emit_svg, w);
        read_opt(*it, "emit_csv", c.outputs.emit_csv, w);
    }
    if (const auto it = j.find("sweep"); it != j.end()) {
        const std::string w = "sweep";
        check_keys(*it, w, {"axis", "values", "series_m", "seeds"});
        s = to_string(c.sweep.axis);
        read_opt(*it, "axis", s, w);
        c.sweep.axis = sweep_axis_from_string(s);
        read_opt(*it, "values", c.sweep.values, w);
        read_opt(*it, "series_m", c.sweep.series_m, w);
        read_opt(*it, "seeds", c.sweep.seeds, w);
    }
    c.pretrain.d_mlp = c.model.d_mlp;
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    return config_from_json(detail::parse_json(read_text_file(path), path));
}

std::string dump_config(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

}  // namespace icr

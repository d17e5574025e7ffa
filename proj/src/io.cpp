#include "icr/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icr/error.hpp"
#include "json_util.hpp"

namespace icr {

using detail::check_keys;
using detail::read_opt;
using detail::read_req;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + path + "'");
}

void ensure_directory(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory '" + path + "': " + ec.message());
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

// ---- world / dataset --------------------------------------------------------

Json world_to_json(const KnowledgeWorld& world) {
    Json j;
    j["n"] = world.n;
    j["m"] = world.m;
    j["seed"] = world.seed;
    j["mode"] = to_string(world.mode);
    Json table = Json::array();
    for (int r = 0; r < world.m; ++r) {
        Json row = Json::array();
        for (int s = 0; s < world.n; ++s) row.push_back(world.answer(r, s));
        table.push_back(std::move(row));
    }
    j["relation_table"] = std::move(table);
    return j;
}

namespace {

KnowledgeWorld world_from_fields(const Json& j, const std::string& where) {
    KnowledgeWorld w;
    w.n = read_req<int>(j, "n", where);
    w.m = read_req<int>(j, "m", where);
    w.seed = read_req<std::uint64_t>(j, "seed", where);
    std::string mode = "rejection";
    read_opt(j, "mode", mode, where);
    w.mode = world_mode_from_string(mode);
    if (w.n < 1 || w.m < 1) throw InvalidConfig(where + ": n and m must be positive");
    const auto table = read_req<std::vector<std::vector<int>>>(j, "relation_table", where);
    if (table.size() != static_cast<std::size_t>(w.m)) throw InvalidConfig(where + ": relation_table must have m rows");
    for (const auto& row : table) {
        if (row.size() != static_cast<std::size_t>(w.n))
            throw InvalidConfig(where + ": relation_table rows must have n entries");
        for (int a : row) {
            if (a < 0 || a >= w.n) throw InvalidConfig(where + ": answer index out of range");
            w.table.push_back(a);
        }
    }
    return w;
}

}  // namespace

KnowledgeWorld world_from_json(const Json& j) {
    check_keys(j, "world", {"n", "m", "seed", "mode", "relation_table"});
    return world_from_fields(j, "world");
}

Json dataset_to_json(const KnowledgeWorld& world, const std::vector<IcSequence>& data) {
    Json j = world_to_json(world);
    j["k"] = data.empty() ? 0 : data.front().k;
    Json seqs = Json::array();
    for (const auto& seq : data) {
        Json s;
        s["tokens"] = seq.tokens;
        s["relation"] = seq.relation;
        if (seq.has_flags) {
            s["flags"] = Json{{"confusing", seq.flags.confusing},
                              {"mismatched", seq.flags.mismatched},
                              {"two_matching_count", seq.flags.two_matching_count}};
        } else {
            s["flags"] = nullptr;
        }
        seqs.push_back(std::move(s));
    }
    j["sequences"] = std::move(seqs);
    return j;
}

std::pair<KnowledgeWorld, std::vector<IcSequence>> dataset_from_json(const Json& j) {
    check_keys(j, "dataset", {"n", "m", "seed", "mode", "relation_table", "k", "sequences"});
    KnowledgeWorld world = world_from_fields(j, "dataset");
    std::vector<IcSequence> data;
    const auto it = j.find("sequences");
    if (it == j.end() || !it->is_array()) throw InvalidConfig("dataset: 'sequences' must be an array");
    for (const auto& s : *it) {
        check_keys(s, "sequence", {"tokens", "relation", "flags"});
        const auto tokens = read_req<std::vector<int>>(s, "tokens", "sequence");
        const int relation = read_req<int>(s, "relation", "sequence");
        if (tokens.size() < 4 || tokens.size() % 2 != 0 || relation < 0 || relation >= world.m)
            throw InvalidConfig("sequence: malformed tokens or relation");
        const int k = static_cast<int>(tokens.size()) / 2 - 1;
        std::vector<int> subjects;
        for (int i = 0; i <= k; ++i) subjects.push_back(tokens[static_cast<std::size_t>(2 * i)]);
        for (int sub : subjects)
            if (!world.is_subject(sub)) throw InvalidConfig("sequence: expected a subject token");
        IcSequence seq = make_ic_sequence(world, relation, subjects);
        if (seq.tokens != tokens) throw InvalidConfig("sequence: tokens disagree with the relation table");
        data.push_back(std::move(seq));
    }
    return {std::move(world), std::move(data)};
}

// ---- MLP --------------------------------------------------------------------

Json mlp_to_json(const MlpParams& mlp) {
    Json j;
    j["d"] = mlp.d;
    j["d_MLP"] = mlp.d_mlp;
    j["constructed"] = mlp.constructed;
    j["W"] = mlp.W.data;
    j["V"] = mlp.V.data;
    return j;
}

MlpParams mlp_from_json(const Json& j) {
    check_keys(j, "mlp", {"d", "d_MLP", "constructed", "W", "V"});
    MlpParams mlp;
    mlp.d = read_req<int>(j, "d", "mlp");
    mlp.d_mlp = read_req<int>(j, "d_MLP", "mlp");
    read_opt(j, "constructed", mlp.constructed, "mlp");
    if (mlp.d < 1 || mlp.d_mlp < 1) throw InvalidConfig("mlp: d and d_MLP must be positive");
    const auto rows = static_cast<std::size_t>(mlp.d_mlp), cols = static_cast<std::size_t>(mlp.d);
    mlp.W = Matrix(rows, cols);
    mlp.V = Matrix(rows, cols);
    mlp.W.data = read_req<std::vector<double>>(j, "W", "mlp");
    mlp.V.data = read_req<std::vector<double>>(j, "V", "mlp");
    if (mlp.W.data.size() != rows * cols || mlp.V.data.size() != rows * cols)
        throw InvalidConfig("mlp: W and V must hold d_MLP * d values");
    return mlp;
}

std::string mlp_to_csv(const MlpParams& mlp) {
    std::string out = std::to_string(mlp.d) + "," + std::to_string(mlp.d_mlp) + "," +
                      (mlp.constructed ? "1" : "0") + "\n";
    for (const auto* mat : {&mlp.W, &mlp.V}) {
        const char* tag = mat == &mlp.W ? "W" : "V";
        for (std::size_t r = 0; r < mat->rows; ++r) {
            out += tag;
            out += "," + std::to_string(r);
            for (std::size_t c = 0; c < mat->cols; ++c) out += "," + format_double((*mat)(r, c));
            out += "\n";
        }
    }
    return out;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s) {
    double x = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw InvalidConfig("mlp csv: bad number '" + s + "'");
    return x;
}

long long parse_int(const std::string& s) {
    long long x = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw InvalidConfig("mlp csv: bad integer '" + s + "'");
    return x;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

MlpParams mlp_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw InvalidConfig("mlp csv: empty file");
    const auto head = split(line, ',');
    if (head.size() != 3) throw InvalidConfig("mlp csv: header must be d,d_mlp,constructed");
    MlpParams mlp;
    mlp.d = static_cast<int>(parse_int(head[0]));
    mlp.d_mlp = static_cast<int>(parse_int(head[1]));
    mlp.constructed = parse_int(head[2]) != 0;
    if (mlp.d < 1 || mlp.d_mlp < 1) throw InvalidConfig("mlp csv: d and d_mlp must be positive");
    const auto rows = static_cast<std::size_t>(mlp.d_mlp), cols = static_cast<std::size_t>(mlp.d);
    mlp.W = Matrix(rows, cols);
    mlp.V = Matrix(rows, cols);
    std::vector<bool> seen(2 * rows, false);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split(line, ',');
        if (f.size() != cols + 2 || (f[0] != "W" && f[0] != "V")) throw InvalidConfig("mlp csv: malformed row");
        const long long r = parse_int(f[1]);
        if (r < 0 || static_cast<std::size_t>(r) >= rows) throw InvalidConfig("mlp csv: row index out of range");
        Matrix& dst = f[0] == "W" ? mlp.W : mlp.V;
        seen[(f[0] == "W" ? 0 : rows) + static_cast<std::size_t>(r)] = true;
        for (std::size_t c = 0; c < cols; ++c) dst(static_cast<std::size_t>(r), c) = parse_double(f[c + 2]);
    }
    for (bool b : seen)
        if (!b) throw InvalidConfig("mlp csv: missing rows");
    return mlp;
}

void save_mlp(const MlpParams& mlp, const std::string& path) {
    if (ends_with(path, ".csv"))
        write_text_file(path, mlp_to_csv(mlp));
    else
        write_text_file(path, mlp_to_json(mlp).dump() + "\n");
}

MlpParams load_mlp(const std::string& path) {
    const std::string text = read_text_file(path);
    if (ends_with(path, ".csv")) return mlp_from_csv(text);
    return mlp_from_json(detail::parse_json(text, path));
}

// ---- traces -----------------------------------------------------------------

std::string trace_csv_header(int k) {
    std::string h = "iteration,stage,L1,L2";
    for (int i = 1; i <= 2 * k + 2; ++i) h += ",v" + std::to_string(i);
    for (int i = 1; i <= 2 * k + 3; ++i) h += ",q" + std::to_string(i);
    return h + ",psi,g,acc1,acc2\n";
}

std::string trace_csv_row(const TraceRow& row) {
    std::string s = std::to_string(row.iter) + "," + std::to_string(row.stage) + "," + format_double(row.L1) + "," +
                    format_double(row.L2);
    for (double x : row.v) s += "," + format_double(x);
    for (double x : row.q) s += "," + format_double(x);
    s += "," + (std::isnan(row.psi) ? std::string("degenerate") : format_double(row.psi));
    s += "," + format_double(row.g) + "," + format_double(row.acc1) + "," + format_double(row.acc2) + "\n";
    return s;
}

std::string trace_to_csv(const RunTrace& trace, int k) {
    std::string out = trace_csv_header(k);
    for (const auto& row : trace.rows) out += trace_csv_row(row);
    return out;
}

Json train_config_to_json(const TrainConfig& c) {
    Json j;
    j["optimizer"] = to_string(c.optimizer);
    j["T"] = c.T;
    j["eta1"] = c.eta1;
    j["eta2"] = c.eta2;
    j["t1"] = c.t1;
    j["t2"] = c.t2;
    j["xi_radius"] = c.xi_radius;
    j["delta"] = c.delta;
    j["c_eta1"] = c.c_eta1;
    j["c_eta2"] = c.c_eta2;
    j["c_xi"] = c.c_xi;
    j["c_t2"] = c.c_t2;
    j["perturb_theta_only"] = c.perturb_theta_only;
    j["grad_tol"] = c.grad_tol;
    j["sample_count"] = c.sample_count;
    j["seed"] = c.seed;
    j["adam_lr"] = c.adam_lr;
    j["adam_iters"] = c.adam_iters;
    j["trace_every"] = c.trace_every;
    return j;
}

TrainConfig train_config_from_json(const Json& j) {
    const std::string w = "train";
    check_keys(j, w,
               {"optimizer", "T", "eta1", "eta2", "t1", "t2", "xi_radius", "delta", "c_eta1", "c_eta2", "c_xi",
                "c_t2", "perturb_theta_only", "grad_tol", "sample_count", "seed", "adam_lr", "adam_iters",
                "trace_every"});
    TrainConfig c;
    std::string opt = to_string(c.optimizer);
    read_opt(j, "optimizer", opt, w);
    c.optimizer = optimizer_from_string(opt);
    read_opt(j, "T", c.T, w);
    read_opt(j, "eta1", c.eta1, w);
    read_opt(j, "eta2", c.eta2, w);
    read_opt(j, "t1", c.t1, w);
    read_opt(j, "t2", c.t2, w);
    read_opt(j, "xi_radius", c.xi_radius, w);
    read_opt(j, "delta", c.delta, w);
    read_opt(j, "c_eta1", c.c_eta1, w);
    read_opt(j, "c_eta2", c.c_eta2, w);
    read_opt(j, "c_xi", c.c_xi, w);
    read_opt(j, "c_t2", c.c_t2, w);
    read_opt(j, "perturb_theta_only", c.perturb_theta_only, w);
    read_opt(j, "grad_tol", c.grad_tol, w);
    read_opt(j, "sample_count", c.sample_count, w);
    read_opt(j, "seed", c.seed, w);
    read_opt(j, "adam_lr", c.adam_lr, w);
    read_opt(j, "adam_iters", c.adam_iters, w);
    read_opt(j, "trace_every", c.trace_every, w);
    return c;
}

Json trace_summary(const RunTrace& trace) {
    Json j;
    j["config"] = train_config_to_json(trace.config);
    j["stage1_iters"] = trace.stage1_iters;
    j["stage2_iters"] = trace.stage2_iters;
    j["theta"] = trace.theta;
    j["omega"] = trace.omega;
    if (!trace.theta_stage1.empty()) {
        j["theta_stage1"] = trace.theta_stage1;
        j["omega_stage1"] = trace.omega_stage1;
        j["perturbation"] = trace.perturbation;
    }
    if (!trace.rows.empty()) {
        const TraceRow& last = trace.rows.back();
        Json f;
        f["iteration"] = last.iter;
        f["L1"] = last.L1;
        f["L2"] = last.L2;
        f["v"] = last.v;
        f["q"] = last.q;
        f["psi"] = std::isnan(last.psi) ? Json("degenerate") : Json(last.psi);
        f["g"] = last.g;
        f["acc1"] = last.acc1;
        f["acc2"] = last.acc2;
        j["final"] = std::move(f);
    }
    return j;
}

// ---- reports ----------------------------------------------------------------

Json memory_report_to_json(const MemoryReport& rep) {
    Json j;
    j["total_probes"] = rep.total_probes;
    j["failures"] = rep.failures;
    j["ties"] = rep.ties;
    j["failures_by_direction"] = Json{{"subject", rep.failures_by_direction[0]},
                                      {"relation", rep.failures_by_direction[1]},
                                      {"answer", rep.failures_by_direction[2]}};
    j["failure_examples"] = rep.failure_examples;
    return j;
}

Json eval_report_to_json(const EvalReport& rep) {
    auto cls = [](const ClassAccuracy& c) {
        Json j;
        j["count"] = c.count;
        j["correct1"] = c.correct1;
        j["acc1"] = c.count > 0 ? Json(static_cast<double>(c.correct1) / static_cast<double>(c.count)) : Json();
        return j;
    };
    Json j;
    j["evaluated"] = rep.evaluated;
    j["exhaustive"] = rep.exhaustive;
    j["acc1"] = rep.acc1;
    j["acc2"] = rep.acc2;
    j["acc_end_to_end"] = rep.acc_end_to_end;
    j["acc1_consistent"] = rep.acc1_consistent;
    j["ties1"] = rep.ties1;
    j["ties2"] = rep.ties2;
    j["by_class"] = Json{{"confusing", cls(rep.confusing)}, {"mismatched", cls(rep.mismatched)},
                         {"other", cls(rep.other)}};
    return j;
}

}  // namespace icr

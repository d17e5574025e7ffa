#pragma once
// Serialization: world + dataset JSON, MLP JSON / CSV, run-trace CSV and JSON
// summaries, memory and evaluation reports.
//
// CSV schemas (numbers use the shortest text that round-trips exactly):
//   trace.csv   iteration,stage,L1,L2,v1..v{2k+2},q1..q{2k+3},psi,g,acc1,acc2
//               psi is the literal string "degenerate" when undefined.
//   mlp.csv     line 1: d,d_mlp,constructed
//               then d_mlp lines "W,<row>,<d values>" and d_mlp lines "V,<row>,<d values>"
//   heatmap     see analysis.hpp (rows "v" and "q").

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "icr/analysis.hpp"
#include "icr/memory.hpp"
#include "icr/training.hpp"
#include "icr/vocab_data.hpp"

namespace icr {

using Json = nlohmann::ordered_json;

// Whole-file helpers; throw IoError.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
// Creates the directory (and parents); throws IoError.
void ensure_directory(const std::string& path);

Json world_to_json(const KnowledgeWorld& world);
KnowledgeWorld world_from_json(const Json& j);

// {n, m, seed, mode, k, relation_table, sequences: [{tokens, relation, flags}]}
// flags is null for k != 2.
Json dataset_to_json(const KnowledgeWorld& world, const std::vector<IcSequence>& data);
std::pair<KnowledgeWorld, std::vector<IcSequence>> dataset_from_json(const Json& j);

// {d, d_MLP, constructed, W: row-major, V: row-major}
Json mlp_to_json(const MlpParams& mlp);
MlpParams mlp_from_json(const Json& j);
std::string mlp_to_csv(const MlpParams& mlp);
MlpParams mlp_from_csv(const std::string& text);
// Dispatches on the file extension: .csv is CSV, anything else JSON.
void save_mlp(const MlpParams& mlp, const std::string& path);
MlpParams load_mlp(const std::string& path);

std::string trace_csv_header(int k);
std::string trace_csv_row(const TraceRow& row);
std::string trace_to_csv(const RunTrace& trace, int k);
Json trace_summary(const RunTrace& trace);

// Every TrainConfig field, schedule constants included.
Json train_config_to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys throw InvalidConfig.
TrainConfig train_config_from_json(const Json& j);

Json memory_report_to_json(const MemoryReport& rep);
Json eval_report_to_json(const EvalReport& rep);

// Shortest text that parses back to the same double.
std::string format_double(double x);

}  // namespace icr

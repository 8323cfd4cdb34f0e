#pragma once

#include <string>

#include "structvar/bn.hpp"
#include "structvar/cg.hpp"
#include "structvar/hidden.hpp"
#include "structvar/structure.hpp"

namespace structvar {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kModelFormatVersion = "1";

struct ModelFile {
  FactorizedModel model;
  Evidence evidence;
};

// Model files: {"variables": [{"name", "cardinality"}], "factors":
// [{"scope": [names], "values": [row-major], "kind": "cpt"|"potential",
// "child": name}], "evidence": {name: state}}. Scope order in the file is
// authoritative; tables are row-major with the last scope variable fastest.
ModelFile load_model_file(const std::string& path);
ModelFile parse_model_json(const std::string& text);
std::string model_to_json(const FactorizedModel& m, const Evidence& ev);
void save_model_file(const std::string& path, const FactorizedModel& m, const Evidence& ev);

// Structure files: {"hidden": [{"name", "cardinality"}], "families":
// [{"child", "parents": [names]}], "potentials": [[names]]}.
QStructure load_structure_file(const std::string& path);
QStructure parse_structure_json(const std::string& text);
std::string structure_to_json(const QStructure& s);
void save_structure_file(const std::string& path, const QStructure& s);

// Evidence given inline ("{\"O1\": 0}") or as a path to a JSON file.
Evidence parse_evidence_arg(const std::string& arg, const VariablePool& pool);

std::string fit_result_to_json(const VariablePool& pool, const BnFitResult& r);
std::string fit_result_to_json(const VariablePool& pool, const CgFitResult& r);
std::string fit_result_to_json(const VariablePool& pool, const HiddenFitResult& r);

// 17 significant digits, for oracle-comparable text output.
std::string format_sig17(double v);
// Shortest round-trip decimal form (CSV fields).
std::string format_shortest(double v);

// FNV-1a 64 over a file's bytes, hex-encoded (manifest input digests).
std::string file_digest(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace structvar

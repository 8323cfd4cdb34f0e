#include "structvar/model_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace structvar {

using nlohmann::json;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StructuralError("cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StructuralError("cannot write file '" + path + "'");
  out << content;
}

std::string format_sig17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string file_digest(const std::string& path) {
  std::string bytes = read_text_file(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

json parse_json(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw StructuralError(std::string("malformed JSON in ") + what);
  return j;
}

}  // namespace

ModelFile parse_model_json(const std::string& text) {
  json j = parse_json(text, "model file");
  ModelFile out;
  if (!j.contains("variables") || !j["variables"].is_array())
    throw StructuralError("model file lacks a 'variables' array");
  for (const auto& v : j["variables"])
    out.model.pool.add(v.at("name").get<std::string>(), v.at("cardinality").get<int>());

  bool all_cpt = true;
  std::set<VarId> children;
  for (const auto& f : j.value("factors", json::array())) {
    ModelFactor mf;
    std::vector<VarId> scope_vars;
    for (const auto& n : f.at("scope"))
      scope_vars.push_back(out.model.pool.require(n.get<std::string>()));
    Scope scope(scope_vars, out.model.pool);
    std::vector<double> values = f.at("values").get<std::vector<double>>();
    if (static_cast<std::int64_t>(values.size()) != scope.size())
      throw StructuralError("factor value count does not match its scope");
    mf.table = TableFactor(std::move(scope), std::move(values));
    std::string kind = f.value("kind", "potential");
    if (kind == "cpt") {
      mf.is_cpt = true;
      mf.child = out.model.pool.require(f.at("child").get<std::string>());
      children.insert(mf.child);
    } else if (kind == "potential") {
      mf.is_cpt = false;
      all_cpt = false;
    } else {
      throw StructuralError("factor kind must be 'cpt' or 'potential'");
    }
    out.model.factors.push_back(std::move(mf));
  }
  out.model.directed =
      all_cpt && static_cast<int>(children.size()) == out.model.pool.size();
  out.model.log_z = 0.0;
  validate_model(out.model);
  if (!out.model.directed) out.model.log_z = log_partition(out.model);

  json ev_obj = j.value("evidence", json::object());
  for (const auto& [name, state] : ev_obj.items()) {
    VarId v = out.model.pool.require(name);
    int s = state.get<int>();
    if (s < 0 || s >= out.model.pool.card(v))
      throw StructuralError("evidence state out of range for '" + name + "'");
    out.evidence.set(v, s);
  }
  return out;
}

ModelFile load_model_file(const std::string& path) {
  return parse_model_json(read_text_file(path));
}

std::string model_to_json(const FactorizedModel& m, const Evidence& ev) {
  json j;
  j["variables"] = json::array();
  for (const auto& v : m.pool.variables())
    j["variables"].push_back({{"name", v.name}, {"cardinality", v.cardinality}});
  j["factors"] = json::array();
  for (const auto& f : m.factors) {
    json jf;
    jf["scope"] = json::array();
    for (VarId v : f.table.scope.vars()) jf["scope"].push_back(m.pool.name(v));
    jf["values"] = f.table.values;
    jf["kind"] = f.is_cpt ? "cpt" : "potential";
    if (f.is_cpt) jf["child"] = m.pool.name(f.child);
    j["factors"].push_back(std::move(jf));
  }
  j["evidence"] = json::object();
  for (const auto& [v, s] : ev.bindings()) j["evidence"][m.pool.name(v)] = s;
  return j.dump(2) + "\n";
}

void save_model_file(const std::string& path, const FactorizedModel& m, const Evidence& ev) {
  write_text_file(path, model_to_json(m, ev));
}

QStructure parse_structure_json(const std::string& text) {
  json j = parse_json(text, "structure file");
  QStructure s;
  for (const auto& h : j.value("hidden", json::array()))
    s.hidden.push_back(
        HiddenVarDecl{h.at("name").get<std::string>(), h.at("cardinality").get<int>()});
  for (const auto& f : j.value("families", json::array())) {
    FamilyDecl d;
    d.child = f.at("child").get<std::string>();
    for (const auto& pn : f.value("parents", json::array()))
      d.parents.push_back(pn.get<std::string>());
    s.families.push_back(std::move(d));
  }
  for (const auto& pot : j.value("potentials", json::array())) {
    std::vector<std::string> scope;
    for (const auto& n : pot) scope.push_back(n.get<std::string>());
    s.potentials.push_back(std::move(scope));
  }
  return s;
}

QStructure load_structure_file(const std::string& path) {
  return parse_structure_json(read_text_file(path));
}

std::string structure_to_json(const QStructure& s) {
  json j;
  j["hidden"] = json::array();
  for (const auto& h : s.hidden)
    j["hidden"].push_back({{"name", h.name}, {"cardinality", h.cardinality}});
  j["families"] = json::array();
  for (const auto& f : s.families)
    j["families"].push_back({{"child", f.child}, {"parents", f.parents}});
  j["potentials"] = s.potentials;
  return j.dump(2) + "\n";
}

void save_structure_file(const std::string& path, const QStructure& s) {
  write_text_file(path, structure_to_json(s));
}

Evidence parse_evidence_arg(const std::string& arg, const VariablePool& pool) {
  std::string text = arg;
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || text[first] != '{') text = read_text_file(arg);
  json j = parse_json(text, "evidence");
  Evidence ev;
  for (const auto& [name, state] : j.items()) {
    VarId v = pool.require(name);
    int s = state.get<int>();
    if (s < 0 || s >= pool.card(v))
      throw StructuralError("evidence state out of range for '" + name + "'");
    ev.set(v, s);
  }
  return ev;
}

namespace {

json family_json(const VariablePool& pool, const DirectedFamily& fam,
                 const std::vector<double>& values) {
  json jf;
  jf["child"] = pool.name(fam.child);
  jf["parents"] = json::array();
  for (VarId v : fam.parents.vars()) jf["parents"].push_back(pool.name(v));
  jf["values"] = values;
  return jf;
}

json common_fit_json(const std::vector<double>& trace, double bound, int restart_index,
                     bool degenerate, const std::vector<std::string>& diagnostics) {
  json j;
  j["bound"] = bound;
  j["restart_index"] = restart_index;
  j["trace"] = trace;
  j["degenerate"] = degenerate;
  j["diagnostics"] = diagnostics;
  return j;
}

}  // namespace

std::string fit_result_to_json(const VariablePool& pool, const BnFitResult& r) {
  json j = common_fit_json(r.trace, r.bound, r.restart_index, r.degenerate, r.diagnostics);
  j["method"] = "bn";
  j["theta"] = json::array();
  for (const auto& fam : r.approx.families())
    j["theta"].push_back(family_json(pool, fam, fam.cpt.values));
  return j.dump(2) + "\n";
}

std::string fit_result_to_json(const VariablePool& pool, const CgFitResult& r) {
  json j = common_fit_json(r.trace, r.bound, r.restart_index, r.degenerate, r.diagnostics);
  j["method"] = "cg";
  j["theta"] = json::array();
  for (const auto& fam : r.approx.families())
    j["theta"].push_back(family_json(pool, fam, fam.cpt.values));
  j["psi"] = json::array();
  for (const auto& psi : r.approx.potentials()) {
    json jp;
    jp["scope"] = json::array();
    for (VarId v : psi.scope.vars()) jp["scope"].push_back(pool.name(v));
    jp["values"] = psi.values;
    j["psi"].push_back(std::move(jp));
  }
  j["log_zq"] = r.approx.log_zq();
  return j.dump(2) + "\n";
}

std::string fit_result_to_json(const VariablePool& pool, const HiddenFitResult& r) {
  json j = common_fit_json(r.trace, r.bound, r.restart_index, r.degenerate, r.diagnostics);
  j["method"] = "hidden";
  j["hidden"] = json::array();
  for (VarId v : r.approx.hidden())
    j["hidden"].push_back({{"name", pool.name(v)}, {"cardinality", pool.card(v)}});
  j["theta"] = json::array();
  for (const auto& fam : r.approx.q().families())
    j["theta"].push_back(family_json(pool, fam, fam.cpt.values));
  j["rho"] = json::array();
  for (int jdx = 0; jdx < r.approx.q().family_count(); ++jdx) {
    const auto& fam = r.approx.q().family(jdx);
    j["rho"].push_back(family_json(pool, fam, r.approx.rho_block(jdx).values));
  }
  if (std::isnan(r.marginal_bound))
    j["marginal_bound"] = nullptr;
  else
    j["marginal_bound"] = r.marginal_bound;
  return j.dump(2) + "\n";
}

}  // namespace structvar

#include "structvar/structure.hpp"

#include <set>

namespace structvar {

ResolvedStructure resolve_structure(const VariablePool& base, const QStructure& s) {
  ResolvedStructure rs;
  rs.pool = base;
  for (const auto& h : s.hidden)
    rs.hidden_ids.push_back(rs.pool.add(h.name, h.cardinality, /*min_cardinality=*/1));

  std::set<VarId> children;
  for (const auto& f : s.families) {
    VarId child = rs.pool.require(f.child);
    if (!children.insert(child).second)
      throw StructuralError("structure declares two families for '" + f.child + "'");
    std::vector<VarId> parents;
    for (const auto& pn : f.parents) {
      VarId pv = rs.pool.require(pn);
      if (pv == child) throw StructuralError("variable '" + pn + "' cannot parent itself");
      parents.push_back(pv);
    }
    rs.families.emplace_back(child, std::move(parents));
  }
  for (const auto& [child, parents] : rs.families)
    for (VarId pv : parents)
      if (!children.count(pv))
        throw StructuralError("parent '" + rs.pool.name(pv) + "' has no family of its own");

  Dag dag(rs.pool.size());
  for (const auto& [child, parents] : rs.families)
    for (VarId pv : parents) dag.add_edge(pv, child);
  if (!dag.is_acyclic()) throw StructuralError("structure's directed part has a cycle");

  for (const auto& pot : s.potentials) {
    std::vector<VarId> scope;
    for (const auto& pn : pot) {
      VarId pv = rs.pool.require(pn);
      if (!children.count(pv))
        throw StructuralError("potential variable '" + pn + "' has no family");
      scope.push_back(pv);
    }
    if (scope.empty()) throw StructuralError("empty potential scope");
    rs.potential_scopes.push_back(std::move(scope));
  }
  return rs;
}

QStructure mean_field_structure(const std::vector<std::string>& t_names) {
  QStructure s;
  for (const auto& n : t_names) s.families.push_back(FamilyDecl{n, {}});
  return s;
}

}  // namespace structvar

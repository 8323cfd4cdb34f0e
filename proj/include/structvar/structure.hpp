#pragma once

#include <random>
#include <string>
#include <vector>

#include "structvar/model.hpp"

namespace structvar {

// Name-level description of an approximating structure, as read from a
// structure file or emitted by the builders. Hidden variables (cardinality
// >= 1) exist only in the approximation, never in the target model.
struct HiddenVarDecl {
  std::string name;
  int cardinality = 1;
};

struct FamilyDecl {
  std::string child;
  std::vector<std::string> parents;
};

struct QStructure {
  std::vector<HiddenVarDecl> hidden;
  std::vector<FamilyDecl> families;
  std::vector<std::vector<std::string>> potentials;  // chain-graph only
};

// Id-level skeleton against a pool extended with the hidden variables.
struct ResolvedStructure {
  VariablePool pool;
  std::vector<std::pair<VarId, std::vector<VarId>>> families;
  std::vector<std::vector<VarId>> potential_scopes;
  std::vector<VarId> hidden_ids;
};

// Resolves names, extends `base` with hidden declarations, and checks that
// the directed part is acyclic with one family per declared child.
ResolvedStructure resolve_structure(const VariablePool& base, const QStructure& s);

// Edge-free structure over the given variables.
QStructure mean_field_structure(const std::vector<std::string>& t_names);

}  // namespace structvar

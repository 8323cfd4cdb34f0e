#pragma once

#include <span>
#include <string>
#include <vector>

#include "structvar/factor.hpp"

namespace structvar {

// Conditional distribution of `child` given `parents`. The table scope is
// [parents..., child] (child fastest); every parent configuration's column
// sums to one.
struct DirectedFamily {
  VarId child = -1;
  Scope parents;
  TableFactor cpt;

  Scope family_scope() const;
};

constexpr double kCptColumnTol = 1e-12;

// Build a CPT family from a table whose scope contains `child` anywhere;
// the scope is permuted to [parents..., child] and columns are validated.
DirectedFamily make_family(VarId child, const TableFactor& table);

// Renormalize each child column to sum exactly to one (guards drift after
// repeated exp-normalized updates). Throws if a column has zero mass.
void normalize_columns(DirectedFamily& family);

bool columns_normalized(const DirectedFamily& family, double tol = kCptColumnTol);

struct ModelFactor {
  TableFactor table;
  bool is_cpt = false;
  VarId child = -1;  // meaningful when is_cpt
};

// The target distribution P: a normalized product of factors (Eq-style
// factorized form). When `directed`, every factor is a CPT of an acyclic
// directed graph and log_z == 0.
struct FactorizedModel {
  VariablePool pool;
  std::vector<ModelFactor> factors;
  bool directed = false;
  double log_z = 0.0;

  std::vector<VarId> all_vars() const;
  // T = declared variables minus those bound by `ev`.
  std::vector<VarId> unobserved_vars(const Evidence& ev) const;
};

// Structural validation: scopes reference declared variables, CPT columns
// normalized, directed models acyclic with one CPT per variable.
void validate_model(const FactorizedModel& model);

// Directed adjacency used by d-separation and topological ordering.
struct Dag {
  explicit Dag(int n) : parents(static_cast<size_t>(n)), children(static_cast<size_t>(n)) {}
  std::vector<std::vector<VarId>> parents;
  std::vector<std::vector<VarId>> children;

  void add_edge(VarId from, VarId to);
  bool is_acyclic() const;
  // Topological order (parents first); ties broken by lowest id.
  std::vector<VarId> topological_order() const;
};

Dag dag_of(const FactorizedModel& model);

// True iff x is d-separated from every variable of y given z
// (standard collider / chain / fork blocking rules).
bool d_separated(const Dag& dag, VarId x, std::span<const VarId> y, std::span<const VarId> z);

bool d_separated(const FactorizedModel& model, VarId x, const Scope& y, const Scope& z);

}  // namespace structvar

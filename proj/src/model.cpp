#include "structvar/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <set>

namespace structvar {

Scope DirectedFamily::family_scope() const {
  std::vector<VarId> vars = parents.vars();
  std::vector<int> cards = parents.cards();
  vars.push_back(child);
  cards.push_back(cpt.scope.card(cpt.scope.position(child)));
  return Scope(std::move(vars), std::move(cards));
}

DirectedFamily make_family(VarId child, const TableFactor& table) {
  int child_pos = table.scope.position(child);
  if (child_pos < 0) throw StructuralError("cpt scope does not contain its child");
  std::vector<VarId> order;
  std::vector<int> parent_cards;
  for (int i = 0; i < table.scope.arity(); ++i) {
    if (table.scope.var(i) == child) continue;
    order.push_back(table.scope.var(i));
    parent_cards.push_back(table.scope.card(i));
  }
  Scope parents(order, std::move(parent_cards));
  order.push_back(child);

  DirectedFamily family;
  family.child = child;
  family.parents = std::move(parents);
  family.cpt = (child_pos == table.scope.arity() - 1) ? table : factor_permute(table, order);
  if (!columns_normalized(family))
    throw StructuralError("cpt columns do not sum to one");
  return family;
}

bool columns_normalized(const DirectedFamily& family, double tol) {
  const auto& t = family.cpt;
  int child_card = t.scope.card(t.scope.arity() - 1);
  for (std::int64_t base = 0; base < t.scope.size(); base += child_card) {
    double s = 0.0;
    for (int x = 0; x < child_card; ++x) s += t[base + x];
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

void normalize_columns(DirectedFamily& family) {
  auto& t = family.cpt;
  int child_card = t.scope.card(t.scope.arity() - 1);
  for (std::int64_t base = 0; base < t.scope.size(); base += child_card) {
    double s = 0.0;
    for (int x = 0; x < child_card; ++x) s += t[base + x];
    if (s <= 0.0) throw StructuralError("cpt column has zero mass");
    for (int x = 0; x < child_card; ++x) t[base + x] /= s;
  }
}

std::vector<VarId> FactorizedModel::all_vars() const {
  std::vector<VarId> vars(static_cast<size_t>(pool.size()));
  for (int i = 0; i < pool.size(); ++i) vars[static_cast<size_t>(i)] = i;
  return vars;
}

std::vector<VarId> FactorizedModel::unobserved_vars(const Evidence& ev) const {
  std::vector<VarId> t;
  for (int i = 0; i < pool.size(); ++i)
    if (!ev.binds(i)) t.push_back(i);
  return t;
}

void validate_model(const FactorizedModel& model) {
  std::set<VarId> cpt_children;
  for (const auto& f : model.factors) {
    for (VarId v : f.table.scope.vars()) {
      if (v < 0 || v >= model.pool.size())
        throw StructuralError("factor scope references undeclared variable");
      if (f.table.scope.card(f.table.scope.position(v)) != model.pool.card(v))
        throw StructuralError("factor cardinality disagrees with variable declaration");
    }
    for (double x : f.table.values)
      if (!(x >= 0.0)) throw StructuralError("factor entries must be nonnegative");
    if (f.is_cpt) {
      make_family(f.child, f.table);  // validates columns
      if (!cpt_children.insert(f.child).second)
        throw StructuralError("two cpts declare the same child");
    }
  }
  if (model.directed) {
    if (model.log_z != 0.0) throw StructuralError("directed model must have log_z == 0");
    for (const auto& f : model.factors)
      if (!f.is_cpt) throw StructuralError("directed model contains a non-cpt factor");
    if (static_cast<int>(cpt_children.size()) != model.pool.size())
      throw StructuralError("directed model must declare one cpt per variable");
    if (!dag_of(model).is_acyclic()) throw StructuralError("directed model has a cycle");
  }
}

void Dag::add_edge(VarId from, VarId to) {
  parents[static_cast<size_t>(to)].push_back(from);
  children[static_cast<size_t>(from)].push_back(to);
}

bool Dag::is_acyclic() const {
  return topological_order().size() == parents.size();
}

std::vector<VarId> Dag::topological_order() const {
  size_t n = parents.size();
  std::vector<int> remaining(n);
  for (size_t i = 0; i < n; ++i) remaining[i] = static_cast<int>(parents[i].size());
  std::set<VarId> ready;
  for (size_t i = 0; i < n; ++i)
    if (remaining[i] == 0) ready.insert(static_cast<VarId>(i));
  std::vector<VarId> order;
  order.reserve(n);
  while (!ready.empty()) {
    VarId v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (VarId c : children[static_cast<size_t>(v)])
      if (--remaining[static_cast<size_t>(c)] == 0) ready.insert(c);
  }
  return order;
}

Dag dag_of(const FactorizedModel& model) {
  if (!model.directed) throw StructuralError("d-separation requires a directed model");
  Dag dag(model.pool.size());
  for (const auto& f : model.factors)
    for (VarId v : f.table.scope.vars())
      if (v != f.child) dag.add_edge(v, f.child);
  return dag;
}

bool d_separated(const Dag& dag, VarId x, std::span<const VarId> y, std::span<const VarId> z) {
  size_t n = dag.parents.size();
  std::vector<char> in_z(n, 0);
  for (VarId v : z) in_z[static_cast<size_t>(v)] = 1;

  std::vector<char> target(n, 0);
  bool any_target = false;
  for (VarId v : y) {
    if (in_z[static_cast<size_t>(v)]) continue;  // conditioned targets are vacuous
    if (v == x) return false;                    // a variable never separates from itself
    target[static_cast<size_t>(v)] = 1;
    any_target = true;
  }
  if (!any_target) return true;

  // Ancestors of z, for collider activation.
  std::vector<char> anc_z(n, 0);
  {
    std::deque<VarId> queue(z.begin(), z.end());
    while (!queue.empty()) {
      VarId v = queue.front();
      queue.pop_front();
      if (anc_z[static_cast<size_t>(v)]) continue;
      anc_z[static_cast<size_t>(v)] = 1;
      for (VarId p : dag.parents[static_cast<size_t>(v)]) queue.push_back(p);
    }
  }

  // Reachability over (node, direction) states: direction 0 = entered from a
  // child (moving up), 1 = entered from a parent (moving down).
  std::vector<std::array<char, 2>> seen(n, {0, 0});
  std::deque<std::pair<VarId, int>> queue;
  queue.push_back({x, 0});
  while (!queue.empty()) {
    auto [v, dir] = queue.front();
    queue.pop_front();
    auto uv = static_cast<size_t>(v);
    if (seen[uv][static_cast<size_t>(dir)]) continue;
    seen[uv][static_cast<size_t>(dir)] = 1;
    if (!in_z[uv] && target[uv]) return false;

    if (dir == 0) {
      // Trail arrived from a child: may continue to parents and to children.
      if (!in_z[uv]) {
        for (VarId p : dag.parents[uv]) queue.push_back({p, 0});
        for (VarId c : dag.children[uv]) queue.push_back({c, 1});
      }
    } else {
      // Trail arrived from a parent: chain through children unless blocked,
      // reverse through parents only at an activated collider.
      if (!in_z[uv])
        for (VarId c : dag.children[uv]) queue.push_back({c, 1});
      if (anc_z[uv])
        for (VarId p : dag.parents[uv]) queue.push_back({p, 0});
    }
  }
  return true;
}

bool d_separated(const FactorizedModel& model, VarId x, const Scope& y, const Scope& z) {
  for (VarId v : z.vars())
    if (v == x) throw StructuralError("d-separation query conditions on the query variable");
  return d_separated(dag_of(model), x, y.vars(), z.vars());
}

}  // namespace structvar

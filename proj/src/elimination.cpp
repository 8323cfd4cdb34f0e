#include "structvar/elimination.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace structvar {

EliminationOrder min_fill_order(const std::vector<TableFactor>& factors,
                                std::span<const VarId> eliminate) {
  std::map<VarId, std::set<VarId>> adj;
  for (const auto& f : factors) {
    const auto& vars = f.scope.vars();
    for (VarId v : vars) adj[v];  // ensure singleton scopes register
    for (size_t i = 0; i < vars.size(); ++i)
      for (size_t j = i + 1; j < vars.size(); ++j) {
        adj[vars[i]].insert(vars[j]);
        adj[vars[j]].insert(vars[i]);
      }
  }
  std::set<VarId> pending(eliminate.begin(), eliminate.end());
  EliminationOrder out;
  out.order.reserve(pending.size());
  while (!pending.empty()) {
    VarId best = -1;
    std::int64_t best_fill = std::numeric_limits<std::int64_t>::max();
    for (VarId v : pending) {
      const auto& nb = adj[v];
      std::int64_t fill = 0;
      for (auto i = nb.begin(); i != nb.end(); ++i)
        for (auto j = std::next(i); j != nb.end(); ++j)
          if (!adj[*i].count(*j)) ++fill;
      if (fill < best_fill) {
        best_fill = fill;
        best = v;
      }
    }
    // Connect the eliminated variable's neighborhood.
    const auto nb = adj[best];
    for (VarId u : nb) {
      adj[u].erase(best);
      for (VarId w : nb)
        if (u != w) adj[u].insert(w);
    }
    adj.erase(best);
    pending.erase(best);
    out.order.push_back(best);
  }
  return out;
}

TableFactor eliminate(const std::vector<TableFactor>& factors, const EliminationOrder& order) {
  std::vector<TableFactor> work = factors;
  if (work.empty()) work.push_back(TableFactor(Scope{}, {1.0}));
  for (VarId v : order.order) {
    TableFactor merged;
    bool found = false;
    std::vector<TableFactor> rest;
    rest.reserve(work.size());
    for (auto& f : work) {
      if (f.scope.contains(v)) {
        merged = found ? factor_product(merged, f) : std::move(f);
        found = true;
      } else {
        rest.push_back(std::move(f));
      }
    }
    if (!found) throw StructuralError("elimination order names a variable absent from all scopes");
    std::vector<VarId> keep;
    for (VarId u : merged.scope.vars())
      if (u != v) keep.push_back(u);
    rest.push_back(factor_marginalize(merged, keep));
    work = std::move(rest);
  }
  TableFactor result = std::move(work.front());
  for (size_t i = 1; i < work.size(); ++i) result = factor_product(result, work[i]);
  return result;
}

double log_total_mass(const std::vector<TableFactor>& factors) {
  std::vector<TableFactor> work = factors;
  double log_scale = 0.0;
  // Rescale each factor by its max so intermediate products stay in range.
  for (auto& f : work) {
    double m = 0.0;
    for (double x : f.values) m = std::max(m, x);
    if (m <= 0.0) return kNegInf;
    if (m != 1.0) {
      for (double& x : f.values) x /= m;
      log_scale += std::log(m);
    }
  }
  std::set<VarId> vars;
  for (const auto& f : work)
    for (VarId v : f.scope.vars()) vars.insert(v);
  auto order = min_fill_order(work, std::vector<VarId>(vars.begin(), vars.end()));
  for (VarId v : order.order) {
    TableFactor merged;
    bool found = false;
    std::vector<TableFactor> rest;
    for (auto& f : work) {
      if (f.scope.contains(v)) {
        merged = found ? factor_product(merged, f) : std::move(f);
        found = true;
      } else {
        rest.push_back(std::move(f));
      }
    }
    std::vector<VarId> keep;
    for (VarId u : merged.scope.vars())
      if (u != v) keep.push_back(u);
    TableFactor summed = factor_marginalize(merged, keep);
    double m = 0.0;
    for (double x : summed.values) m = std::max(m, x);
    if (m <= 0.0) return kNegInf;
    for (double& x : summed.values) x /= m;
    log_scale += std::log(m);
    rest.push_back(std::move(summed));
    work = std::move(rest);
  }
  double total = 1.0;
  for (const auto& f : work) total *= f.total();
  if (total <= 0.0) return kNegInf;
  return log_scale + std::log(total);
}

double log_evidence(const FactorizedModel& model, const Evidence& ev) {
  std::vector<TableFactor> restricted;
  restricted.reserve(model.factors.size());
  for (const auto& f : model.factors) restricted.push_back(factor_restrict(f.table, ev));
  return log_total_mass(restricted) - model.log_z;
}

double log_partition(const FactorizedModel& model) {
  std::vector<TableFactor> tables;
  tables.reserve(model.factors.size());
  for (const auto& f : model.factors) tables.push_back(f.table);
  return log_total_mass(tables);
}

double joint_mass(const FactorizedModel& model, std::span<const int> states, const Evidence& ev) {
  double mass = 1.0;
  std::vector<int> local;
  for (const auto& f : model.factors) {
    const Scope& s = f.table.scope;
    local.assign(static_cast<size_t>(s.arity()), 0);
    for (int i = 0; i < s.arity(); ++i) {
      VarId v = s.var(i);
      auto bound = ev.state(v);
      local[static_cast<size_t>(i)] = bound ? *bound : states[static_cast<size_t>(v)];
    }
    mass *= f.table[s.index_of(local)];
    if (mass == 0.0) return 0.0;
  }
  return mass;
}

double exact_kl(const FactorizedModel& q, const FactorizedModel& p, const Evidence& ev) {
  std::vector<VarId> t_vars = p.unobserved_vars(ev);
  Scope t_scope(t_vars, p.pool);
  if (t_scope.size() > kEnumerationCap)
    throw StructuralError("exact_kl: joint state space exceeds the enumeration cap");
  if (static_cast<int>(t_vars.size()) != q.pool.size())
    throw StructuralError("exact_kl: q must be a model over exactly the unobserved variables");

  // Unnormalized masses, normalized in a second pass.
  std::vector<double> qm(static_cast<size_t>(t_scope.size()));
  std::vector<double> pm(static_cast<size_t>(t_scope.size()));
  double q_total = 0.0, p_total = 0.0;
  std::vector<int> states(static_cast<size_t>(t_scope.arity()));
  std::vector<int> full_p(static_cast<size_t>(p.pool.size()), 0);
  std::vector<int> full_q(static_cast<size_t>(q.pool.size()), 0);
  for (std::int64_t idx = 0; idx < t_scope.size(); ++idx) {
    t_scope.states_of(idx, states);
    for (int i = 0; i < t_scope.arity(); ++i) {
      full_p[static_cast<size_t>(t_vars[static_cast<size_t>(i)])] = states[static_cast<size_t>(i)];
      // q's pool declares the same unobserved variables, matched by name.
      VarId qv = q.pool.require(p.pool.name(t_vars[static_cast<size_t>(i)]));
      full_q[static_cast<size_t>(qv)] = states[static_cast<size_t>(i)];
    }
    qm[static_cast<size_t>(idx)] = joint_mass(q, full_q, Evidence{});
    pm[static_cast<size_t>(idx)] = joint_mass(p, full_p, ev);
    q_total += qm[static_cast<size_t>(idx)];
    p_total += pm[static_cast<size_t>(idx)];
  }
  if (q_total <= 0.0) throw StructuralError("exact_kl: q has zero total mass");
  if (p_total <= 0.0) return kPosInf;

  double kl = 0.0;
  for (size_t i = 0; i < qm.size(); ++i) {
    double qp = qm[i] / q_total;
    if (qp == 0.0) continue;  // 0 log 0 = 0
    double pp = pm[i] / p_total;
    if (pp == 0.0) return kPosInf;
    kl += qp * std::log(qp / pp);
  }
  return std::max(kl, 0.0);
}

}  // namespace structvar

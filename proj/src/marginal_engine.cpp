#include "structvar/marginal_engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace structvar {

namespace {

// Explicit gather map from every cell of `outer` to the matching cell of
// `inner` (inner.scope subset of outer.scope).
std::vector<std::int32_t> build_cell_map(const Scope& outer, const Scope& inner) {
  std::vector<std::int64_t> strides(static_cast<size_t>(outer.arity()), 0);
  for (int i = 0; i < outer.arity(); ++i) {
    int pos = inner.position(outer.var(i));
    if (pos >= 0) strides[static_cast<size_t>(i)] = inner.stride(pos);
  }
  std::vector<std::int32_t> map(static_cast<size_t>(outer.size()));
  std::vector<int> states(static_cast<size_t>(outer.arity()), 0);
  std::int64_t idx = 0;
  for (std::int64_t c = 0; c < outer.size(); ++c) {
    map[static_cast<size_t>(c)] = static_cast<std::int32_t>(idx);
    for (int i = outer.arity() - 1; i >= 0; --i) {
      auto ui = static_cast<size_t>(i);
      if (++states[ui] < outer.card(i)) {
        idx += strides[ui];
        break;
      }
      states[ui] = 0;
      idx -= strides[ui] * (outer.card(i) - 1);
    }
  }
  return map;
}

}  // namespace

MarginalEngine::MarginalEngine(std::vector<Scope> factor_scopes, std::vector<Scope> query_scopes)
    : factor_scopes_(std::move(factor_scopes)), query_scopes_(std::move(query_scopes)) {
  // Cardinality registry across all scopes.
  std::map<VarId, int> cards;
  auto register_scope = [&cards](const Scope& s) {
    for (int i = 0; i < s.arity(); ++i) {
      auto [it, fresh] = cards.emplace(s.var(i), s.card(i));
      if (!fresh && it->second != s.card(i))
        throw StructuralError("cardinality mismatch between engine scopes");
    }
  };
  for (const auto& s : factor_scopes_) register_scope(s);
  for (const auto& s : query_scopes_) register_scope(s);

  std::vector<TableFactor> shape_factors;
  for (const auto& s : factor_scopes_) shape_factors.emplace_back(s, 1.0);
  for (const auto& s : query_scopes_) shape_factors.emplace_back(s, 1.0);
  std::vector<VarId> all_vars;
  for (const auto& [v, c] : cards) all_vars.push_back(v);
  EliminationOrder order = min_fill_order(shape_factors, all_vars);

  std::vector<int> elim_pos_of;
  {
    std::map<VarId, int> pos;
    for (size_t i = 0; i < order.order.size(); ++i) pos[order.order[i]] = static_cast<int>(i);
    VarId max_id = all_vars.empty() ? 0 : *std::max_element(all_vars.begin(), all_vars.end());
    elim_pos_of.assign(static_cast<size_t>(max_id) + 1, -1);
    for (const auto& [v, p] : pos) elim_pos_of[static_cast<size_t>(v)] = p;
  }
  auto earliest_var_pos = [&](const Scope& s) {
    int best = std::numeric_limits<int>::max();
    for (VarId v : s.vars()) best = std::min(best, elim_pos_of[static_cast<size_t>(v)]);
    return best;
  };

  // Buckets hold factor ids, query ids, and pending messages (scope + source
  // clique), keyed by the elimination position of their earliest variable.
  struct Pending {
    Scope scope;
    int source_clique;
  };
  size_t n_vars = order.order.size();
  std::vector<std::vector<int>> bucket_factors(n_vars);
  std::vector<std::vector<int>> bucket_queries(n_vars);
  std::vector<std::vector<Pending>> bucket_messages(n_vars);

  for (size_t i = 0; i < factor_scopes_.size(); ++i) {
    if (factor_scopes_[i].empty()) {
      scalar_factor_ids_.push_back(static_cast<int>(i));
      continue;
    }
    bucket_factors[static_cast<size_t>(earliest_var_pos(factor_scopes_[i]))].push_back(
        static_cast<int>(i));
  }
  query_clique_.assign(query_scopes_.size(), -1);
  for (size_t i = 0; i < query_scopes_.size(); ++i) {
    if (query_scopes_[i].empty()) continue;
    bucket_queries[static_cast<size_t>(earliest_var_pos(query_scopes_[i]))].push_back(
        static_cast<int>(i));
  }

  query_map_.resize(query_scopes_.size());
  for (size_t pos = 0; pos < n_vars; ++pos) {
    VarId v = order.order[pos];
    if (bucket_factors[pos].empty() && bucket_queries[pos].empty() &&
        bucket_messages[pos].empty())
      continue;

    std::set<VarId> scope_vars{v};
    for (int fi : bucket_factors[pos])
      for (VarId u : factor_scopes_[static_cast<size_t>(fi)].vars()) scope_vars.insert(u);
    for (int qi : bucket_queries[pos])
      for (VarId u : query_scopes_[static_cast<size_t>(qi)].vars()) scope_vars.insert(u);
    for (const auto& m : bucket_messages[pos])
      for (VarId u : m.scope.vars()) scope_vars.insert(u);

    Clique clique;
    {
      std::vector<VarId> vars(scope_vars.begin(), scope_vars.end());
      std::vector<int> cc;
      for (VarId u : vars) cc.push_back(cards.at(u));
      clique.scope = Scope(std::move(vars), std::move(cc));
    }
    int clique_id = static_cast<int>(cliques_.size());
    for (int fi : bucket_factors[pos]) {
      clique.factor_ids.push_back(fi);
      clique.factor_map.push_back(build_cell_map(clique.scope, factor_scopes_[static_cast<size_t>(fi)]));
    }
    for (int qi : bucket_queries[pos]) {
      query_clique_[static_cast<size_t>(qi)] = clique_id;
      query_map_[static_cast<size_t>(qi)] =
          build_cell_map(clique.scope, query_scopes_[static_cast<size_t>(qi)]);
    }
    for (const auto& m : bucket_messages[pos]) {
      clique.child_cliques.push_back(m.source_clique);
      cliques_[static_cast<size_t>(m.source_clique)].parent = clique_id;
    }

    // Message to the rest of the tree: clique scope minus the eliminated var.
    std::vector<VarId> sep_vars;
    std::vector<int> sep_cards;
    for (int i = 0; i < clique.scope.arity(); ++i)
      if (clique.scope.var(i) != v) {
        sep_vars.push_back(clique.scope.var(i));
        sep_cards.push_back(clique.scope.card(i));
      }
    clique.sepset = Scope(std::move(sep_vars), std::move(sep_cards));
    clique.sep_map = build_cell_map(clique.scope, clique.sepset);
    cliques_.push_back(std::move(clique));
    if (!cliques_.back().sepset.empty())
      bucket_messages[static_cast<size_t>(earliest_var_pos(cliques_.back().sepset))].push_back(
          Pending{cliques_.back().sepset, clique_id});
    // Root cliques (empty sepset) keep parent == -1.
  }

  // Children created when messages were routed forward, so a clique's parent
  // always has a larger index; upward pass = creation order.
  for (auto& c : cliques_) {
    for (int child : c.child_cliques)
      c.child_maps.push_back(build_cell_map(c.scope, cliques_[static_cast<size_t>(child)].sepset));
    if (c.parent >= 0)
      c.parent_sep_map = build_cell_map(cliques_[static_cast<size_t>(c.parent)].scope, c.sepset);
  }
  for (size_t i = 0; i < query_scopes_.size(); ++i)
    query_results_.emplace_back(query_scopes_[i], query_scopes_[i].empty() ? 1.0 : 0.0);
}

void MarginalEngine::calibrate(const std::vector<TableFactor>& factors) {
  log_z_ = 0.0;
  degenerate_ = false;
  for (int fi : scalar_factor_ids_) {
    double v = factors[static_cast<size_t>(fi)].values[0];
    if (v <= 0.0) {
      degenerate_ = true;
      log_z_ = kNegInf;
    } else {
      log_z_ += std::log(v);
    }
  }

  // Upward pass.
  for (auto& c : cliques_) {
    auto n = static_cast<size_t>(c.scope.size());
    c.belief_up.assign(n, 1.0);
    for (size_t k = 0; k < c.factor_ids.size(); ++k) {
      const auto& vals = factors[static_cast<size_t>(c.factor_ids[k])].values;
      const auto& map = c.factor_map[k];
      for (size_t i = 0; i < n; ++i) c.belief_up[i] *= vals[static_cast<size_t>(map[i])];
    }
    for (size_t k = 0; k < c.child_cliques.size(); ++k) {
      const auto& msg = cliques_[static_cast<size_t>(c.child_cliques[k])].msg_up;
      const auto& map = c.child_maps[k];
      for (size_t i = 0; i < n; ++i) c.belief_up[i] *= msg[static_cast<size_t>(map[i])];
    }
    if (c.parent >= 0 || !c.sepset.empty()) {
      c.msg_up.assign(static_cast<size_t>(c.sepset.size()), 0.0);
      for (size_t i = 0; i < n; ++i)
        c.msg_up[static_cast<size_t>(c.sep_map[i])] += c.belief_up[i];
      double s = 0.0;
      for (double x : c.msg_up) s += x;
      if (s <= 0.0) {
        degenerate_ = true;
      } else {
        for (double& x : c.msg_up) x /= s;
        log_z_ += std::log(s);
      }
    } else {
      double s = 0.0;
      for (double x : c.belief_up) s += x;
      if (s <= 0.0)
        degenerate_ = true;
      else
        log_z_ += std::log(s);
    }
  }
  if (degenerate_) {
    log_z_ = kNegInf;
    for (size_t qi = 0; qi < query_scopes_.size(); ++qi)
      std::fill(query_results_[qi].values.begin(), query_results_[qi].values.end(),
                query_scopes_[qi].empty() ? 1.0 : 0.0);
    return;
  }

  // Downward pass.
  for (auto it = cliques_.rbegin(); it != cliques_.rend(); ++it) {
    Clique& c = *it;
    c.belief = c.belief_up;
    if (c.parent < 0) continue;
    const Clique& parent = cliques_[static_cast<size_t>(c.parent)];
    std::vector<double> sep_parent(static_cast<size_t>(c.sepset.size()), 0.0);
    for (size_t i = 0; i < parent.belief.size(); ++i)
      sep_parent[static_cast<size_t>(c.parent_sep_map[i])] += parent.belief[i];
    for (size_t k = 0; k < sep_parent.size(); ++k)
      sep_parent[k] = c.msg_up[k] > 0.0 ? sep_parent[k] / c.msg_up[k] : 0.0;
    for (size_t i = 0; i < c.belief.size(); ++i)
      c.belief[i] *= sep_parent[static_cast<size_t>(c.sep_map[i])];
  }

  // Queries.
  for (size_t qi = 0; qi < query_scopes_.size(); ++qi) {
    if (query_clique_[qi] < 0) {
      query_results_[qi].values[0] = 1.0;
      continue;
    }
    const Clique& c = cliques_[static_cast<size_t>(query_clique_[qi])];
    auto& out = query_results_[qi].values;
    std::fill(out.begin(), out.end(), 0.0);
    const auto& map = query_map_[qi];
    for (size_t i = 0; i < c.belief.size(); ++i)
      out[static_cast<size_t>(map[i])] += c.belief[i];
    double s = 0.0;
    for (double x : out) s += x;
    if (s > 0.0)
      for (double& x : out) x /= s;
  }
}

TableFactor MarginalEngine::unnormalized_marginal(int qi) const {
  TableFactor out = query_results_[static_cast<size_t>(qi)];
  double scale = std::exp(log_z_);
  for (double& x : out.values) x *= scale;
  return out;
}

bool conditional_marginal(const std::vector<TableFactor>& factors, const Scope& target,
                          const Evidence& clamp, TableFactor& out) {
  std::vector<TableFactor> restricted;
  restricted.reserve(factors.size());
  std::set<VarId> elim_set;
  for (const auto& f : factors) {
    restricted.push_back(factor_restrict(f, clamp));
    for (VarId v : f.scope.vars()) elim_set.insert(v);
  }
  for (VarId v : target.vars()) elim_set.erase(v);
  std::vector<VarId> elim(elim_set.begin(), elim_set.end());
  TableFactor joint = eliminate(restricted, min_fill_order(restricted, elim));
  // Align to the requested scope order (joint may lack clamp-only vars of
  // target; expand by zero-padding inconsistent cells).
  out = TableFactor(target, 0.0);
  std::vector<int> states(static_cast<size_t>(target.arity()));
  std::vector<int> src(static_cast<size_t>(joint.scope.arity()));
  double total = 0.0;
  for (std::int64_t c = 0; c < target.size(); ++c) {
    target.states_of(c, states);
    bool consistent = true;
    for (int i = 0; i < target.arity() && consistent; ++i) {
      auto bound = clamp.state(target.var(i));
      if (bound && *bound != states[static_cast<size_t>(i)]) consistent = false;
    }
    if (!consistent) continue;
    for (int i = 0; i < joint.scope.arity(); ++i) {
      int pos = target.position(joint.scope.var(i));
      if (pos >= 0) {
        src[static_cast<size_t>(i)] = states[static_cast<size_t>(pos)];
      } else {
        auto bound = clamp.state(joint.scope.var(i));
        src[static_cast<size_t>(i)] = bound ? *bound : 0;
      }
    }
    out[c] = joint[joint.scope.index_of(src)];
    total += out[c];
  }
  if (total <= 0.0) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return false;
  }
  for (double& x : out.values) x /= total;
  return true;
}

double expected_log(const TableFactor& f, const TableFactor& weights, const Evidence& fixed) {
  double acc = 0.0;
  std::vector<int> states(static_cast<size_t>(f.scope.arity()));
  std::vector<int> wstates(static_cast<size_t>(weights.scope.arity()));
  for (std::int64_t c = 0; c < f.scope.size(); ++c) {
    f.scope.states_of(c, states);
    bool consistent = true;
    for (int i = 0; i < f.scope.arity() && consistent; ++i) {
      auto bound = fixed.state(f.scope.var(i));
      if (bound && *bound != states[static_cast<size_t>(i)]) consistent = false;
    }
    if (!consistent) continue;
    for (int i = 0; i < weights.scope.arity(); ++i) {
      int pos = f.scope.position(weights.scope.var(i));
      if (pos < 0) throw StructuralError("expected_log: weight variable outside value scope");
      wstates[static_cast<size_t>(i)] = states[static_cast<size_t>(pos)];
    }
    double w = weights[weights.scope.index_of(wstates)];
    if (w == 0.0) continue;  // 0 log 0 = 0
    double v = f[c];
    if (v == 0.0) return kNegInf;
    acc += w * std::log(v);
  }
  return acc;
}

}  // namespace structvar

#include "structvar/hidden.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "structvar/rng.hpp"
#include "term_loop.hpp"

namespace structvar {

HiddenApproximation::HiddenApproximation(BnApproximation q, std::vector<VarId> hidden)
    : q_(std::move(q)), hidden_(std::move(hidden)) {
  for (VarId v : hidden_)
    if (q_.family_of(v) < 0)
      throw StructuralError("hidden variable lacks a family in the approximation");
  rho_.reserve(static_cast<size_t>(q_.family_count()));
  for (const auto& fam : q_.families()) rho_.emplace_back(fam.cpt.scope, 1.0);
}

void HiddenApproximation::set_rho(int j, TableFactor block) {
  auto& slot = rho_[static_cast<size_t>(j)];
  if (!(block.scope == slot.scope)) throw StructuralError("set_rho: scope mismatch");
  for (double x : block.values)
    if (!(x > 0.0)) throw StructuralError("rho entries must be strictly positive");
  slot = std::move(block);
}

namespace {

// Shadow ids for the copy of V that carries Q's own marginalization inside
// R-sum eliminations.
Scope shadow_scope(const Scope& s, std::span<const VarId> hidden, VarId offset) {
  std::vector<VarId> vars;
  std::vector<int> cards;
  for (int i = 0; i < s.arity(); ++i) {
    VarId v = s.var(i);
    bool is_hidden = std::find(hidden.begin(), hidden.end(), v) != hidden.end();
    vars.push_back(is_hidden ? v + offset : v);
    cards.push_back(s.card(i));
  }
  return Scope(std::move(vars), std::move(cards));
}

}  // namespace

// ---------------------------------------------------------------------------

struct HiddenSolver::Impl {
  const VariablePool& pool;
  const FactorizedModel& p;
  Evidence ev;
  HiddenApproximation h;
  RelevanceSets rel;
  VarId shadow_offset;

  std::vector<TableFactor> restricted_p;
  std::vector<std::vector<VarId>> p_t_vars;
  std::vector<TableFactor> q_tables;
  std::vector<TableFactor> qr_tables;  // shadowed cpts then rho blocks
  bool q_dirty = true;
  bool qr_dirty = true;

  std::unique_ptr<MarginalEngine> q_engine;  // bound terms + family marginals
  std::vector<int> q_query_p;
  std::vector<int> q_query_fam;

  std::unique_ptr<MarginalEngine> qr_engine;  // R-sum and its family contexts
  std::vector<int> qr_query_fam;

  // Per-family rho denominators: Q-copy plus all rho blocks except j.
  struct RhoPlan {
    std::unique_ptr<MarginalEngine> engine;
    std::vector<int> table_ids;  // indices into qr_tables
    int w_query = 0;
  };
  std::vector<RhoPlan> rho_plans;

  struct ThetaPlan {
    std::unique_ptr<MarginalEngine> engine;
    struct Source {
      int kind;  // 0: p factor, 1: family cpt, 2: rho block
      int index;
      int query;
    };
    std::vector<Source> sources;
    int w_query = -1;
    Scope w;
  };
  std::vector<ThetaPlan> theta_plans;

  Impl(const VariablePool& pool_, const FactorizedModel& p_, Evidence ev_, HiddenApproximation h_)
      : pool(pool_), p(p_), ev(std::move(ev_)), h(std::move(h_)) {
    shadow_offset = pool.size();
    rel = relevance_sets(pool, h.q(), p);
    for (const auto& f : p.factors) {
      restricted_p.push_back(factor_restrict(f.table, ev));
      std::vector<VarId> tv;
      for (VarId v : f.table.scope.vars())
        if (h.q().family_of(v) >= 0) tv.push_back(v);
      p_t_vars.push_back(std::move(tv));
    }
    rebuild_tables();

    std::vector<Scope> q_scopes;
    for (const auto& t : q_tables) q_scopes.push_back(t.scope);
    std::vector<Scope> q_queries;
    for (const auto& tv : p_t_vars) {
      q_query_p.push_back(static_cast<int>(q_queries.size()));
      q_queries.push_back(Scope(tv, pool));
    }
    for (int j = 0; j < h.q().family_count(); ++j) {
      q_query_fam.push_back(static_cast<int>(q_queries.size()));
      q_queries.push_back(h.q().family(j).family_scope());
    }
    q_engine = std::make_unique<MarginalEngine>(q_scopes, q_queries);

    std::vector<Scope> qr_scopes;
    for (const auto& t : qr_tables) qr_scopes.push_back(t.scope);
    std::vector<Scope> qr_queries;
    for (int j = 0; j < h.q().family_count(); ++j) {
      qr_query_fam.push_back(static_cast<int>(qr_queries.size()));
      qr_queries.push_back(h.q().family(j).family_scope());
    }
    qr_engine = std::make_unique<MarginalEngine>(qr_scopes, qr_queries);

    theta_plans.resize(static_cast<size_t>(h.q().family_count()));
    rho_plans.resize(static_cast<size_t>(h.q().family_count()));
  }

  void rebuild_tables() {
    int n = h.q().family_count();
    q_tables.clear();
    for (const auto& f : h.q().families()) q_tables.push_back(f.cpt);
    qr_tables.clear();
    qr_tables.reserve(static_cast<size_t>(2 * n));
    for (const auto& f : h.q().families()) {
      TableFactor shadowed = f.cpt;
      shadowed.scope = shadow_scope(f.cpt.scope, h.hidden(), shadow_offset);
      qr_tables.push_back(std::move(shadowed));
    }
    for (const auto& r : h.rho()) qr_tables.push_back(r);
    q_dirty = qr_dirty = true;
  }

  void sync_theta(int j) {
    q_tables[static_cast<size_t>(j)] = h.q().family(j).cpt;
    TableFactor shadowed = h.q().family(j).cpt;
    shadowed.scope = shadow_scope(shadowed.scope, h.hidden(), shadow_offset);
    qr_tables[static_cast<size_t>(j)] = std::move(shadowed);
    q_dirty = qr_dirty = true;
  }

  void sync_rho(int j) {
    qr_tables[static_cast<size_t>(h.q().family_count() + j)] = h.rho_block(j);
    qr_dirty = true;
  }

  void ensure_q() {
    if (!q_dirty) return;
    q_engine->calibrate(q_tables);
    q_dirty = false;
  }
  void ensure_qr() {
    if (!qr_dirty) return;
    qr_engine->calibrate(qr_tables);
    qr_dirty = false;
  }

  std::vector<VarId> family_scope_vars(int j) const {
    std::vector<VarId> w = h.q().family(j).parents.vars();
    w.push_back(h.q().family(j).child);
    return w;
  }

  double bound_value() {
    ensure_q();
    if (q_engine->degenerate()) return kNegInf;
    double f = 0.0;
    for (size_t i = 0; i < restricted_p.size(); ++i) {
      double e = expected_log(restricted_p[i], q_engine->marginal(q_query_p[i]), ev);
      if (e == kNegInf) return kNegInf;
      f += e;
    }
    f -= p.log_z;
    int n = h.q().family_count();
    for (int j = 0; j < n; ++j) {
      const TableFactor& fam_marginal =
          q_engine->marginal(q_query_fam[static_cast<size_t>(j)]);
      f -= expected_log(h.q().family(j).cpt, fam_marginal, Evidence{});
      f += expected_log(h.rho_block(j), fam_marginal, Evidence{});
    }
    ensure_qr();
    double r_sum = qr_engine->degenerate() ? 0.0 : std::exp(qr_engine->log_partition());
    return f - r_sum + 1.0;
  }

  ThetaPlan& ensure_theta_plan(int j) {
    auto& slot = theta_plans[static_cast<size_t>(j)];
    if (slot.engine) return slot;
    std::vector<VarId> wj = family_scope_vars(j);
    std::vector<Scope> scopes;
    for (const auto& t : q_tables) scopes.push_back(t.scope);
    std::vector<Scope> queries;
    auto add_query = [&](std::span<const VarId> svars) {
      std::vector<VarId> u(wj);
      for (VarId v : svars)
        if (std::find(u.begin(), u.end(), v) == u.end()) u.push_back(v);
      queries.push_back(Scope(u, pool));
      return static_cast<int>(queries.size()) - 1;
    };
    for (int i : rel.fp[static_cast<size_t>(j)])
      slot.sources.push_back({0, i, add_query(p_t_vars[static_cast<size_t>(i)])});
    for (int j2 : rel.fq[static_cast<size_t>(j)]) {
      slot.sources.push_back({1, j2, add_query(family_scope_vars(j2))});
      slot.sources.push_back({2, j2, slot.sources.back().query});
    }
    // The family's own rho block always depends on x_j.
    slot.sources.push_back({2, j, add_query(family_scope_vars(j))});
    slot.w_query = static_cast<int>(queries.size());
    queries.push_back(Scope(wj, pool));
    slot.w = queries.back();
    slot.engine = std::make_unique<MarginalEngine>(scopes, queries);
    return slot;
  }

  TableFactor theta_energies(int j) {
    ThetaPlan& plan = ensure_theta_plan(j);
    plan.engine->calibrate(q_tables);
    std::vector<detail::ConditionedTerm> terms;
    terms.reserve(plan.sources.size());
    for (const auto& s : plan.sources) {
      const TableFactor* table = nullptr;
      double sign = 1.0;
      if (s.kind == 0) {
        table = &restricted_p[static_cast<size_t>(s.index)];
      } else if (s.kind == 1) {
        table = &h.q().family(s.index).cpt;
        sign = -1.0;
      } else {
        table = &h.rho_block(s.index);
      }
      terms.push_back(detail::ConditionedTerm{table, sign, s.query});
    }
    TableFactor energy(plan.w, 0.0);
    detail::accumulate_conditioned_terms(*plan.engine, plan.w_query, plan.w, terms, ev, energy);

    // Entropy-relaxation mass term: - sum_v E_{Q(T|x_j,u_j)}[R(T,v)].
    ensure_qr();
    ensure_q();
    if (!qr_engine->degenerate() && !q_engine->degenerate()) {
      const TableFactor& joint =
          qr_engine->marginal(qr_query_fam[static_cast<size_t>(j)]);
      const TableFactor& q_mass = q_engine->marginal(q_query_fam[static_cast<size_t>(j)]);
      double scale = std::exp(qr_engine->log_partition());
      for (std::int64_t c = 0; c < energy.scope.size(); ++c) {
        if (energy[c] == kNegInf) continue;
        if (q_mass[c] <= 0.0) {
          energy[c] = kNegInf;
          continue;
        }
        energy[c] -= joint[c] * scale / q_mass[c];
      }
    }
    return energy;
  }

  bool apply_theta(int j) {
    TableFactor energy = theta_energies(j);
    TableFactor cpt = h.q().family(j).cpt;
    int child_card = cpt.scope.card(cpt.scope.arity() - 1);
    bool clean = true;
    for (std::int64_t base = 0; base < cpt.scope.size(); base += child_card) {
      double mx = kNegInf;
      for (int x = 0; x < child_card; ++x) mx = std::max(mx, energy[base + x]);
      if (mx == kNegInf || std::isnan(mx)) {
        for (int x = 0; x < child_card; ++x) cpt[base + x] = 1.0 / child_card;
        clean = false;
        continue;
      }
      double z = 0.0;
      for (int x = 0; x < child_card; ++x) {
        double e = energy[base + x];
        cpt[base + x] = (e == kNegInf || std::isnan(e)) ? 0.0 : std::exp(e - mx);
        z += cpt[base + x];
      }
      for (int x = 0; x < child_card; ++x) cpt[base + x] /= z;
    }
    h.q().set_cpt(j, cpt);
    sync_theta(j);
    return clean;
  }

  RhoPlan& ensure_rho_plan(int j) {
    auto& slot = rho_plans[static_cast<size_t>(j)];
    if (slot.engine) return slot;
    int n = h.q().family_count();
    std::vector<Scope> scopes;
    for (int t = 0; t < n; ++t)
      slot.table_ids.push_back(t);  // shadowed cpts
    for (int t = 0; t < n; ++t) {
      if (t == j) continue;
      slot.table_ids.push_back(n + t);  // rho blocks except j
    }
    for (int id : slot.table_ids) scopes.push_back(qr_tables[static_cast<size_t>(id)].scope);
    std::vector<Scope> queries{h.q().family(j).family_scope()};
    slot.w_query = 0;
    slot.engine = std::make_unique<MarginalEngine>(scopes, queries);
    return slot;
  }

  bool apply_rho(int j) {
    RhoPlan& plan = ensure_rho_plan(j);
    std::vector<TableFactor> tables;
    tables.reserve(plan.table_ids.size());
    for (int id : plan.table_ids) tables.push_back(qr_tables[static_cast<size_t>(id)]);
    plan.engine->calibrate(tables);
    ensure_q();
    bool clean = true;
    TableFactor block = h.rho_block(j);
    if (!plan.engine->degenerate() && !q_engine->degenerate()) {
      const TableFactor& numer = q_engine->marginal(q_query_fam[static_cast<size_t>(j)]);
      const TableFactor& denom = plan.engine->marginal(plan.w_query);
      double scale = std::exp(plan.engine->log_partition());
      for (std::int64_t c = 0; c < block.scope.size(); ++c) {
        double d = denom[c] * scale;
        if (d <= 0.0 || numer[c] <= 0.0) {
          clean = false;  // no Q-mass consistent with this cell; keep the entry
          continue;
        }
        block[c] = numer[c] / d;
      }
    } else {
      clean = false;
    }
    h.set_rho(j, block);
    sync_rho(j);
    return clean;
  }
};

HiddenSolver::HiddenSolver(const VariablePool& pool, const FactorizedModel& p, const Evidence& ev,
                           HiddenApproximation h)
    : impl_(std::make_unique<Impl>(pool, p, ev, std::move(h))) {}
HiddenSolver::~HiddenSolver() = default;
HiddenSolver::HiddenSolver(HiddenSolver&&) noexcept = default;

const HiddenApproximation& HiddenSolver::approx() const { return impl_->h; }

void HiddenSolver::reset(const HiddenApproximation& h) {
  impl_->h = h;
  impl_->rebuild_tables();
}

double HiddenSolver::bound() { return impl_->bound_value(); }
TableFactor HiddenSolver::theta_energy_table(int j) { return impl_->theta_energies(j); }
bool HiddenSolver::apply_theta_update(int j) { return impl_->apply_theta(j); }
bool HiddenSolver::apply_rho_update(int j) { return impl_->apply_rho(j); }

// ---------------------------------------------------------------------------
// Public operations.

double evaluate_G(const VariablePool& pool, const HiddenApproximation& h,
                  const FactorizedModel& p, const Evidence& ev, const Evidence& c) {
  if (c.empty()) {
    HiddenSolver solver(pool, p, ev, h);
    return solver.bound();
  }
  // Conditioned diagnostic path.
  std::vector<TableFactor> q_tables = h.q().factor_tables();
  std::vector<TableFactor> q_restricted;
  for (const auto& t : q_tables) q_restricted.push_back(factor_restrict(t, c));
  double log_qc = log_total_mass(q_restricted);
  if (log_qc == kNegInf) return kNegInf;

  double f = 0.0;
  for (const auto& mf : p.factors) {
    std::vector<VarId> tv;
    for (VarId v : mf.table.scope.vars())
      if (h.q().family_of(v) >= 0) tv.push_back(v);
    TableFactor cond;
    if (!conditional_marginal(q_tables, Scope(tv, pool), c, cond)) return kNegInf;
    double e = expected_log(factor_restrict(mf.table, ev), cond, ev);
    if (e == kNegInf) return kNegInf;
    f += e;
  }
  f -= p.log_z;
  for (int j = 0; j < h.q().family_count(); ++j) {
    TableFactor cond;
    if (!conditional_marginal(q_tables, h.q().family(j).family_scope(), c, cond))
      return kNegInf;
    f -= expected_log(h.q().family(j).cpt, cond, Evidence{});
    f += expected_log(h.rho_block(j), cond, Evidence{});
  }
  return f + log_qc - expected_R_sum(pool, h, c) + 1.0;
}

double expected_R_sum(const VariablePool& pool, const HiddenApproximation& h, const Evidence& c) {
  VarId offset = pool.size();
  // The conditioning c applies to Q only: its V-bindings clamp the shadow
  // copy, while R's own summation index v runs free. T ids are shared, which
  // ties R's t to the same assignment Q weights.
  Evidence shadowed_c;
  for (const auto& [v, s] : c.bindings()) {
    bool is_hidden = std::find(h.hidden().begin(), h.hidden().end(), v) != h.hidden().end();
    shadowed_c.set(is_hidden ? v + offset : v, s);
  }
  std::vector<TableFactor> tables;
  for (const auto& fam : h.q().families()) {
    TableFactor t = fam.cpt;
    t.scope = shadow_scope(t.scope, h.hidden(), offset);
    tables.push_back(factor_restrict(t, shadowed_c));
  }
  for (int j = 0; j < h.q().family_count(); ++j) tables.push_back(h.rho_block(j));
  double log_joint = log_total_mass(tables);
  if (log_joint == kNegInf) return 0.0;

  // Normalize by Q(c).
  std::vector<TableFactor> q_restricted;
  for (const auto& fam : h.q().families()) q_restricted.push_back(factor_restrict(fam.cpt, c));
  double log_qc = log_total_mass(q_restricted);
  if (log_qc == kNegInf) throw StructuralError("expected_R_sum: conditioning context has no mass");
  return std::exp(log_joint - log_qc);
}

bool update_theta_h(const VariablePool& pool, HiddenApproximation& h, const FactorizedModel& p,
                    const Evidence& ev, int j) {
  HiddenSolver solver(pool, p, ev, h);
  bool ok = solver.apply_theta_update(j);
  h = solver.approx();
  return ok;
}

bool update_rho(const VariablePool& pool, HiddenApproximation& h, int j) {
  FactorizedModel dummy;  // rho updates never touch the target model
  HiddenSolver solver(pool, dummy, Evidence{}, h);
  bool ok = solver.apply_rho_update(j);
  h = solver.approx();
  return ok;
}

QStructure mixture_mean_field(const std::vector<std::string>& t_names, int k) {
  if (k < 1) throw StructuralError("mixture component count must be >= 1");
  QStructure s;
  s.hidden.push_back(HiddenVarDecl{"V_mix", k});
  s.families.push_back(FamilyDecl{"V_mix", {}});
  for (const auto& n : t_names) s.families.push_back(FamilyDecl{n, {"V_mix"}});
  return s;
}

HiddenFitResult fit_hidden(const FactorizedModel& p, const Evidence& ev,
                           const ResolvedStructure& rs, const OptimizerOptions& opts) {
  {
    std::set<VarId> declared;
    for (const auto& [child, parents] : rs.families) declared.insert(child);
    for (VarId v : p.unobserved_vars(ev))
      if (!declared.count(v))
        throw StructuralError("structure misses unobserved variable '" + rs.pool.name(v) + "'");
    for (VarId hv : rs.hidden_ids)
      if (!declared.count(hv))
        throw StructuralError("hidden variable '" + rs.pool.name(hv) + "' has no family");
    if (declared.size() != p.unobserved_vars(ev).size() + rs.hidden_ids.size())
      throw StructuralError("structure declares variables outside T and V");
  }

  HiddenFitResult result;
  HiddenSolver solver(rs.pool, p, ev,
                      HiddenApproximation(uniform_bn(rs), rs.hidden_ids));
  for (int r = 0; r < opts.restarts; ++r) {
    HiddenApproximation init(random_bn_for_restart(rs, opts.seed, r), rs.hidden_ids);
    solver.reset(init);
    std::vector<double> trace;
    trace.push_back(solver.bound());
    bool clean = true;
    // Rho warm-up sweep so the entropy bound starts self-consistent.
    for (int j : solver.approx().q().topo_order()) {
      clean = solver.apply_rho_update(j) && clean;
      trace.push_back(solver.bound());
    }
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
      double start = trace.back();
      for (int j : solver.approx().q().topo_order()) {
        clean = solver.apply_theta_update(j) && clean;
        trace.push_back(solver.bound());
      }
      for (int j : solver.approx().q().topo_order()) {
        clean = solver.apply_rho_update(j) && clean;
        trace.push_back(solver.bound());
      }
      double end = trace.back();
      if (start == kNegInf && end == kNegInf) break;
      if (std::abs(end - start) <= opts.tol * std::max(1.0, std::abs(end))) break;
    }
    double final_bound = trace.back();
    result.all_traces.push_back(trace);
    result.restart_bounds.push_back(final_bound);
    if (!clean)
      result.diagnostics.push_back("restart " + std::to_string(r) +
                                   ": an update hit a zero-mass context");
    if (result.restart_index < 0 || final_bound > result.bound) {
      result.bound = final_bound;
      result.restart_index = r;
      result.trace = std::move(trace);
      result.approx = solver.approx();
    }
  }
  result.degenerate = (result.bound == kNegInf);
  result.marginal_bound = marginal_bound_exact(rs.pool, result.approx, p, ev);
  return result;
}

// ---------------------------------------------------------------------------
// Enumeration diagnostics.

namespace {

struct JointEnumeration {
  Scope scope;                 // T then V, q's variable order
  std::vector<double> q_mass;  // normalized joint Q(t, v)
  std::vector<double> p_mass;  // unnormalized prod phi(t, o), over T only
  std::vector<VarId> t_vars;
};

JointEnumeration enumerate_joint(const VariablePool& pool, const HiddenApproximation& h,
                                 const FactorizedModel& p, const Evidence& ev) {
  JointEnumeration je;
  std::vector<VarId> vars;
  for (VarId v : h.q().variables())
    if (std::find(h.hidden().begin(), h.hidden().end(), v) == h.hidden().end()) {
      vars.push_back(v);
      je.t_vars.push_back(v);
    }
  for (VarId v : h.hidden()) vars.push_back(v);
  je.scope = Scope(vars, pool);
  if (je.scope.size() > kEnumerationCap)
    throw StructuralError("hidden-variable diagnostic exceeds the enumeration cap");

  auto q_tables = h.q().factor_tables();
  je.q_mass.resize(static_cast<size_t>(je.scope.size()));
  je.p_mass.resize(static_cast<size_t>(je.scope.size()));
  std::vector<int> states(static_cast<size_t>(je.scope.arity()));
  std::vector<int> full(static_cast<size_t>(pool.size()), 0);
  std::vector<int> local;
  double q_total = 0.0;
  for (std::int64_t cidx = 0; cidx < je.scope.size(); ++cidx) {
    je.scope.states_of(cidx, states);
    for (int i = 0; i < je.scope.arity(); ++i)
      full[static_cast<size_t>(je.scope.var(i))] = states[static_cast<size_t>(i)];
    double qm = 1.0;
    for (const auto& t : q_tables) {
      local.assign(static_cast<size_t>(t.scope.arity()), 0);
      for (int i = 0; i < t.scope.arity(); ++i)
        local[static_cast<size_t>(i)] = full[static_cast<size_t>(t.scope.var(i))];
      qm *= t[t.scope.index_of(local)];
    }
    double pm = 1.0;
    for (const auto& mf : p.factors) {
      const Scope& s = mf.table.scope;
      local.assign(static_cast<size_t>(s.arity()), 0);
      for (int i = 0; i < s.arity(); ++i) {
        VarId v = s.var(i);
        auto bound = ev.state(v);
        local[static_cast<size_t>(i)] = bound ? *bound : full[static_cast<size_t>(v)];
      }
      pm *= mf.table[s.index_of(local)];
    }
    je.q_mass[static_cast<size_t>(cidx)] = qm;
    je.p_mass[static_cast<size_t>(cidx)] = pm;
    q_total += qm;
  }
  if (q_total <= 0.0) throw StructuralError("hidden-variable diagnostic: Q has no mass");
  for (double& x : je.q_mass) x /= q_total;
  return je;
}

}  // namespace

InfoDecomposition info_decomposition(const VariablePool& pool, const HiddenApproximation& h,
                                     const FactorizedModel& p, const Evidence& ev) {
  JointEnumeration je = enumerate_joint(pool, h, p, ev);
  int t_arity = static_cast<int>(je.t_vars.size());
  std::int64_t t_size = 1;
  for (int i = 0; i < t_arity; ++i) t_size *= je.scope.card(i);
  std::int64_t v_size = je.scope.size() / t_size;

  // Row-major [T..., V...]: index = t * v_size + v.
  std::vector<double> qt(static_cast<size_t>(t_size), 0.0);
  std::vector<double> qv(static_cast<size_t>(v_size), 0.0);
  for (std::int64_t t = 0; t < t_size; ++t)
    for (std::int64_t v = 0; v < v_size; ++v) {
      double m = je.q_mass[static_cast<size_t>(t * v_size + v)];
      qt[static_cast<size_t>(t)] += m;
      qv[static_cast<size_t>(v)] += m;
    }

  InfoDecomposition out;
  for (std::int64_t v = 0; v < v_size; ++v) {
    if (qv[static_cast<size_t>(v)] == 0.0) continue;
    double f_cond = 0.0;
    for (std::int64_t t = 0; t < t_size; ++t) {
      double q_tv = je.q_mass[static_cast<size_t>(t * v_size + v)];
      if (q_tv == 0.0) continue;
      double q_t_given_v = q_tv / qv[static_cast<size_t>(v)];
      double pm = je.p_mass[static_cast<size_t>(t * v_size + v)];
      if (pm == 0.0) {
        f_cond = kNegInf;
        break;
      }
      f_cond += q_t_given_v * (std::log(pm) - std::log(q_t_given_v));
    }
    if (f_cond == kNegInf) {
      out.avg_conditional_bound = kNegInf;
      break;
    }
    out.avg_conditional_bound += qv[static_cast<size_t>(v)] * (f_cond - p.log_z);
  }
  for (std::int64_t t = 0; t < t_size; ++t)
    for (std::int64_t v = 0; v < v_size; ++v) {
      double q_tv = je.q_mass[static_cast<size_t>(t * v_size + v)];
      if (q_tv == 0.0) continue;
      out.mutual_info +=
          q_tv * std::log(q_tv / (qt[static_cast<size_t>(t)] * qv[static_cast<size_t>(v)]));
    }
  out.mutual_info = std::max(out.mutual_info, 0.0);
  return out;
}

double marginal_bound_exact(const VariablePool& pool, const HiddenApproximation& h,
                            const FactorizedModel& p, const Evidence& ev, std::int64_t cap) {
  {
    std::int64_t size = 1;
    for (VarId v : h.q().variables()) {
      size *= pool.card(v);
      if (size > cap) return std::numeric_limits<double>::quiet_NaN();
    }
  }
  JointEnumeration je = enumerate_joint(pool, h, p, ev);
  int t_arity = static_cast<int>(je.t_vars.size());
  std::int64_t t_size = 1;
  for (int i = 0; i < t_arity; ++i) t_size *= je.scope.card(i);
  std::int64_t v_size = je.scope.size() / t_size;
  double f = 0.0;
  for (std::int64_t t = 0; t < t_size; ++t) {
    double qt = 0.0;
    for (std::int64_t v = 0; v < v_size; ++v)
      qt += je.q_mass[static_cast<size_t>(t * v_size + v)];
    if (qt == 0.0) continue;
    double pm = je.p_mass[static_cast<size_t>(t * v_size)];
    if (pm == 0.0) return kNegInf;
    f += qt * (std::log(pm) - std::log(qt));
  }
  return f - p.log_z;
}

}  // namespace structvar

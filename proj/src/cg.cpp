#include "structvar/cg.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "structvar/rng.hpp"
#include "term_loop.hpp"

namespace structvar {

CgApproximation::CgApproximation(const VariablePool& pool, std::vector<DirectedFamily> families,
                                 std::vector<TableFactor> potentials)
    : families_(std::move(families)), potentials_(std::move(potentials)) {
  family_index_.assign(static_cast<size_t>(pool.size()), -1);
  Dag dag(pool.size());
  for (size_t j = 0; j < families_.size(); ++j) {
    const auto& f = families_[j];
    if (family_index_[static_cast<size_t>(f.child)] != -1)
      throw StructuralError("two families declare the same child");
    family_index_[static_cast<size_t>(f.child)] = static_cast<int>(j);
    vars_.push_back(f.child);
    for (VarId u : f.parents.vars()) dag.add_edge(u, f.child);
  }
  for (const auto& f : families_)
    for (VarId u : f.parents.vars())
      if (family_index_[static_cast<size_t>(u)] < 0)
        throw StructuralError("family parent is not a variable of the approximation");
  if (!dag.is_acyclic()) throw StructuralError("chain graph's directed part has a cycle");
  for (const auto& psi : potentials_) {
    for (VarId v : psi.scope.vars())
      if (family_index_[static_cast<size_t>(v)] < 0)
        throw StructuralError("potential variable is not a variable of the approximation");
    if (std::abs(psi.total() - 1.0) > kPotentialSumTol)
      throw StructuralError("potential does not sum to one");
  }
  for (VarId v : dag.topological_order()) {
    int j = family_index_[static_cast<size_t>(v)];
    if (j >= 0) topo_families_.push_back(j);
  }
  std::vector<TableFactor> tables = factor_tables();
  log_zq_ = log_total_mass(tables);
}

int CgApproximation::family_of(VarId v) const {
  if (v < 0 || static_cast<size_t>(v) >= family_index_.size()) return -1;
  return family_index_[static_cast<size_t>(v)];
}

void CgApproximation::set_cpt(int j, TableFactor cpt) {
  auto& fam = families_[static_cast<size_t>(j)];
  if (!(cpt.scope == fam.cpt.scope)) throw StructuralError("set_cpt: scope mismatch");
  fam.cpt = std::move(cpt);
}

void CgApproximation::set_potential(int k, TableFactor psi) {
  auto& pot = potentials_[static_cast<size_t>(k)];
  if (!(psi.scope == pot.scope)) throw StructuralError("set_potential: scope mismatch");
  pot = std::move(psi);
}

std::vector<TableFactor> CgApproximation::factor_tables() const {
  std::vector<TableFactor> tables;
  tables.reserve(families_.size() + potentials_.size());
  for (const auto& f : families_) tables.push_back(f.cpt);
  for (const auto& psi : potentials_) tables.push_back(psi);
  return tables;
}

CgApproximation posterior_chain_graph(const FactorizedModel& p, const Evidence& ev) {
  if (!p.directed) throw StructuralError("posterior_chain_graph requires a directed target");
  std::vector<DirectedFamily> families;
  std::vector<TableFactor> potentials;
  for (const auto& mf : p.factors) {
    if (ev.binds(mf.child)) {
      // Observation induces a potential over the unobserved parents.
      TableFactor psi = factor_reduce(mf.table, ev);
      if (psi.scope.empty()) continue;
      if (!normalize_total(psi))
        throw StructuralError("observed family has zero mass under the evidence");
      potentials.push_back(std::move(psi));
    } else {
      TableFactor cpt = factor_reduce(mf.table, ev);
      families.push_back(make_family(mf.child, cpt));
    }
  }
  return CgApproximation(p.pool, std::move(families), std::move(potentials));
}

FactorizedModel to_factorized(const VariablePool& pool, const CgApproximation& q) {
  FactorizedModel m;
  std::vector<VarId> remap(static_cast<size_t>(pool.size()), -1);
  for (VarId v : q.variables())
    remap[static_cast<size_t>(v)] = m.pool.add(pool.name(v), pool.card(v), 1);
  auto remap_table = [&](const TableFactor& t) {
    std::vector<VarId> vars;
    std::vector<int> cards;
    for (int i = 0; i < t.scope.arity(); ++i) {
      vars.push_back(remap[static_cast<size_t>(t.scope.var(i))]);
      cards.push_back(t.scope.card(i));
    }
    return TableFactor(Scope(vars, cards), t.values);
  };
  for (const auto& fam : q.families()) {
    ModelFactor mf;
    mf.table = remap_table(fam.cpt);
    mf.is_cpt = true;
    mf.child = remap[static_cast<size_t>(fam.child)];
    m.factors.push_back(std::move(mf));
  }
  for (const auto& psi : q.potentials()) {
    ModelFactor mf;
    mf.table = remap_table(psi);
    mf.is_cpt = false;
    m.factors.push_back(std::move(mf));
  }
  m.directed = false;
  m.log_z = q.log_zq();
  return m;
}

// ---------------------------------------------------------------------------

struct CgSolver::Impl {
  const VariablePool& pool;
  const FactorizedModel& p;
  Evidence ev;
  CgApproximation q;

  std::vector<TableFactor> restricted_p;
  std::vector<std::vector<VarId>> p_t_vars;
  std::vector<TableFactor> q_tables;  // cpts then potentials

  std::unique_ptr<MarginalEngine> bound_engine;
  std::vector<int> bound_query_p;
  std::vector<int> bound_query_fam;
  std::vector<int> bound_query_pot;

  struct BlockPlan {
    std::unique_ptr<MarginalEngine> engine;
    std::vector<detail::ConditionedTerm> term_shape;  // tables rebound on use
    struct TermSource {
      int kind;  // 0: p factor, 1: family, 2: potential
      int index;
      int query;
    };
    std::vector<TermSource> sources;
    int w_query = -1;
    Scope w;
  };
  std::vector<BlockPlan> cpd_plans;
  std::vector<BlockPlan> pot_plans;

  Impl(const VariablePool& pool_, const FactorizedModel& p_, Evidence ev_, CgApproximation q_)
      : pool(pool_), p(p_), ev(std::move(ev_)), q(std::move(q_)) {
    for (const auto& f : p.factors) {
      restricted_p.push_back(factor_restrict(f.table, ev));
      std::vector<VarId> tv;
      for (VarId v : f.table.scope.vars())
        if (q.family_of(v) >= 0) tv.push_back(v);
      p_t_vars.push_back(std::move(tv));
    }
    q_tables = q.factor_tables();

    std::vector<Scope> factor_scopes;
    for (const auto& t : q_tables) factor_scopes.push_back(t.scope);
    std::vector<Scope> queries;
    for (const auto& tv : p_t_vars) {
      bound_query_p.push_back(static_cast<int>(queries.size()));
      queries.push_back(Scope(tv, pool));
    }
    for (int j = 0; j < q.family_count(); ++j) {
      bound_query_fam.push_back(static_cast<int>(queries.size()));
      queries.push_back(q.family(j).family_scope());
    }
    for (int k = 0; k < q.potential_count(); ++k) {
      bound_query_pot.push_back(static_cast<int>(queries.size()));
      queries.push_back(q.potential(k).scope);
    }
    bound_engine = std::make_unique<MarginalEngine>(factor_scopes, queries);
    cpd_plans.resize(static_cast<size_t>(q.family_count()));
    pot_plans.resize(static_cast<size_t>(q.potential_count()));
  }

  std::vector<VarId> family_scope_vars(int j) const {
    std::vector<VarId> w = q.family(j).parents.vars();
    w.push_back(q.family(j).child);
    return w;
  }

  void refresh_tables() {
    q_tables.clear();
    for (const auto& f : q.families()) q_tables.push_back(f.cpt);
    for (const auto& psi : q.potentials()) q_tables.push_back(psi);
  }

  BlockPlan& ensure_plan(bool is_pot, int idx, const std::vector<VarId>& w_vars,
                         int skip_family, int skip_potential) {
    auto& slot = is_pot ? pot_plans[static_cast<size_t>(idx)] : cpd_plans[static_cast<size_t>(idx)];
    if (slot.engine) return slot;
    std::vector<Scope> factor_scopes;
    for (const auto& t : q_tables) factor_scopes.push_back(t.scope);
    std::vector<Scope> queries;
    auto add_query = [&](std::span<const VarId> svars) {
      std::vector<VarId> u(w_vars);
      for (VarId v : svars)
        if (std::find(u.begin(), u.end(), v) == u.end()) u.push_back(v);
      queries.push_back(Scope(u, pool));
      return static_cast<int>(queries.size()) - 1;
    };
    for (size_t i = 0; i < p.factors.size(); ++i)
      slot.sources.push_back({0, static_cast<int>(i), add_query(p_t_vars[i])});
    for (int j2 = 0; j2 < q.family_count(); ++j2) {
      if (j2 == skip_family) continue;
      slot.sources.push_back({1, j2, add_query(family_scope_vars(j2))});
    }
    for (int k2 = 0; k2 < q.potential_count(); ++k2) {
      if (k2 == skip_potential) continue;
      slot.sources.push_back({2, k2, add_query(q.potential(k2).scope.vars())});
    }
    slot.w_query = static_cast<int>(queries.size());
    queries.push_back(Scope(w_vars, pool));
    slot.w = queries.back();
    slot.engine = std::make_unique<MarginalEngine>(factor_scopes, queries);
    return slot;
  }

  double bound_value() {
    bound_engine->calibrate(q_tables);
    if (bound_engine->degenerate()) return kNegInf;
    double log_zq = bound_engine->log_partition();
    double f = 0.0;
    for (size_t i = 0; i < restricted_p.size(); ++i) {
      double e = expected_log(restricted_p[i], bound_engine->marginal(bound_query_p[i]), ev);
      if (e == kNegInf) return kNegInf;
      f += e;
    }
    f -= p.log_z;
    for (int j = 0; j < q.family_count(); ++j)
      f -= expected_log(q.family(j).cpt,
                        bound_engine->marginal(bound_query_fam[static_cast<size_t>(j)]),
                        Evidence{});
    for (int k = 0; k < q.potential_count(); ++k)
      f -= expected_log(q.potential(k),
                        bound_engine->marginal(bound_query_pot[static_cast<size_t>(k)]),
                        Evidence{});
    q.set_log_zq(log_zq);
    return f + log_zq;
  }

  TableFactor block_energies(bool is_pot, int idx) {
    std::vector<VarId> w_vars =
        is_pot ? q.potential(idx).scope.vars() : family_scope_vars(idx);
    BlockPlan& plan = ensure_plan(is_pot, idx, w_vars, is_pot ? -1 : idx, is_pot ? idx : -1);
    plan.engine->calibrate(q_tables);
    std::vector<detail::ConditionedTerm> terms;
    terms.reserve(plan.sources.size());
    for (const auto& s : plan.sources) {
      const TableFactor* table = nullptr;
      double sign = -1.0;
      if (s.kind == 0) {
        table = &restricted_p[static_cast<size_t>(s.index)];
        sign = 1.0;
      } else if (s.kind == 1) {
        table = &q.family(s.index).cpt;
      } else {
        table = &q.potential(s.index);
      }
      terms.push_back(detail::ConditionedTerm{table, sign, s.query});
    }
    TableFactor energy(plan.w, 0.0);
    detail::accumulate_conditioned_terms(*plan.engine, plan.w_query, plan.w, terms, ev, energy);
    return energy;
  }

  static void exp_normalize_columns(TableFactor& cpt, const TableFactor& energy, bool& clean) {
    int child_card = cpt.scope.card(cpt.scope.arity() - 1);
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
  }

  static void exp_normalize_total(TableFactor& psi, const TableFactor& energy, bool& clean) {
    double mx = kNegInf;
    for (double e : energy.values) mx = std::max(mx, e);
    if (mx == kNegInf || std::isnan(mx)) {
      std::fill(psi.values.begin(), psi.values.end(),
                1.0 / static_cast<double>(psi.scope.size()));
      clean = false;
      return;
    }
    double z = 0.0;
    for (std::int64_t c = 0; c < psi.scope.size(); ++c) {
      double e = energy[c];
      psi[c] = (e == kNegInf || std::isnan(e)) ? 0.0 : std::exp(e - mx);
      z += psi[c];
    }
    for (double& x : psi.values) x /= z;
  }

  // Geometric interpolation old^(1-g) new^g, renormalized per block.
  static TableFactor damped_blend(const TableFactor& old_t, const TableFactor& new_t,
                                  double gamma, bool per_column) {
    TableFactor out = old_t;
    for (size_t i = 0; i < out.values.size(); ++i) {
      double a = old_t.values[i], b = new_t.values[i];
      out.values[i] = (a <= 0.0 || b <= 0.0)
                          ? 0.0
                          : std::exp((1.0 - gamma) * std::log(a) + gamma * std::log(b));
    }
    if (per_column) {
      int child_card = out.scope.card(out.scope.arity() - 1);
      for (std::int64_t base = 0; base < out.scope.size(); base += child_card) {
        double s = 0.0;
        for (int x = 0; x < child_card; ++x) s += out[base + x];
        if (s <= 0.0)
          for (int x = 0; x < child_card; ++x) out[base + x] = 1.0 / child_card;
        else
          for (int x = 0; x < child_card; ++x) out[base + x] /= s;
      }
    } else {
      if (!normalize_total(out))
        std::fill(out.values.begin(), out.values.end(),
                  1.0 / static_cast<double>(out.scope.size()));
    }
    return out;
  }

  bool apply_block(bool is_pot, int idx, double damping) {
    double before = bound_value();
    TableFactor energy = block_energies(is_pot, idx);
    bool clean = true;
    TableFactor old_table = is_pot ? q.potential(idx) : q.family(idx).cpt;
    TableFactor updated = old_table;
    if (is_pot)
      exp_normalize_total(updated, energy, clean);
    else
      exp_normalize_columns(updated, energy, clean);

    auto install = [&](const TableFactor& t) {
      if (is_pot)
        q.set_potential(idx, t);
      else
        q.set_cpt(idx, t);
      refresh_tables();
    };
    install(updated);
    double after = bound_value();
    if (after >= before - 1e-9 || before == kNegInf) return clean;

    // The chain-graph stationary update has no ascent proof; damp toward the
    // old block until the bound stops decreasing, reverting as a last resort.
    double gamma = damping;
    while (gamma >= 1e-3) {
      install(damped_blend(old_table, updated, gamma, !is_pot));
      after = bound_value();
      if (after >= before - 1e-9) return clean;
      gamma *= 0.5;
    }
    install(old_table);
    bound_value();  // refresh log_zq for the restored tables
    return false;
  }
};

CgSolver::CgSolver(const VariablePool& pool, const FactorizedModel& p, const Evidence& ev,
                   CgApproximation q)
    : impl_(std::make_unique<Impl>(pool, p, ev, std::move(q))) {}
CgSolver::~CgSolver() = default;
CgSolver::CgSolver(CgSolver&&) noexcept = default;

const CgApproximation& CgSolver::approx() const { return impl_->q; }

void CgSolver::reset(const CgApproximation& q) {
  for (int j = 0; j < q.family_count(); ++j) impl_->q.set_cpt(j, q.family(j).cpt);
  for (int k = 0; k < q.potential_count(); ++k) impl_->q.set_potential(k, q.potential(k));
  impl_->refresh_tables();
}

double CgSolver::bound() { return impl_->bound_value(); }
TableFactor CgSolver::cpd_energy_table(int j) { return impl_->block_energies(false, j); }
TableFactor CgSolver::potential_energy_table(int k) { return impl_->block_energies(true, k); }
bool CgSolver::apply_cpd_update(int j, double damping) {
  return impl_->apply_block(false, j, damping);
}
bool CgSolver::apply_potential_update(int k, double damping) {
  return impl_->apply_block(true, k, damping);
}

// ---------------------------------------------------------------------------

double evaluate_bound_cg(const VariablePool& pool, const CgApproximation& q,
                         const FactorizedModel& p, const Evidence& ev, const Evidence& c) {
  if (c.empty()) {
    CgSolver solver(pool, p, ev, q);
    return solver.bound();
  }
  std::vector<TableFactor> q_tables = q.factor_tables();
  double log_zq = log_total_mass(q_tables);
  if (log_zq == kNegInf) return kNegInf;
  std::vector<TableFactor> q_restricted;
  for (const auto& t : q_tables) q_restricted.push_back(factor_restrict(t, c));
  double log_qc = log_total_mass(q_restricted) - log_zq;
  if (log_qc == kNegInf) return kNegInf;

  double f = 0.0;
  for (const auto& mf : p.factors) {
    std::vector<VarId> tv;
    for (VarId v : mf.table.scope.vars())
      if (q.family_of(v) >= 0) tv.push_back(v);
    TableFactor cond;
    if (!conditional_marginal(q_tables, Scope(tv, pool), c, cond)) return kNegInf;
    double e = expected_log(factor_restrict(mf.table, ev), cond, ev);
    if (e == kNegInf) return kNegInf;
    f += e;
  }
  f -= p.log_z;
  for (int j = 0; j < q.family_count(); ++j) {
    TableFactor cond;
    if (!conditional_marginal(q_tables, q.family(j).family_scope(), c, cond)) return kNegInf;
    f -= expected_log(q.family(j).cpt, cond, Evidence{});
  }
  for (int k = 0; k < q.potential_count(); ++k) {
    TableFactor cond;
    if (!conditional_marginal(q_tables, q.potential(k).scope, c, cond)) return kNegInf;
    f -= expected_log(q.potential(k), cond, Evidence{});
  }
  return f + log_zq + log_qc;
}

bool update_cpd_cg(const VariablePool& pool, CgApproximation& q, const FactorizedModel& p,
                   const Evidence& ev, int j, double damping) {
  CgSolver solver(pool, p, ev, q);
  bool ok = solver.apply_cpd_update(j, damping);
  q = solver.approx();
  return ok;
}

bool update_potential(const VariablePool& pool, CgApproximation& q, const FactorizedModel& p,
                      const Evidence& ev, int k, double damping) {
  CgSolver solver(pool, p, ev, q);
  bool ok = solver.apply_potential_update(k, damping);
  q = solver.approx();
  return ok;
}

CgFitResult fit_cg(const FactorizedModel& p, const Evidence& ev, const ResolvedStructure& rs,
                   const OptimizerOptions& opts) {
  if (!rs.hidden_ids.empty())
    throw StructuralError("chain-graph fitting does not support hidden variables");
  {
    std::set<VarId> declared;
    for (const auto& [child, parents] : rs.families) declared.insert(child);
    auto t_vars = p.unobserved_vars(ev);
    for (VarId v : t_vars)
      if (!declared.count(v))
        throw StructuralError("structure misses unobserved variable '" + rs.pool.name(v) + "'");
    if (declared.size() != t_vars.size())
      throw StructuralError("structure declares variables outside T");
  }

  auto make_initial = [&rs](std::uint64_t seed, int restart) {
    BnApproximation bn = random_bn_for_restart(rs, seed, restart);
    std::vector<DirectedFamily> families(bn.families().begin(), bn.families().end());
    std::vector<TableFactor> potentials;
    for (size_t k = 0; k < rs.potential_scopes.size(); ++k) {
      auto rng = rng_stream(seed, "init-psi:" + std::to_string(k),
                            static_cast<std::uint64_t>(restart));
      TableFactor psi{Scope(rs.potential_scopes[k], rs.pool)};
      std::vector<double> draw =
          sample_dirichlet(rng, 1.0, static_cast<int>(psi.scope.size()));
      psi.values.assign(draw.begin(), draw.end());
      potentials.push_back(std::move(psi));
    }
    return CgApproximation(rs.pool, std::move(families), std::move(potentials));
  };

  CgFitResult result;
  CgSolver solver(rs.pool, p, ev, make_initial(opts.seed, 0));
  for (int r = 0; r < opts.restarts; ++r) {
    solver.reset(make_initial(opts.seed, r));
    std::vector<double> trace;
    trace.push_back(solver.bound());
    bool clean = true;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
      double start = trace.back();
      for (int j : solver.approx().topo_order()) {
        clean = solver.apply_cpd_update(j, opts.damping) && clean;
        trace.push_back(solver.bound());
      }
      for (int k = 0; k < solver.approx().potential_count(); ++k) {
        clean = solver.apply_potential_update(k, opts.damping) && clean;
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
                                   ": an update fell back or was reverted");
    if (result.restart_index < 0 || final_bound > result.bound) {
      result.bound = final_bound;
      result.restart_index = r;
      result.trace = std::move(trace);
      result.approx = solver.approx();
    }
  }
  result.degenerate = (result.bound == kNegInf);
  return result;
}

// ---------------------------------------------------------------------------
// Lemma-style derivative diagnostics.

namespace {

// Normalized E_Q[f] with Q(t) = prod theta prod psi / Z, by enumeration.
double cg_expectation(const VariablePool& pool, const CgApproximation& q, const TableFactor& f) {
  Scope t_scope(q.variables(), pool);
  if (t_scope.size() > kEnumerationCap)
    throw StructuralError("cg derivative check exceeds the enumeration cap");
  std::vector<TableFactor> tables = q.factor_tables();
  std::vector<int> states(static_cast<size_t>(t_scope.arity()));
  std::vector<int> full(static_cast<size_t>(pool.size()), 0);
  std::vector<int> local;
  double num = 0.0, den = 0.0;
  for (std::int64_t c = 0; c < t_scope.size(); ++c) {
    t_scope.states_of(c, states);
    for (int i = 0; i < t_scope.arity(); ++i)
      full[static_cast<size_t>(t_scope.var(i))] = states[static_cast<size_t>(i)];
    double mass = 1.0;
    for (const auto& t : tables) {
      local.assign(static_cast<size_t>(t.scope.arity()), 0);
      for (int i = 0; i < t.scope.arity(); ++i)
        local[static_cast<size_t>(i)] = full[static_cast<size_t>(t.scope.var(i))];
      mass *= t[t.scope.index_of(local)];
    }
    local.assign(static_cast<size_t>(f.scope.arity()), 0);
    for (int i = 0; i < f.scope.arity(); ++i)
      local[static_cast<size_t>(i)] = full[static_cast<size_t>(f.scope.var(i))];
    num += mass * f[f.scope.index_of(local)];
    den += mass;
  }
  if (den <= 0.0) throw StructuralError("cg derivative check: zero-mass chain graph");
  return num / den;
}

double cg_conditional_expectation(const VariablePool& pool, const CgApproximation& q,
                                  const TableFactor& f, const Evidence& clamp) {
  TableFactor cond;
  if (!conditional_marginal(q.factor_tables(), f.scope, clamp, cond))
    throw StructuralError("cg derivative check: zero-mass conditioning context");
  double acc = 0.0;
  for (std::int64_t c = 0; c < f.scope.size(); ++c) acc += cond[c] * f[c];
  return acc;
}

double cg_marginal_mass(const CgApproximation& q, const Evidence& clamp) {
  std::vector<TableFactor> tables = q.factor_tables();
  double log_zq = log_total_mass(tables);
  std::vector<TableFactor> restricted;
  for (const auto& t : tables) restricted.push_back(factor_restrict(t, clamp));
  double log_mass = log_total_mass(restricted);
  return log_mass == kNegInf ? 0.0 : std::exp(log_mass - log_zq);
}

double rel_err(double a, double b) {
  double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / denom;
}

constexpr double kFdStep = 1e-5;

}  // namespace

DerivativeReport cg_theta_derivative_check(const VariablePool& pool, const CgApproximation& q,
                                           const TableFactor& f, int j, int x_j,
                                           std::span<const int> u_j) {
  const auto& fam = q.family(j);
  std::vector<int> cell_states(u_j.begin(), u_j.end());
  cell_states.push_back(x_j);
  std::int64_t cell = fam.cpt.scope.index_of(cell_states);
  Evidence clamp;
  for (int i = 0; i < fam.parents.arity(); ++i)
    clamp.set(fam.parents.var(i), u_j[static_cast<size_t>(i)]);
  clamp.set(fam.child, x_j);

  double theta = fam.cpt[cell];
  DerivativeReport report;
  report.analytic = (cg_marginal_mass(q, clamp) / theta) *
                    (cg_conditional_expectation(pool, q, f, clamp) - cg_expectation(pool, q, f));

  CgApproximation mutable_q = q;
  TableFactor base = fam.cpt;
  TableFactor bump = base;
  bump[cell] = base[cell] + kFdStep;
  mutable_q.set_cpt(j, bump);
  double hi = cg_expectation(pool, mutable_q, f);
  bump[cell] = base[cell] - kFdStep;
  mutable_q.set_cpt(j, bump);
  double lo = cg_expectation(pool, mutable_q, f);
  report.numeric = (hi - lo) / (2.0 * kFdStep);
  report.rel_error = rel_err(report.analytic, report.numeric);
  return report;
}

DerivativeReport cg_psi_derivative_check(const VariablePool& pool, const CgApproximation& q,
                                         const TableFactor& f, int k, std::int64_t cell) {
  const TableFactor& psi = q.potential(k);
  Evidence clamp;
  std::vector<int> states(static_cast<size_t>(psi.scope.arity()));
  psi.scope.states_of(cell, states);
  for (int i = 0; i < psi.scope.arity(); ++i)
    clamp.set(psi.scope.var(i), states[static_cast<size_t>(i)]);

  DerivativeReport report;
  report.analytic = (cg_marginal_mass(q, clamp) / psi[cell]) *
                    (cg_conditional_expectation(pool, q, f, clamp) - cg_expectation(pool, q, f));

  CgApproximation mutable_q = q;
  TableFactor base = psi;
  TableFactor bump = base;
  bump[cell] = base[cell] + kFdStep;
  mutable_q.set_potential(k, bump);
  double hi = cg_expectation(pool, mutable_q, f);
  bump[cell] = base[cell] - kFdStep;
  mutable_q.set_potential(k, bump);
  double lo = cg_expectation(pool, mutable_q, f);
  report.numeric = (hi - lo) / (2.0 * kFdStep);
  report.rel_error = rel_err(report.analytic, report.numeric);
  return report;
}

}  // namespace structvar

#include "structvar/bn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "structvar/rng.hpp"
#include "term_loop.hpp"

namespace structvar {

namespace {

std::vector<VarId> scope_union(std::span<const VarId> a, std::span<const VarId> b) {
  std::vector<VarId> out(a.begin(), a.end());
  for (VarId v : b)
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  return out;
}

Scope make_scope(const std::vector<VarId>& vars, const VariablePool& pool) {
  return Scope(vars, pool);
}

}  // namespace

BnApproximation::BnApproximation(const VariablePool& pool, std::vector<DirectedFamily> families)
    : families_(std::move(families)), dag_(pool.size()) {
  family_index_.assign(static_cast<size_t>(pool.size()), -1);
  for (size_t j = 0; j < families_.size(); ++j) {
    const auto& f = families_[j];
    if (family_index_[static_cast<size_t>(f.child)] != -1)
      throw StructuralError("two families declare the same child");
    family_index_[static_cast<size_t>(f.child)] = static_cast<int>(j);
    vars_.push_back(f.child);
  }
  for (const auto& f : families_)
    for (VarId u : f.parents.vars()) {
      if (family_index_[static_cast<size_t>(u)] < 0)
        throw StructuralError("family parent is not a variable of the approximation");
      dag_.add_edge(u, f.child);
    }
  if (!dag_.is_acyclic()) throw StructuralError("approximation structure has a cycle");
  for (VarId v : dag_.topological_order()) {
    int j = family_index_[static_cast<size_t>(v)];
    if (j >= 0) topo_families_.push_back(j);
  }
}

int BnApproximation::family_of(VarId v) const {
  if (v < 0 || static_cast<size_t>(v) >= family_index_.size()) return -1;
  return family_index_[static_cast<size_t>(v)];
}

void BnApproximation::set_cpt(int j, TableFactor cpt) {
  auto& fam = families_[static_cast<size_t>(j)];
  if (!(cpt.scope == fam.cpt.scope)) throw StructuralError("set_cpt: scope mismatch");
  fam.cpt = std::move(cpt);
}

std::vector<TableFactor> BnApproximation::factor_tables() const {
  std::vector<TableFactor> tables;
  tables.reserve(families_.size());
  for (const auto& f : families_) tables.push_back(f.cpt);
  return tables;
}

namespace {

BnApproximation build_bn(const ResolvedStructure& rs,
                         const std::function<std::vector<double>(int child_card)>& draw_column) {
  std::vector<DirectedFamily> families;
  for (const auto& [child, parents] : rs.families) {
    DirectedFamily fam;
    fam.child = child;
    fam.parents = Scope(parents, rs.pool);
    std::vector<VarId> scope_vars = parents;
    scope_vars.push_back(child);
    TableFactor cpt(Scope(scope_vars, rs.pool));
    int child_card = rs.pool.card(child);
    for (std::int64_t base = 0; base < cpt.scope.size(); base += child_card) {
      std::vector<double> col = draw_column(child_card);
      for (int x = 0; x < child_card; ++x) cpt[base + x] = col[static_cast<size_t>(x)];
    }
    fam.cpt = std::move(cpt);
    families.push_back(std::move(fam));
  }
  return BnApproximation(rs.pool, std::move(families));
}

}  // namespace

BnApproximation random_bn(const ResolvedStructure& rs, std::mt19937_64& rng) {
  return build_bn(rs, [&rng](int k) { return sample_dirichlet(rng, 1.0, k); });
}

BnApproximation uniform_bn(const ResolvedStructure& rs) {
  return build_bn(rs, [](int k) { return std::vector<double>(static_cast<size_t>(k), 1.0 / k); });
}

BnApproximation random_bn_for_restart(const ResolvedStructure& rs, std::uint64_t seed,
                                      int restart) {
  std::vector<DirectedFamily> families;
  for (const auto& [child, parents] : rs.families) {
    auto rng = rng_stream(seed, "init:" + rs.pool.name(child), static_cast<std::uint64_t>(restart));
    DirectedFamily fam;
    fam.child = child;
    fam.parents = Scope(parents, rs.pool);
    std::vector<VarId> scope_vars = parents;
    scope_vars.push_back(child);
    TableFactor cpt(Scope(scope_vars, rs.pool));
    int child_card = rs.pool.card(child);
    for (std::int64_t base = 0; base < cpt.scope.size(); base += child_card) {
      std::vector<double> col = sample_dirichlet(rng, 1.0, child_card);
      for (int x = 0; x < child_card; ++x) cpt[base + x] = col[static_cast<size_t>(x)];
    }
    fam.cpt = std::move(cpt);
    families.push_back(std::move(fam));
  }
  return BnApproximation(rs.pool, std::move(families));
}

RelevanceSets relevance_sets(const VariablePool& pool, const BnApproximation& q,
                             const FactorizedModel& p) {
  (void)pool;
  RelevanceSets rel;
  int n = q.family_count();
  rel.fp.resize(static_cast<size_t>(n));
  rel.fq.resize(static_cast<size_t>(n));
  const Dag& dag = q.dag();
  for (int j = 0; j < n; ++j) {
    const auto& fam = q.family(j);
    const auto& u = fam.parents.vars();
    for (size_t i = 0; i < p.factors.size(); ++i) {
      const auto& dvars = p.factors[i].table.scope.vars();
      if (!d_separated(dag, fam.child, dvars, u)) rel.fp[static_cast<size_t>(j)].push_back(static_cast<int>(i));
    }
    for (int j2 = 0; j2 < n; ++j2) {
      if (j2 == j) continue;
      const auto& fam2 = q.family(j2);
      std::vector<VarId> y = fam2.parents.vars();
      y.push_back(fam2.child);
      if (!d_separated(dag, fam.child, y, u)) rel.fq[static_cast<size_t>(j)].push_back(j2);
    }
  }
  return rel;
}

// ---------------------------------------------------------------------------
// Solver internals.

struct BnSolver::Impl {
  const VariablePool& pool;
  const FactorizedModel& p;
  Evidence ev;
  BnApproximation q;
  RelevanceSets rel;

  std::vector<TableFactor> restricted_p;      // phi_i(D_i, o)
  std::vector<std::vector<VarId>> p_t_vars;   // D_i restricted to Q's variables
  std::vector<TableFactor> q_tables;

  std::unique_ptr<MarginalEngine> bound_engine;
  std::vector<int> bound_query_p;    // per p factor
  std::vector<int> bound_query_fam;  // per family

  struct Term {
    bool is_p = false;
    int index = -1;
    int query = -1;
  };
  struct FamilyPlan {
    std::unique_ptr<MarginalEngine> engine;
    std::vector<Term> terms;
    int wj_query = -1;
  };
  std::vector<FamilyPlan> reduced_plans;
  std::vector<FamilyPlan> full_plans;

  Impl(const VariablePool& pool_, const FactorizedModel& p_, Evidence ev_, BnApproximation q_)
      : pool(pool_), p(p_), ev(std::move(ev_)), q(std::move(q_)) {
    rel = relevance_sets(pool, q, p);
    restricted_p.reserve(p.factors.size());
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
      queries.push_back(make_scope(tv, pool));
    }
    for (int j = 0; j < q.family_count(); ++j) {
      bound_query_fam.push_back(static_cast<int>(queries.size()));
      queries.push_back(q.family(j).family_scope());
    }
    bound_engine = std::make_unique<MarginalEngine>(factor_scopes, queries);
    reduced_plans.resize(static_cast<size_t>(q.family_count()));
    full_plans.resize(static_cast<size_t>(q.family_count()));
  }

  std::vector<VarId> family_scope_vars(int j) const {
    std::vector<VarId> w = q.family(j).parents.vars();
    w.push_back(q.family(j).child);
    return w;
  }

  FamilyPlan& ensure_plan(int j, bool reduced) {
    auto& slot = reduced ? reduced_plans[static_cast<size_t>(j)] : full_plans[static_cast<size_t>(j)];
    if (slot.engine) return slot;
    std::vector<VarId> wj = family_scope_vars(j);
    std::vector<Scope> factor_scopes;
    for (const auto& t : q_tables) factor_scopes.push_back(t.scope);
    std::vector<Scope> queries;
    auto add_term = [&](bool is_p, int index, std::span<const VarId> svars) {
      Term t;
      t.is_p = is_p;
      t.index = index;
      t.query = static_cast<int>(queries.size());
      queries.push_back(make_scope(scope_union(svars, wj), pool));
      slot.terms.push_back(t);
    };
    if (reduced) {
      for (int i : rel.fp[static_cast<size_t>(j)])
        add_term(true, i, p_t_vars[static_cast<size_t>(i)]);
      for (int j2 : rel.fq[static_cast<size_t>(j)])
        add_term(false, j2, family_scope_vars(j2));
    } else {
      for (size_t i = 0; i < p.factors.size(); ++i)
        add_term(true, static_cast<int>(i), p_t_vars[i]);
      for (int j2 = 0; j2 < q.family_count(); ++j2) {
        if (j2 == j) continue;
        add_term(false, j2, family_scope_vars(j2));
      }
    }
    slot.wj_query = static_cast<int>(queries.size());
    queries.push_back(make_scope(wj, pool));
    slot.engine = std::make_unique<MarginalEngine>(factor_scopes, queries);
    return slot;
  }

  double bound_from_engine() {
    bound_engine->calibrate(q_tables);
    if (bound_engine->degenerate()) return kNegInf;
    double f = 0.0;
    for (size_t i = 0; i < restricted_p.size(); ++i) {
      double e = expected_log(restricted_p[i], bound_engine->marginal(bound_query_p[i]), ev);
      if (e == kNegInf) return kNegInf;
      f += e;
    }
    f -= p.log_z;
    for (int j = 0; j < q.family_count(); ++j) {
      double e = expected_log(q.family(j).cpt,
                              bound_engine->marginal(bound_query_fam[static_cast<size_t>(j)]),
                              Evidence{});
      if (e == kNegInf) return kNegInf;  // unreachable for a consistent model
      f -= e;
    }
    return f;
  }

  TableFactor energies(int j, bool reduced) {
    FamilyPlan& plan = ensure_plan(j, reduced);
    plan.engine->calibrate(q_tables);
    Scope wj = q.family(j).family_scope();
    TableFactor energy(wj, 0.0);
    std::vector<detail::ConditionedTerm> terms;
    terms.reserve(plan.terms.size());
    for (const auto& t : plan.terms)
      terms.push_back(detail::ConditionedTerm{
          t.is_p ? &restricted_p[static_cast<size_t>(t.index)] : &q.family(t.index).cpt,
          t.is_p ? 1.0 : -1.0, t.query});
    detail::accumulate_conditioned_terms(*plan.engine, plan.wj_query, wj, terms, ev, energy);
    if (!reduced)
      for (double& e : energy.values)
        if (e != kNegInf) e -= p.log_z;
    return energy;
  }

  // Exp-normalize a [U..., X] energy table into cpt columns. Returns false if
  // some column had no finite energy and was reset to uniform.
  bool exp_normalize_into(int j, const TableFactor& energy) {
    TableFactor cpt = q.family(j).cpt;
    int child_card = cpt.scope.card(cpt.scope.arity() - 1);
    bool clean = true;
    for (std::int64_t base = 0; base < cpt.scope.size(); base += child_card) {
      double mx = kNegInf;
      for (int x = 0; x < child_card; ++x)
        mx = std::max(mx, energy[base + x]);
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
    q.set_cpt(j, cpt);
    q_tables[static_cast<size_t>(j)] = std::move(cpt);
    return clean;
  }
};

BnSolver::BnSolver(const VariablePool& pool, const FactorizedModel& p, const Evidence& ev,
                   BnApproximation q)
    : impl_(std::make_unique<Impl>(pool, p, ev, std::move(q))) {}
BnSolver::~BnSolver() = default;
BnSolver::BnSolver(BnSolver&&) noexcept = default;

const BnApproximation& BnSolver::approx() const { return impl_->q; }

void BnSolver::reset(const BnApproximation& q) {
  for (int j = 0; j < q.family_count(); ++j) {
    impl_->q.set_cpt(j, q.family(j).cpt);
    impl_->q_tables[static_cast<size_t>(j)] = q.family(j).cpt;
  }
}

double BnSolver::bound() { return impl_->bound_from_engine(); }

TableFactor BnSolver::energy_table(int j, bool reduced) { return impl_->energies(j, reduced); }

bool BnSolver::apply_update(int j) {
  TableFactor energy = impl_->energies(j, true);
  return impl_->exp_normalize_into(j, energy);
}

const RelevanceSets& BnSolver::relevance() const { return impl_->rel; }

// ---------------------------------------------------------------------------
// Public operations.

double evaluate_bound(const VariablePool& pool, const BnApproximation& q,
                      const FactorizedModel& p, const Evidence& ev, const Evidence& c) {
  if (c.empty()) {
    BnSolver solver(pool, p, ev, q);
    return solver.bound();
  }
  std::vector<TableFactor> q_tables = q.factor_tables();
  std::vector<TableFactor> q_restricted;
  q_restricted.reserve(q_tables.size());
  for (const auto& t : q_tables) q_restricted.push_back(factor_restrict(t, c));
  double log_qc = log_total_mass(q_restricted);
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
  return f + log_qc;
}

double energy_bn(const VariablePool& pool, const BnApproximation& q, const FactorizedModel& p,
                 const Evidence& ev, int j, int x_j, std::span<const int> u_j, bool reduced) {
  BnSolver solver(pool, p, ev, q);
  TableFactor energy = solver.energy_table(j, reduced);
  std::vector<int> states(u_j.begin(), u_j.end());
  states.push_back(x_j);
  return energy[energy.scope.index_of(states)];
}

bool update_family(const VariablePool& pool, BnApproximation& q, const FactorizedModel& p,
                   const Evidence& ev, int j) {
  BnSolver solver(pool, p, ev, q);
  bool clean = solver.apply_update(j);
  q.set_cpt(j, solver.approx().family(j).cpt);
  return clean;
}

BnFitResult fit_bn(const FactorizedModel& p, const Evidence& ev, const ResolvedStructure& rs,
                   const OptimizerOptions& opts) {
  for (VarId h : rs.hidden_ids)
    if (rs.pool.card(h) != 1)
      throw StructuralError("fit_bn accepts hidden variables only with cardinality 1");
  {
    std::set<VarId> declared;
    for (const auto& [child, parents] : rs.families) declared.insert(child);
    for (VarId v : p.unobserved_vars(ev))
      if (!declared.count(v))
        throw StructuralError("structure misses unobserved variable '" + rs.pool.name(v) + "'");
    for (VarId h : rs.hidden_ids) declared.erase(h);
    if (declared.size() != p.unobserved_vars(ev).size())
      throw StructuralError("structure declares variables outside T");
  }

  BnFitResult result;
  BnSolver solver(rs.pool, p, ev, uniform_bn(rs));
  for (int r = 0; r < opts.restarts; ++r) {
    BnApproximation init = random_bn_for_restart(rs, opts.seed, r);
    solver.reset(init);
    std::vector<double> trace;
    trace.push_back(solver.bound());
    bool clean = true;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
      double start = trace.back();
      for (int j : solver.approx().topo_order()) {
        clean = solver.apply_update(j) && clean;
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
                                   ": a parent column had no finite energy");
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

FactorizedModel to_factorized(const VariablePool& pool, const BnApproximation& q) {
  FactorizedModel m;
  std::vector<VarId> remap(static_cast<size_t>(pool.size()), -1);
  for (VarId v : q.variables())
    remap[static_cast<size_t>(v)] = m.pool.add(pool.name(v), pool.card(v), 1);
  for (const auto& fam : q.families()) {
    std::vector<VarId> vars;
    std::vector<int> cards;
    for (int i = 0; i < fam.cpt.scope.arity(); ++i) {
      vars.push_back(remap[static_cast<size_t>(fam.cpt.scope.var(i))]);
      cards.push_back(fam.cpt.scope.card(i));
    }
    ModelFactor mf;
    mf.table = TableFactor(Scope(vars, cards), fam.cpt.values);
    mf.is_cpt = true;
    mf.child = remap[static_cast<size_t>(fam.child)];
    m.factors.push_back(std::move(mf));
  }
  m.directed = true;
  m.log_z = 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Derivative diagnostics (enumeration-backed, small fixtures only).

namespace {

// F as a free polynomial of the cpt entries: sum_t Q~(t) [log P~(t,o) -
// log Q~(t)] - log Z_P with Q~ the raw product of tables.
double free_bound_polynomial(const VariablePool& pool, const BnApproximation& q,
                             const FactorizedModel& p, const Evidence& ev) {
  Scope t_scope(q.variables(), pool);
  if (t_scope.size() > kEnumerationCap)
    throw StructuralError("derivative check exceeds the enumeration cap");
  std::vector<int> states(static_cast<size_t>(t_scope.arity()));
  std::vector<int> full(static_cast<size_t>(pool.size()), 0);
  double f = 0.0;
  std::vector<TableFactor> q_tables = q.factor_tables();
  for (std::int64_t c = 0; c < t_scope.size(); ++c) {
    t_scope.states_of(c, states);
    for (int i = 0; i < t_scope.arity(); ++i)
      full[static_cast<size_t>(t_scope.var(i))] = states[static_cast<size_t>(i)];
    double qm = 1.0;
    std::vector<int> local;
    for (const auto& t : q_tables) {
      local.assign(static_cast<size_t>(t.scope.arity()), 0);
      for (int i = 0; i < t.scope.arity(); ++i)
        local[static_cast<size_t>(i)] = full[static_cast<size_t>(t.scope.var(i))];
      qm *= t[t.scope.index_of(local)];
    }
    if (qm == 0.0) continue;
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
    if (pm == 0.0) return kNegInf;
    f += qm * (std::log(pm) - std::log(qm));
  }
  return f - p.log_z;
}

double free_expectation_polynomial(const VariablePool& pool, const BnApproximation& q,
                                   const TableFactor& f) {
  Scope t_scope(q.variables(), pool);
  std::vector<int> states(static_cast<size_t>(t_scope.arity()));
  std::vector<int> full(static_cast<size_t>(pool.size()), 0);
  std::vector<TableFactor> q_tables = q.factor_tables();
  double acc = 0.0;
  std::vector<int> local;
  for (std::int64_t c = 0; c < t_scope.size(); ++c) {
    t_scope.states_of(c, states);
    for (int i = 0; i < t_scope.arity(); ++i)
      full[static_cast<size_t>(t_scope.var(i))] = states[static_cast<size_t>(i)];
    double qm = 1.0;
    for (const auto& t : q_tables) {
      local.assign(static_cast<size_t>(t.scope.arity()), 0);
      for (int i = 0; i < t.scope.arity(); ++i)
        local[static_cast<size_t>(i)] = full[static_cast<size_t>(t.scope.var(i))];
      qm *= t[t.scope.index_of(local)];
    }
    local.assign(static_cast<size_t>(f.scope.arity()), 0);
    for (int i = 0; i < f.scope.arity(); ++i)
      local[static_cast<size_t>(i)] = full[static_cast<size_t>(f.scope.var(i))];
    acc += qm * f[f.scope.index_of(local)];
  }
  return acc;
}

constexpr double kFdStep = 1e-5;

template <typename Fn>
double central_difference(BnApproximation& q, int j, std::int64_t cell, Fn&& value) {
  TableFactor original = q.family(j).cpt;
  TableFactor bumped = original;
  bumped[cell] = original[cell] + kFdStep;
  q.set_cpt(j, bumped);
  double hi = value();
  bumped[cell] = original[cell] - kFdStep;
  q.set_cpt(j, bumped);
  double lo = value();
  q.set_cpt(j, original);
  return (hi - lo) / (2.0 * kFdStep);
}

double relative_error(double a, double b) {
  double denom = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / denom;
}

}  // namespace

DerivativeReport derivative_check(const VariablePool& pool, const BnApproximation& q,
                                  const FactorizedModel& p, const Evidence& ev, int j, int x_j,
                                  std::span<const int> u_j) {
  const auto& fam = q.family(j);
  std::vector<int> cell_states(u_j.begin(), u_j.end());
  cell_states.push_back(x_j);
  std::int64_t cell = fam.cpt.scope.index_of(cell_states);

  Evidence clamp;
  for (int i = 0; i < fam.parents.arity(); ++i)
    clamp.set(fam.parents.var(i), u_j[static_cast<size_t>(i)]);
  Evidence clamp_xu = clamp;
  clamp_xu.set(fam.child, x_j);

  std::vector<TableFactor> q_tables = q.factor_tables();
  double log_q_xu = log_total_mass([&] {
    std::vector<TableFactor> r;
    for (const auto& t : q_tables) r.push_back(factor_restrict(t, clamp_xu));
    return r;
  }());
  double log_q_u = log_total_mass([&] {
    std::vector<TableFactor> r;
    for (const auto& t : q_tables) r.push_back(factor_restrict(t, clamp));
    return r;
  }());
  double f_cond = evaluate_bound(pool, q, p, ev, clamp_xu);
  DerivativeReport report;
  report.analytic = std::exp(log_q_u) * (f_cond - log_q_xu - 1.0);

  BnApproximation mutable_q = q;
  report.numeric = central_difference(mutable_q, j, cell, [&] {
    return free_bound_polynomial(pool, mutable_q, p, ev);
  });
  report.rel_error = relative_error(report.analytic, report.numeric);
  return report;
}

DerivativeReport expectation_derivative_check(const VariablePool& pool, const BnApproximation& q,
                                              const TableFactor& f, int j, int x_j,
                                              std::span<const int> u_j) {
  const auto& fam = q.family(j);
  std::vector<int> cell_states(u_j.begin(), u_j.end());
  cell_states.push_back(x_j);
  std::int64_t cell = fam.cpt.scope.index_of(cell_states);

  Evidence clamp;
  for (int i = 0; i < fam.parents.arity(); ++i)
    clamp.set(fam.parents.var(i), u_j[static_cast<size_t>(i)]);
  Evidence clamp_xu = clamp;
  clamp_xu.set(fam.child, x_j);

  std::vector<TableFactor> q_tables = q.factor_tables();
  double q_u = std::exp(log_total_mass([&] {
    std::vector<TableFactor> r;
    for (const auto& t : q_tables) r.push_back(factor_restrict(t, clamp));
    return r;
  }()));
  TableFactor cond;
  if (!conditional_marginal(q_tables, f.scope, clamp_xu, cond))
    throw StructuralError("expectation_derivative_check: zero-mass conditioning context");
  double e_cond = 0.0;
  for (std::int64_t c = 0; c < f.scope.size(); ++c) e_cond += cond[c] * f[c];

  DerivativeReport report;
  report.analytic = q_u * e_cond;
  BnApproximation mutable_q = q;
  report.numeric = central_difference(mutable_q, j, cell, [&] {
    return free_expectation_polynomial(pool, mutable_q, f);
  });
  report.rel_error = relative_error(report.analytic, report.numeric);
  return report;
}

}  // namespace structvar

#pragma once

// Shared deterministic fixtures for the test suites.

#include "structvar/dbn.hpp"
#include "structvar/model.hpp"
#include "structvar/rng.hpp"
#include "structvar/structure.hpp"

namespace fixtures {

using namespace structvar;

inline TableFactor random_cpt(const VariablePool& pool, const std::vector<VarId>& parents,
                              VarId child, std::mt19937_64& rng, double alpha = 0.5) {
  std::vector<VarId> scope_vars = parents;
  scope_vars.push_back(child);
  TableFactor t{Scope(scope_vars, pool)};
  int card = pool.card(child);
  for (std::int64_t base = 0; base < t.scope.size(); base += card) {
    auto col = sample_dirichlet(rng, alpha, card);
    for (int x = 0; x < card; ++x) t[base + x] = col[static_cast<size_t>(x)];
  }
  return t;
}

inline void add_cpt(FactorizedModel& m, const std::vector<VarId>& parents, VarId child,
                    std::mt19937_64& rng, double alpha = 0.5) {
  ModelFactor mf;
  mf.table = random_cpt(m.pool, parents, child, rng, alpha);
  mf.is_cpt = true;
  mf.child = child;
  m.factors.push_back(std::move(mf));
}

// The five-hidden-variable network with one observed child: T1, T2, T3 feed
// the observation O1; T5 depends on T3 and T4.
struct Figure1Fixture {
  FactorizedModel model;
  Evidence evidence;  // O1 = 0
  VarId t1, t2, t3, t4, t5, o1;
};

inline Figure1Fixture figure1(std::uint64_t seed) {
  Figure1Fixture fx;
  auto& m = fx.model;
  fx.t1 = m.pool.add("T1", 2);
  fx.t2 = m.pool.add("T2", 2);
  fx.t3 = m.pool.add("T3", 2);
  fx.t4 = m.pool.add("T4", 2);
  fx.t5 = m.pool.add("T5", 2);
  fx.o1 = m.pool.add("O1", 2);
  auto rng = rng_stream(seed, "figure1", 0);
  add_cpt(m, {}, fx.t1, rng);
  add_cpt(m, {}, fx.t2, rng);
  add_cpt(m, {}, fx.t3, rng);
  add_cpt(m, {}, fx.t4, rng);
  add_cpt(m, {fx.t3, fx.t4}, fx.t5, rng);
  add_cpt(m, {fx.t1, fx.t2, fx.t3}, fx.o1, rng);
  m.directed = true;
  fx.evidence.set(fx.o1, 0);
  return fx;
}

// Random directed binary model: each variable picks parents among its
// predecessors with the given probability.
inline FactorizedModel random_directed(int n_vars, std::uint64_t seed, double edge_prob = 0.4,
                                       double alpha = 0.5) {
  FactorizedModel m;
  for (int i = 0; i < n_vars; ++i) m.pool.add("N" + std::to_string(i), 2);
  auto rng = rng_stream(seed, "random-directed", 0);
  for (int i = 0; i < n_vars; ++i) {
    std::vector<VarId> parents;
    for (int p = 0; p < i; ++p)
      if (uniform01(rng) < edge_prob) parents.push_back(p);
    add_cpt(m, parents, i, rng, alpha);
  }
  m.directed = true;
  return m;
}

// Evidence binding the last `count` variables to 0.
inline Evidence observe_last(const FactorizedModel& m, int count) {
  Evidence ev;
  for (int i = 0; i < count; ++i) ev.set(m.pool.size() - 1 - i, 0);
  return ev;
}

inline QStructure mean_field_of(const FactorizedModel& m, const Evidence& ev) {
  std::vector<std::string> names;
  for (VarId v : m.unobserved_vars(ev)) names.push_back(m.pool.name(v));
  return mean_field_structure(names);
}

// Pulls table entries toward uniform so derivative checks evaluate at points
// bounded away from the simplex boundary (finite differences lose accuracy
// near zero entries).
inline void mix_toward_uniform(TableFactor& t, double weight) {
  double u = 1.0 / static_cast<double>(t.scope.size());
  for (double& v : t.values) v = (1.0 - weight) * v + weight * u;
}

inline void mix_family_toward_uniform(DirectedFamily& fam, double weight) {
  int card = fam.cpt.scope.card(fam.cpt.scope.arity() - 1);
  for (double& v : fam.cpt.values) v = (1.0 - weight) * v + weight / card;
}

// Structure mirroring a model's own edges restricted to T (posterior skeleton
// without potentials).
inline QStructure posterior_skeleton(const FactorizedModel& m, const Evidence& ev) {
  QStructure s;
  for (const auto& f : m.factors) {
    if (ev.binds(f.child)) continue;
    FamilyDecl d;
    d.child = m.pool.name(f.child);
    for (VarId v : f.table.scope.vars())
      if (v != f.child && !ev.binds(v)) d.parents.push_back(m.pool.name(v));
    s.families.push_back(std::move(d));
  }
  return s;
}

}  // namespace fixtures

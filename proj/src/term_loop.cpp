#include "term_loop.hpp"

#include <cmath>

namespace structvar::detail {

void accumulate_conditioned_terms(const MarginalEngine& engine, int w_query, const Scope& w,
                                  std::span<const ConditionedTerm> terms, const Evidence& ev,
                                  TableFactor& energy) {
  if (engine.degenerate()) {
    std::fill(energy.values.begin(), energy.values.end(), kNegInf);
    return;
  }
  const TableFactor& mass = engine.marginal(w_query);
  std::vector<int> states(static_cast<size_t>(w.arity()));
  for (std::int64_t cell = 0; cell < w.size(); ++cell) {
    if (mass[cell] == 0.0) {
      energy[cell] = kNegInf;
      continue;
    }
    w.states_of(cell, states);
    Evidence clamp;
    for (int i = 0; i < w.arity(); ++i) clamp.set(w.var(i), states[static_cast<size_t>(i)]);
    Evidence fixed = ev;
    for (const auto& [v, s] : clamp.bindings()) fixed.set(v, s);
    for (const auto& term : terms) {
      if (energy[cell] == kNegInf) break;
      TableFactor cond = factor_reduce(engine.marginal(term.query), clamp);
      if (!normalize_total(cond)) {
        energy[cell] = kNegInf;
        break;
      }
      double e = expected_log(*term.table, cond, fixed);
      if (e == kNegInf && term.sign > 0.0) {
        energy[cell] = kNegInf;
        break;
      }
      energy[cell] += term.sign * e;
    }
  }
}

}  // namespace structvar::detail

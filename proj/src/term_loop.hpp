#pragma once

#include <span>

#include "structvar/marginal_engine.hpp"

namespace structvar::detail {

// One expected-log term of a coordinate-update energy: the value table whose
// log is averaged under Q conditioned on each cell of the update context.
struct ConditionedTerm {
  const TableFactor* table = nullptr;
  double sign = 1.0;
  int query = -1;  // engine query over (table's Q-scope) united with the context
};

// Accumulates sum_k sign_k E_{Q(.|cell)}[log table_k] into `energy` for every
// cell of the context scope `w` (the engine query `w_query` provides Q's mass
// over w). Cells without Q-mass, and cells where a positive-sign table
// vanishes on the conditional support, become -inf.
void accumulate_conditioned_terms(const MarginalEngine& engine, int w_query, const Scope& w,
                                  std::span<const ConditionedTerm> terms, const Evidence& ev,
                                  TableFactor& energy);

}  // namespace structvar::detail

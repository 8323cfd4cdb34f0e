#pragma once

#include <limits>
#include <span>
#include <vector>

#include "structvar/model.hpp"

namespace structvar {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPosInf = std::numeric_limits<double>::infinity();

// Joint-state budget above which full-enumeration diagnostics are skipped.
constexpr std::int64_t kEnumerationCap = std::int64_t{1} << 20;

struct EliminationOrder {
  std::vector<VarId> order;
};

// Min-fill ordering (lowest-id tie break) over the union of the factor scopes,
// restricted to `eliminate`.
EliminationOrder min_fill_order(const std::vector<TableFactor>& factors,
                                std::span<const VarId> eliminate);

// Sum-product variable elimination: returns the product of all factors with
// the ordered variables summed out. Linear-domain; callers at risk of
// underflow should use the scaled log_* entry points below.
TableFactor eliminate(const std::vector<TableFactor>& factors, const EliminationOrder& order);

// log of the total sum of the factor product over all assignments, computed
// with per-step rescaling. Returns -inf for an identically zero product.
double log_total_mass(const std::vector<TableFactor>& factors);

// log P(o) = log sum_t prod_i phi_i(t, o) - log Z_P.
double log_evidence(const FactorizedModel& model, const Evidence& ev);

// log Z of the model's factor product (0 for a directed model by construction,
// but always computed).
double log_partition(const FactorizedModel& model);

// D(Q(T) || P(T|o)) by full enumeration over T; +inf where Q places mass
// outside P's posterior support. Both models must be over the same T
// (q's variables = p's unobserved variables) and small enough to enumerate.
double exact_kl(const FactorizedModel& q, const FactorizedModel& p, const Evidence& ev);

// Unnormalized joint mass prod_i phi_i(assignment) of a full assignment
// (indexed by VarId over model.pool) with `ev` overriding bound variables.
double joint_mass(const FactorizedModel& model, std::span<const int> states, const Evidence& ev);

}  // namespace structvar

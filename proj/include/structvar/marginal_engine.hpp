#pragma once

#include <cstdint>
#include <vector>

#include "structvar/elimination.hpp"
#include "structvar/factor.hpp"

namespace structvar {

// Calibrated clique tree over a fixed set of factor scopes. The tree shape,
// factor-to-clique assignment, and all index maps are built once; successive
// calls to calibrate() rerun only the message arithmetic with fresh factor
// values. Every declared query scope is folded into the triangulation so its
// marginal can be read from a single clique.
//
// Used by the fitting loops, where the same structure is re-evaluated after
// every parameter update; results agree with eliminate() up to rounding.
class MarginalEngine {
 public:
  MarginalEngine(std::vector<Scope> factor_scopes, std::vector<Scope> query_scopes);

  // `factors` must match the declared factor scopes in order and shape.
  void calibrate(const std::vector<TableFactor>& factors);

  // log of the total mass of the factor product; -inf when degenerate.
  double log_partition() const { return log_z_; }
  bool degenerate() const { return degenerate_; }

  // Normalized marginal over query scope `qi` (declared order). Zeros when
  // the engine is degenerate.
  const TableFactor& marginal(int qi) const { return query_results_[static_cast<size_t>(qi)]; }

  // Unnormalized marginal: marginal(qi) scaled by exp(log_partition()).
  TableFactor unnormalized_marginal(int qi) const;

 private:
  struct Clique {
    Scope scope;
    std::vector<int> factor_ids;                       // assigned factor indices
    std::vector<std::vector<std::int32_t>> factor_map; // clique cell -> factor cell
    std::vector<int> child_cliques;                    // messages received in upward pass
    std::vector<std::vector<std::int32_t>> child_maps; // clique cell -> child sepset cell
    int parent = -1;
    Scope sepset;                                      // scope of the message to parent
    std::vector<std::int32_t> sep_map;                 // clique cell -> sepset cell
    std::vector<std::int32_t> parent_sep_map;          // parent cell -> own sepset cell
    std::vector<double> belief_up;                     // after upward pass
    std::vector<double> belief;                        // fully calibrated
    std::vector<double> msg_up;                        // normalized upward message
  };

  std::vector<Scope> factor_scopes_;
  std::vector<Scope> query_scopes_;
  std::vector<Clique> cliques_;
  std::vector<int> scalar_factor_ids_;                // empty-scope factors
  std::vector<int> query_clique_;                     // query -> owning clique (-1: empty scope)
  std::vector<std::vector<std::int32_t>> query_map_;  // clique cell -> query cell
  std::vector<TableFactor> query_results_;
  double log_z_ = 0.0;
  bool degenerate_ = false;
};

// Conditional marginal over `target` given `clamp`, by restrict-and-eliminate
// over the factor product. Cells inconsistent with the clamp are zero. Returns
// false when the clamped product has no mass. Reference path for diagnostics
// and conditioned bound evaluations.
bool conditional_marginal(const std::vector<TableFactor>& factors, const Scope& target,
                          const Evidence& clamp, TableFactor& out);

// Expected log value: sum over f's cells of weight(cell) * log f(cell), with
// weights drawn from `weights` (a distribution over a subset of f's scope)
// and all remaining f-variables pinned by `fixed`. Uses 0 log 0 = 0; returns
// -inf if positive weight meets a zero entry.
double expected_log(const TableFactor& f, const TableFactor& weights, const Evidence& fixed);

}  // namespace structvar

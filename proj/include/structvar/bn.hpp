#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "structvar/marginal_engine.hpp"
#include "structvar/model.hpp"
#include "structvar/structure.hpp"

namespace structvar {

// Directed approximating model Q(t) = prod_j theta_{x_j|u_j}. Structure is
// fixed at construction; only the tables change during fitting.
class BnApproximation {
 public:
  BnApproximation() = default;
  BnApproximation(const VariablePool& pool, std::vector<DirectedFamily> families);

  const std::vector<DirectedFamily>& families() const { return families_; }
  const DirectedFamily& family(int j) const { return families_[static_cast<size_t>(j)]; }
  int family_count() const { return static_cast<int>(families_.size()); }
  int family_of(VarId v) const;
  const std::vector<VarId>& variables() const { return vars_; }
  const std::vector<int>& topo_order() const { return topo_families_; }
  const Dag& dag() const { return dag_; }

  void set_cpt(int j, TableFactor cpt);
  std::vector<TableFactor> factor_tables() const;

 private:
  std::vector<DirectedFamily> families_;
  std::vector<VarId> vars_;
  std::vector<int> family_index_;   // by VarId, -1 where absent
  std::vector<int> topo_families_;  // family indices, parents first
  Dag dag_{0};
};

// Structure skeleton with flat-Dirichlet random tables.
BnApproximation random_bn(const ResolvedStructure& rs, std::mt19937_64& rng);
// Skeleton with uniform tables.
BnApproximation uniform_bn(const ResolvedStructure& rs);
// Restart initialization used by every fit: each family draws from its own
// stream keyed by (seed, child name, restart), so structures sharing a family
// shape start from identical tables under shared seeds.
BnApproximation random_bn_for_restart(const ResolvedStructure& rs, std::uint64_t seed,
                                      int restart);

struct RelevanceSets {
  // Per family j: indices of P factors / Q families not d-separated from X_j
  // given U_j.
  std::vector<std::vector<int>> fp;
  std::vector<std::vector<int>> fq;
};

RelevanceSets relevance_sets(const VariablePool& pool, const BnApproximation& q,
                             const FactorizedModel& p);

struct OptimizerOptions {
  int max_sweeps = 10;
  int restarts = 10;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  double damping = 0.5;  // chain-graph fallback step, see fit_cg
};

template <typename ApproxT>
struct FitResult {
  ApproxT approx;
  double bound = kNegInf;
  std::vector<double> trace;  // winning restart: initial bound, then one entry per update
  int restart_index = -1;
  std::vector<std::vector<double>> all_traces;
  std::vector<double> restart_bounds;
  bool degenerate = false;
  std::vector<std::string> diagnostics;
};

using BnFitResult = FitResult<BnApproximation>;

// F[Q | c] per the factored bound: sum_i E[log phi_i(D_i, o)] - log Z_P
// - sum_j E[log theta_j] + log Q(c). Returns -inf when Q places mass where a
// restricted factor vanishes.
double evaluate_bound(const VariablePool& pool, const BnApproximation& q,
                      const FactorizedModel& p, const Evidence& ev, const Evidence& c = {});

// Coordinate-update energy for state x_j of family j under parent assignment
// u_j (states in the family's parent order). `reduced` drops terms that are
// constant in x_j via the relevance sets; both forms exp-normalize to the
// same update.
double energy_bn(const VariablePool& pool, const BnApproximation& q, const FactorizedModel& p,
                 const Evidence& ev, int j, int x_j, std::span<const int> u_j,
                 bool reduced = true);

// In-place exp-normalized update of family j. Returns false when some parent
// column had no finite energy and fell back to uniform.
bool update_family(const VariablePool& pool, BnApproximation& q, const FactorizedModel& p,
                   const Evidence& ev, int j);

BnFitResult fit_bn(const FactorizedModel& p, const Evidence& ev, const ResolvedStructure& rs,
                   const OptimizerOptions& opts);

struct DerivativeReport {
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

// dF/dtheta_{x_j|u_j} = Q(u_j) (F[Q|x_j,u_j] - log Q(x_j,u_j) - 1), treating
// the entries as free coordinates, against central finite differences of the
// enumerated polynomial (step 1e-5).
DerivativeReport derivative_check(const VariablePool& pool, const BnApproximation& q,
                                  const FactorizedModel& p, const Evidence& ev, int j, int x_j,
                                  std::span<const int> u_j);

// dE_Q[f]/dtheta_{x_j|u_j} = Q(u_j) E_{Q(.|x_j,u_j)}[f] for theta-free f.
DerivativeReport expectation_derivative_check(const VariablePool& pool, const BnApproximation& q,
                                              const TableFactor& f, int j, int x_j,
                                              std::span<const int> u_j);

// Q as a standalone directed model over its own variables (for exact_kl).
FactorizedModel to_factorized(const VariablePool& pool, const BnApproximation& q);

// Internal solver shared by fit_bn and the one-shot operations. Engines are
// built once per structure; table values are swapped between restarts.
class BnSolver {
 public:
  BnSolver(const VariablePool& pool, const FactorizedModel& p, const Evidence& ev,
           BnApproximation q);
  ~BnSolver();
  BnSolver(BnSolver&&) noexcept;

  const BnApproximation& approx() const;
  void reset(const BnApproximation& q);
  double bound();
  // Energies over the family scope [U_j..., X_j]; entries may be -inf.
  TableFactor energy_table(int j, bool reduced);
  bool apply_update(int j);  // exp-normalize energy_table(j, true) into the cpt
  const RelevanceSets& relevance() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace structvar

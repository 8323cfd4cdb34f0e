#pragma once

#include "structvar/bn.hpp"

namespace structvar {

// Chain-graph approximation Q(T) = (1/Z_Q) prod_j theta_{x_j|u_j} prod_k
// psi_k(C_k). Each potential sums to one (the scale is absorbed by Z_Q).
class CgApproximation {
 public:
  CgApproximation() = default;
  CgApproximation(const VariablePool& pool, std::vector<DirectedFamily> families,
                  std::vector<TableFactor> potentials);

  const std::vector<DirectedFamily>& families() const { return families_; }
  const DirectedFamily& family(int j) const { return families_[static_cast<size_t>(j)]; }
  int family_count() const { return static_cast<int>(families_.size()); }
  const std::vector<TableFactor>& potentials() const { return potentials_; }
  const TableFactor& potential(int k) const { return potentials_[static_cast<size_t>(k)]; }
  int potential_count() const { return static_cast<int>(potentials_.size()); }
  const std::vector<VarId>& variables() const { return vars_; }
  int family_of(VarId v) const;
  const std::vector<int>& topo_order() const { return topo_families_; }
  double log_zq() const { return log_zq_; }

  void set_cpt(int j, TableFactor cpt);
  void set_potential(int k, TableFactor psi);
  void set_log_zq(double v) { log_zq_ = v; }
  std::vector<TableFactor> factor_tables() const;  // cpts then potentials

 private:
  std::vector<DirectedFamily> families_;
  std::vector<TableFactor> potentials_;
  std::vector<VarId> vars_;
  std::vector<int> family_index_;
  std::vector<int> topo_families_;
  double log_zq_ = 0.0;
};

constexpr double kPotentialSumTol = 1e-12;

using CgFitResult = FitResult<CgApproximation>;

// Exact posterior P(T|o) of a directed model as a chain graph: the CPTs of
// unobserved variables with observed parents instantiated, plus one
// normalized potential per observed variable over its unobserved parents.
CgApproximation posterior_chain_graph(const FactorizedModel& p, const Evidence& ev);

// F[Q|c] with the chain-graph correction terms:
// sum_i E[log phi_i] - log Z_P - sum_j E[log theta_j] - sum_k E[log psi_k]
// + log Z_Q + log Q(c).
double evaluate_bound_cg(const VariablePool& pool, const CgApproximation& q,
                         const FactorizedModel& p, const Evidence& ev, const Evidence& c = {});

// One coordinate update; both safeguard a bound decrease beyond 1e-9 with
// geometric damping (step halved from opts-style gamma) and revert when
// damping cannot restore ascent. Returns false on a uniform fallback or a
// reverted update.
bool update_cpd_cg(const VariablePool& pool, CgApproximation& q, const FactorizedModel& p,
                   const Evidence& ev, int j, double damping = 0.5);
bool update_potential(const VariablePool& pool, CgApproximation& q, const FactorizedModel& p,
                      const Evidence& ev, int k, double damping = 0.5);

CgFitResult fit_cg(const FactorizedModel& p, const Evidence& ev, const ResolvedStructure& rs,
                   const OptimizerOptions& opts);

// Q as a standalone model over its own variables (factors + log_z = log Z_Q).
FactorizedModel to_factorized(const VariablePool& pool, const CgApproximation& q);

// Lemma-style derivative diagnostics for chain graphs: dE_Q[f]/dtheta and
// dE_Q[f]/dpsi against central finite differences of the enumerated
// normalized expectation (theta-free f).
DerivativeReport cg_theta_derivative_check(const VariablePool& pool, const CgApproximation& q,
                                           const TableFactor& f, int j, int x_j,
                                           std::span<const int> u_j);
DerivativeReport cg_psi_derivative_check(const VariablePool& pool, const CgApproximation& q,
                                         const TableFactor& f, int k, std::int64_t cell);

// Solver with cached engines, used by fit_cg and the one-shot updates.
class CgSolver {
 public:
  CgSolver(const VariablePool& pool, const FactorizedModel& p, const Evidence& ev,
           CgApproximation q);
  ~CgSolver();
  CgSolver(CgSolver&&) noexcept;

  const CgApproximation& approx() const;
  void reset(const CgApproximation& q);
  double bound();
  TableFactor cpd_energy_table(int j);
  TableFactor potential_energy_table(int k);
  // Returns false on fallback/revert (see update_cpd_cg).
  bool apply_cpd_update(int j, double damping);
  bool apply_potential_update(int k, double damping);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace structvar

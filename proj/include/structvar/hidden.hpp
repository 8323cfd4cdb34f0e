#pragma once

#include "structvar/bn.hpp"

namespace structvar {

// Approximation over T plus auxiliary hidden variables V, paired with a
// factored variational table R(t, v) = prod_j rho_{x_j, u_j} that relaxes the
// conditional entropy H(V|T) through the convexity bound. Each rho block
// shares its family's [U_j..., X_j] scope and stays strictly positive.
class HiddenApproximation {
 public:
  HiddenApproximation() = default;
  HiddenApproximation(BnApproximation q, std::vector<VarId> hidden);

  const BnApproximation& q() const { return q_; }
  BnApproximation& q() { return q_; }
  const std::vector<VarId>& hidden() const { return hidden_; }
  const std::vector<TableFactor>& rho() const { return rho_; }
  const TableFactor& rho_block(int j) const { return rho_[static_cast<size_t>(j)]; }
  void set_rho(int j, TableFactor block);

 private:
  BnApproximation q_;
  std::vector<VarId> hidden_;
  std::vector<TableFactor> rho_;  // initialized to all ones
};

struct HiddenFitResult : FitResult<HiddenApproximation> {
  // Exact F[Q(T)] when the joint is small enough to enumerate, else NaN; the
  // reported figure of merit stays G.
  double marginal_bound = std::numeric_limits<double>::quiet_NaN();
};

// G[Q, R | c]: the relaxed lower bound
//   E[log P/Q(T,V|c)] - sum_v E_{Q(T|c)}[R(T,v)] + E[log R(T,V)] + 1.
double evaluate_G(const VariablePool& pool, const HiddenApproximation& h,
                  const FactorizedModel& p, const Evidence& ev, const Evidence& c = {});

// sum_{t,v} Q(t|c) R(t,v), via elimination over T, V, and a shadow copy of V
// that carries Q's own marginalization.
double expected_R_sum(const VariablePool& pool, const HiddenApproximation& h, const Evidence& c = {});

// Exp-normalized theta update for family j (Eq.-7-style energies with the two
// entropy-relaxation terms). Returns false on a uniform column fallback.
bool update_theta_h(const VariablePool& pool, HiddenApproximation& h, const FactorizedModel& p,
                    const Evidence& ev, int j);

// Closed-form rho block update; entries whose context carries no Q-mass are
// left unchanged. Returns false when that happened.
bool update_rho(const VariablePool& pool, HiddenApproximation& h, int j);

HiddenFitResult fit_hidden(const FactorizedModel& p, const Evidence& ev,
                           const ResolvedStructure& rs, const OptimizerOptions& opts);

// One hidden variable of cardinality k parenting every listed variable.
QStructure mixture_mean_field(const std::vector<std::string>& t_names, int k);

struct InfoDecomposition {
  double avg_conditional_bound = 0.0;
  double mutual_info = 0.0;
};

// Lemma-style split F[Q] = E_{Q(v)}[F[Q|V]] + I(T;V), both terms by full
// enumeration (diagnostic scale).
InfoDecomposition info_decomposition(const VariablePool& pool, const HiddenApproximation& h,
                                     const FactorizedModel& p, const Evidence& ev);

// Exact F[Q(T)] of the V-marginal by enumeration; NaN above the cap.
double marginal_bound_exact(const VariablePool& pool, const HiddenApproximation& h,
                            const FactorizedModel& p, const Evidence& ev,
                            std::int64_t cap = std::int64_t{1} << 16);

// Solver with cached engines shared across restarts.
class HiddenSolver {
 public:
  HiddenSolver(const VariablePool& pool, const FactorizedModel& p, const Evidence& ev,
               HiddenApproximation h);
  ~HiddenSolver();
  HiddenSolver(HiddenSolver&&) noexcept;

  const HiddenApproximation& approx() const;
  void reset(const HiddenApproximation& h);
  double bound();  // G[Q, R]
  TableFactor theta_energy_table(int j);
  bool apply_theta_update(int j);
  bool apply_rho_update(int j);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace structvar

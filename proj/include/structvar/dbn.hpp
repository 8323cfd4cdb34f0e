#pragma once

#include <string>

#include "structvar/hidden.hpp"

namespace structvar {

// Synthetic temporal network: per slice, a column of binary chain variables
// (each with its previous-slice counterpart and the previous in-slice chain
// variable as parents) plus one observed child of the whole column. All
// columns are Dirichlet(1/2, 1/2); the benchmark observes every O_n = 0.
struct DbnConfig {
  int slices = 2;
  int vars_per_slice = 3;
  std::uint64_t seed = 0;
};

struct GeneratedDbn {
  FactorizedModel model;
  Evidence evidence;
};

GeneratedDbn generate_dbn(const DbnConfig& cfg);

// Names used by the generator: chain variable i of slice n is "Xi_n",
// the observed child of slice n is "O_n".
std::string dbn_chain_var_name(int chain, int slice);
std::string dbn_observed_name(int slice);

// Approximating structures around the generator's topology. Vertical keeps
// the in-slice edges and routes cross-slice correlation through a chain of
// per-slice hidden variables; horizontal keeps the temporal edges and routes
// cross-chain correlation through a chain of per-chain hidden variables.
QStructure build_vertical_approx(const DbnConfig& cfg, int v_card);
QStructure build_horizontal_approx(const DbnConfig& cfg, int v_card);

enum class MethodKind { Mixture, Vertical, Horizontal };

std::string method_name(MethodKind kind);
MethodKind parse_method_kind(const std::string& name);

struct MethodSpec {
  MethodKind kind = MethodKind::Mixture;
  int variant = 1;  // mixture components or hidden cardinality
};

struct BenchmarkConfig {
  std::vector<int> slices{2, 3, 4, 5, 6, 7};
  std::vector<int> vars{3, 4};
  std::vector<MethodSpec> methods;  // empty = full paper grid
  int nets_per_cell = 20;
  OptimizerOptions opts;
  int jobs = 1;
};

std::vector<MethodSpec> default_method_grid();

struct RunRecord {
  int slices = 0;
  int vars_per_slice = 0;
  MethodKind kind = MethodKind::Mixture;
  int variant = 1;
  int net_index = 0;
  double log_evidence = 0.0;
  double bound = 0.0;
  double gap_per_slice = 0.0;
  std::int64_t wall_ms = 0;
  bool flagged = false;  // -inf bound recorded as-is
};

std::vector<RunRecord> run_benchmark(const BenchmarkConfig& bc);

struct SummaryRow {
  int slices = 0;
  int vars_per_slice = 0;
  MethodKind kind = MethodKind::Mixture;
  int variant = 1;
  int count = 0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
};

// Nearest-rank percentiles of gap_per_slice per (cell, method).
std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records);

void write_records_csv(const std::string& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records_csv(const std::string& path);

}  // namespace structvar

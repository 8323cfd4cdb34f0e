#include "structvar/dbn.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "structvar/model_io.hpp"
#include "structvar/rng.hpp"

namespace structvar {

std::string dbn_chain_var_name(int chain, int slice) {
  return "X" + std::to_string(chain) + "_" + std::to_string(slice);
}

std::string dbn_observed_name(int slice) { return "O_" + std::to_string(slice); }

GeneratedDbn generate_dbn(const DbnConfig& cfg) {
  if (cfg.slices < 1 || cfg.vars_per_slice < 1)
    throw StructuralError("dbn config requires at least one slice and one chain variable");
  GeneratedDbn out;
  auto& m = out.model;
  for (int n = 1; n <= cfg.slices; ++n) {
    for (int i = 1; i <= cfg.vars_per_slice; ++i) m.pool.add(dbn_chain_var_name(i, n), 2);
    m.pool.add(dbn_observed_name(n), 2);
  }

  auto rng = rng_stream(cfg.seed, "dbn-params", 0);
  auto sample_cpt = [&rng, &m](VarId child, const std::vector<VarId>& parents) {
    std::vector<VarId> scope_vars = parents;
    scope_vars.push_back(child);
    TableFactor t{Scope(scope_vars, m.pool)};
    for (std::int64_t base = 0; base < t.scope.size(); base += 2) {
      auto col = sample_dirichlet(rng, 0.5, 2);
      t[base] = col[0];
      t[base + 1] = col[1];
    }
    ModelFactor mf;
    mf.table = std::move(t);
    mf.is_cpt = true;
    mf.child = child;
    m.factors.push_back(std::move(mf));
  };

  for (int n = 1; n <= cfg.slices; ++n) {
    for (int i = 1; i <= cfg.vars_per_slice; ++i) {
      std::vector<VarId> parents;
      if (n > 1) parents.push_back(m.pool.require(dbn_chain_var_name(i, n - 1)));
      if (i > 1) parents.push_back(m.pool.require(dbn_chain_var_name(i - 1, n)));
      sample_cpt(m.pool.require(dbn_chain_var_name(i, n)), parents);
    }
    std::vector<VarId> parents;
    for (int i = 1; i <= cfg.vars_per_slice; ++i)
      parents.push_back(m.pool.require(dbn_chain_var_name(i, n)));
    sample_cpt(m.pool.require(dbn_observed_name(n)), parents);
  }
  m.directed = true;
  m.log_z = 0.0;
  for (int n = 1; n <= cfg.slices; ++n)
    out.evidence.set(m.pool.require(dbn_observed_name(n)), 0);
  return out;
}

QStructure build_vertical_approx(const DbnConfig& cfg, int v_card) {
  if (v_card < 1) throw StructuralError("hidden cardinality must be >= 1");
  QStructure s;
  for (int n = 1; n <= cfg.slices; ++n)
    s.hidden.push_back(HiddenVarDecl{"V_slice_" + std::to_string(n), v_card});
  for (int n = 1; n <= cfg.slices; ++n) {
    FamilyDecl v;
    v.child = "V_slice_" + std::to_string(n);
    if (n > 1) v.parents.push_back("V_slice_" + std::to_string(n - 1));
    s.families.push_back(std::move(v));
  }
  for (int n = 1; n <= cfg.slices; ++n)
    for (int i = 1; i <= cfg.vars_per_slice; ++i) {
      FamilyDecl f;
      f.child = dbn_chain_var_name(i, n);
      f.parents.push_back("V_slice_" + std::to_string(n));
      if (i > 1) f.parents.push_back(dbn_chain_var_name(i - 1, n));
      s.families.push_back(std::move(f));
    }
  return s;
}

QStructure build_horizontal_approx(const DbnConfig& cfg, int v_card) {
  if (v_card < 1) throw StructuralError("hidden cardinality must be >= 1");
  QStructure s;
  for (int i = 1; i <= cfg.vars_per_slice; ++i)
    s.hidden.push_back(HiddenVarDecl{"V_chain_" + std::to_string(i), v_card});
  for (int i = 1; i <= cfg.vars_per_slice; ++i) {
    FamilyDecl v;
    v.child = "V_chain_" + std::to_string(i);
    if (i > 1) v.parents.push_back("V_chain_" + std::to_string(i - 1));
    s.families.push_back(std::move(v));
  }
  for (int n = 1; n <= cfg.slices; ++n)
    for (int i = 1; i <= cfg.vars_per_slice; ++i) {
      FamilyDecl f;
      f.child = dbn_chain_var_name(i, n);
      f.parents.push_back("V_chain_" + std::to_string(i));
      if (n > 1) f.parents.push_back(dbn_chain_var_name(i, n - 1));
      s.families.push_back(std::move(f));
    }
  return s;
}

std::string method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::Mixture: return "mixture";
    case MethodKind::Vertical: return "vertical";
    case MethodKind::Horizontal: return "horizontal";
  }
  return "?";
}

MethodKind parse_method_kind(const std::string& name) {
  if (name == "mixture") return MethodKind::Mixture;
  if (name == "vertical") return MethodKind::Vertical;
  if (name == "horizontal") return MethodKind::Horizontal;
  throw StructuralError("unknown method '" + name + "'");
}

std::vector<MethodSpec> default_method_grid() {
  std::vector<MethodSpec> methods;
  for (int k : {1, 4, 6}) methods.push_back({MethodKind::Mixture, k});
  for (int c : {1, 2, 3}) methods.push_back({MethodKind::Vertical, c});
  for (int c : {1, 2, 3}) methods.push_back({MethodKind::Horizontal, c});
  return methods;
}

namespace {

std::uint64_t cell_key(int slices, int vars) {
  return static_cast<std::uint64_t>(slices) * 1000 + static_cast<std::uint64_t>(vars);
}

RunRecord run_one(const BenchmarkConfig& bc, int slices, int vars, const MethodSpec& method,
                  int net) {
  auto t0 = std::chrono::steady_clock::now();
  DbnConfig cfg;
  cfg.slices = slices;
  cfg.vars_per_slice = vars;
  cfg.seed = mix_stream_key(bc.opts.seed, "dbn-net:" + std::to_string(cell_key(slices, vars)),
                            static_cast<std::uint64_t>(net));
  GeneratedDbn gen = generate_dbn(cfg);

  QStructure structure;
  if (method.kind == MethodKind::Mixture) {
    std::vector<std::string> t_names;
    for (VarId v : gen.model.unobserved_vars(gen.evidence))
      t_names.push_back(gen.model.pool.name(v));
    structure = mixture_mean_field(t_names, method.variant);
  } else if (method.kind == MethodKind::Vertical) {
    structure = build_vertical_approx(cfg, method.variant);
  } else {
    structure = build_horizontal_approx(cfg, method.variant);
  }
  ResolvedStructure rs = resolve_structure(gen.model.pool, structure);

  OptimizerOptions opts = bc.opts;
  opts.seed = mix_stream_key(bc.opts.seed, "fit:" + std::to_string(cell_key(slices, vars)),
                             static_cast<std::uint64_t>(net));
  HiddenFitResult fit = fit_hidden(gen.model, gen.evidence, rs, opts);

  RunRecord rec;
  rec.slices = slices;
  rec.vars_per_slice = vars;
  rec.kind = method.kind;
  rec.variant = method.variant;
  rec.net_index = net;
  rec.log_evidence = log_evidence(gen.model, gen.evidence);
  rec.bound = fit.bound;
  rec.gap_per_slice = (rec.log_evidence - rec.bound) / slices;
  rec.flagged = fit.degenerate;
  rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

}  // namespace

std::vector<RunRecord> run_benchmark(const BenchmarkConfig& bc) {
  std::vector<MethodSpec> methods = bc.methods.empty() ? default_method_grid() : bc.methods;
  struct Job {
    int slices, vars, net;
    MethodSpec method;
  };
  std::vector<Job> jobs;
  for (int vars : bc.vars)
    for (int slices : bc.slices)
      for (int net = 0; net < bc.nets_per_cell; ++net)
        for (const auto& method : methods) jobs.push_back(Job{slices, vars, net, method});

  std::vector<RunRecord> records(jobs.size());
  int n_threads = std::max(1, bc.jobs);
  if (n_threads == 1) {
    for (size_t i = 0; i < jobs.size(); ++i)
      records[i] = run_one(bc, jobs[i].slices, jobs[i].vars, jobs[i].method, jobs[i].net);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= jobs.size()) return;
        records[i] = run_one(bc, jobs[i].slices, jobs[i].vars, jobs[i].method, jobs[i].net);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return records;
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::vector<SummaryRow> rows;
  auto match = [](const SummaryRow& row, const RunRecord& r) {
    return row.slices == r.slices && row.vars_per_slice == r.vars_per_slice &&
           row.kind == r.kind && row.variant == r.variant;
  };
  std::vector<std::vector<double>> gaps;
  for (const auto& r : records) {
    size_t idx = 0;
    for (; idx < rows.size(); ++idx)
      if (match(rows[idx], r)) break;
    if (idx == rows.size()) {
      SummaryRow row;
      row.slices = r.slices;
      row.vars_per_slice = r.vars_per_slice;
      row.kind = r.kind;
      row.variant = r.variant;
      rows.push_back(row);
      gaps.emplace_back();
    }
    gaps[idx].push_back(r.gap_per_slice);
  }
  auto nearest_rank = [](std::vector<double>& sorted, double pct) {
    size_t n = sorted.size();
    auto rank = static_cast<size_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
    rank = std::clamp<size_t>(rank, 1, n);
    return sorted[rank - 1];
  };
  for (size_t i = 0; i < rows.size(); ++i) {
    auto& g = gaps[i];
    std::sort(g.begin(), g.end());
    rows[i].count = static_cast<int>(g.size());
    rows[i].median = nearest_rank(g, 50.0);
    rows[i].p25 = nearest_rank(g, 25.0);
    rows[i].p75 = nearest_rank(g, 75.0);
  }
  return rows;
}

void write_records_csv(const std::string& path, const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "slices,vars_per_slice,method,variant,net_index,log_evidence,bound,gap_per_slice,"
         "wall_ms\n";
  for (const auto& r : records) {
    out << r.slices << ',' << r.vars_per_slice << ',' << method_name(r.kind) << ',' << r.variant
        << ',' << r.net_index << ',' << format_shortest(r.log_evidence) << ','
        << format_shortest(r.bound) << ',' << format_shortest(r.gap_per_slice) << ','
        << r.wall_ms << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<RunRecord> read_records_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw StructuralError("empty results csv");
  std::vector<RunRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    auto next = [&]() {
      if (!std::getline(ls, field, ',')) throw StructuralError("short csv row");
      return field;
    };
    RunRecord r;
    r.slices = std::stoi(next());
    r.vars_per_slice = std::stoi(next());
    r.kind = parse_method_kind(next());
    r.variant = std::stoi(next());
    r.net_index = std::stoi(next());
    r.log_evidence = std::stod(next());
    r.bound = std::stod(next());
    r.gap_per_slice = std::stod(next());
    r.wall_ms = std::stoll(next());
    records.push_back(r);
  }
  return records;
}

}  // namespace structvar

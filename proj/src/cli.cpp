#include "structvar/cli.hpp"

#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "structvar/dbn.hpp"
#include "structvar/model_io.hpp"
#include "structvar/plot.hpp"

namespace structvar {

namespace {

using nlohmann::json;

// Every emitted file gets "<file>.manifest.json" carrying the exact command
// line, seeds, version, and input digests needed to reproduce it.
void write_manifest(const std::string& out_path, const std::string& subcommand,
                    const std::vector<std::string>& argv,
                    const std::vector<std::string>& input_files, std::uint64_t seed) {
  json m;
  m["tool_version"] = kToolVersion;
  m["model_format_version"] = kModelFormatVersion;
  m["subcommand"] = subcommand;
  m["argv"] = argv;
  m["seed"] = seed;
  m["output"] = out_path;
  m["inputs"] = json::object();
  for (const auto& f : input_files) m["inputs"][f] = file_digest(f);
  write_text_file(out_path + ".manifest.json", m.dump(2) + "\n");
}

std::vector<int> parse_int_list(const std::string& text) {
  // "2..7" or "2,3,4".
  std::vector<int> out;
  auto dots = text.find("..");
  if (dots != std::string::npos) {
    int lo = std::stoi(text.substr(0, dots));
    int hi = std::stoi(text.substr(dots + 2));
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::istringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(std::stoi(field));
  if (out.empty()) throw CLI::ValidationError("empty integer list");
  return out;
}

std::vector<MethodSpec> parse_methods(const std::string& text) {
  // "mixture:1,mixture:4,vertical:2" or "default".
  if (text == "default") return default_method_grid();
  std::vector<MethodSpec> out;
  std::istringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    auto colon = field.find(':');
    if (colon == std::string::npos)
      throw CLI::ValidationError("method entries look like kind:variant");
    MethodSpec spec;
    spec.kind = parse_method_kind(field.substr(0, colon));
    spec.variant = std::stoi(field.substr(colon + 1));
    out.push_back(spec);
  }
  if (out.empty()) throw CLI::ValidationError("empty method list");
  return out;
}

struct CommonFitFlags {
  std::string model_path;
  std::string evidence_arg;
  std::string structure_path;
  std::string method = "bn";
  int mixture = 0;
  std::string out_path;
  OptimizerOptions opts;
};

int do_generate(const std::vector<std::string>& argv, const DbnConfig& cfg,
                const std::string& out_path) {
  GeneratedDbn gen = generate_dbn(cfg);
  save_model_file(out_path, gen.model, gen.evidence);
  write_manifest(out_path, "generate", argv, {}, cfg.seed);
  return 0;
}

int do_exact(const std::string& model_path, const std::string& evidence_arg,
             const std::vector<std::string>& marginals) {
  ModelFile mf = load_model_file(model_path);
  Evidence ev = evidence_arg.empty() ? mf.evidence : parse_evidence_arg(evidence_arg, mf.model.pool);
  double le = log_evidence(mf.model, ev);
  std::cout << "log_evidence " << format_sig17(le) << "\n";
  for (const auto& name : marginals) {
    VarId v = mf.model.pool.require(name);
    if (ev.binds(v)) throw StructuralError("requested marginal of an observed variable");
    std::vector<TableFactor> tables;
    for (const auto& f : mf.model.factors) tables.push_back(factor_restrict(f.table, ev));
    TableFactor marg;
    if (!conditional_marginal(tables, Scope({v}, mf.model.pool), Evidence{}, marg))
      throw StructuralError("evidence has zero probability; marginals undefined");
    std::cout << "marginal " << name;
    for (double x : marg.values) std::cout << ' ' << format_sig17(x);
    std::cout << "\n";
  }
  return 0;
}

int do_fit(const std::vector<std::string>& argv, const CommonFitFlags& flags) {
  ModelFile mf = load_model_file(flags.model_path);
  Evidence ev = flags.evidence_arg.empty() ? mf.evidence
                                           : parse_evidence_arg(flags.evidence_arg, mf.model.pool);
  QStructure structure;
  if (flags.mixture > 0) {
    std::vector<std::string> t_names;
    for (VarId v : mf.model.unobserved_vars(ev)) t_names.push_back(mf.model.pool.name(v));
    structure = mixture_mean_field(t_names, flags.mixture);
  } else {
    structure = load_structure_file(flags.structure_path);
  }
  ResolvedStructure rs = resolve_structure(mf.model.pool, structure);

  std::string out_json;
  if (flags.method == "bn") {
    BnFitResult r = fit_bn(mf.model, ev, rs, flags.opts);
    out_json = fit_result_to_json(rs.pool, r);
  } else if (flags.method == "cg") {
    CgFitResult r = fit_cg(mf.model, ev, rs, flags.opts);
    out_json = fit_result_to_json(rs.pool, r);
  } else {
    HiddenFitResult r = fit_hidden(mf.model, ev, rs, flags.opts);
    out_json = fit_result_to_json(rs.pool, r);
  }
  write_text_file(flags.out_path, out_json);
  std::vector<std::string> inputs{flags.model_path};
  if (flags.mixture == 0) inputs.push_back(flags.structure_path);
  write_manifest(flags.out_path, "fit", argv, inputs, flags.opts.seed);
  return 0;
}

int do_benchmark(const std::vector<std::string>& argv, const BenchmarkConfig& bc,
                 const std::string& out_path) {
  std::vector<RunRecord> records = run_benchmark(bc);
  write_records_csv(out_path, records);
  write_manifest(out_path, "benchmark", argv, {}, bc.opts.seed);
  return 0;
}

int do_plot(const std::vector<std::string>& argv, const std::string& csv_path,
            const std::string& out_prefix) {
  std::vector<RunRecord> records = read_records_csv(csv_path);
  std::vector<SummaryRow> rows = summarize(records);
  std::vector<int> widths;
  for (const auto& r : rows)
    if (std::find(widths.begin(), widths.end(), r.vars_per_slice) == widths.end())
      widths.push_back(r.vars_per_slice);
  std::sort(widths.begin(), widths.end());
  for (int w : widths) {
    std::string path = out_prefix + "-vars" + std::to_string(w) + ".svg";
    write_text_file(path, benchmark_svg(rows, w));
    write_manifest(path, "plot", argv, {csv_path}, 0);
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> argv_copy(argv, argv + argc);

  CLI::App app{"Variational approximations for discrete graphical models"};
  app.set_version_flag("--version",
                       std::string(kToolVersion) + " (model format " + kModelFormatVersion + ")");
  app.require_subcommand(1);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Sample a synthetic temporal network");
  DbnConfig gen_cfg;
  std::string gen_out;
  gen_cmd->add_option("--slices", gen_cfg.slices, "Number of time slices")->required();
  gen_cmd->add_option("--vars", gen_cfg.vars_per_slice, "Chain variables per slice")->required();
  gen_cmd->add_option("--seed", gen_cfg.seed, "Generator seed");
  gen_cmd->add_option("--out", gen_out, "Output model file")->required();

  // exact
  auto* exact_cmd = app.add_subcommand("exact", "Exact log-evidence and marginals");
  std::string exact_model, exact_evidence;
  std::vector<std::string> exact_marginals;
  exact_cmd->add_option("--model", exact_model, "Model file")->required();
  exact_cmd->add_option("--evidence", exact_evidence, "Inline JSON object or a file path");
  exact_cmd->add_option("--marginal", exact_marginals, "Posterior marginal to print (repeatable)");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit a variational approximation");
  CommonFitFlags fit_flags;
  fit_cmd->add_option("--model", fit_flags.model_path, "Model file")->required();
  fit_cmd->add_option("--evidence", fit_flags.evidence_arg, "Inline JSON or file path");
  fit_cmd->add_option("--q-structure", fit_flags.structure_path, "Structure file");
  fit_cmd->add_option("--method", fit_flags.method, "bn | cg | hidden")
      ->check(CLI::IsMember({"bn", "cg", "hidden"}));
  fit_cmd->add_option("--mixture", fit_flags.mixture,
                      "Mixture-of-mean-fields component count (method hidden)");
  fit_cmd->add_option("--sweeps", fit_flags.opts.max_sweeps, "Update sweeps per restart");
  fit_cmd->add_option("--restarts", fit_flags.opts.restarts, "Random restarts");
  fit_cmd->add_option("--seed", fit_flags.opts.seed, "Fit seed");
  fit_cmd->add_option("--tol", fit_flags.opts.tol, "Relative bound-change stop threshold");
  fit_cmd->add_option("--damping", fit_flags.opts.damping, "Chain-graph damping step");
  fit_cmd->add_option("--out", fit_flags.out_path, "Result file")->required();

  // benchmark
  auto* bench_cmd = app.add_subcommand("benchmark", "Synthetic benchmark grid");
  std::string bench_slices = "2..7", bench_vars = "3,4", bench_methods = "default", bench_out;
  BenchmarkConfig bc;
  bench_cmd->add_option("--slices", bench_slices, "Slice grid, e.g. 2..7 or 2,3");
  bench_cmd->add_option("--vars", bench_vars, "Slice widths, e.g. 3,4");
  bench_cmd->add_option("--methods", bench_methods,
                        "Comma list of kind:variant, or 'default' for the full grid");
  bench_cmd->add_option("--nets", bc.nets_per_cell, "Networks per grid cell");
  bench_cmd->add_option("--sweeps", bc.opts.max_sweeps, "Update sweeps per restart");
  bench_cmd->add_option("--restarts", bc.opts.restarts, "Random restarts");
  bench_cmd->add_option("--seed", bc.opts.seed, "Benchmark seed");
  bench_cmd->add_option("--tol", bc.opts.tol, "Relative bound-change stop threshold");
  bench_cmd->add_option("--jobs", bc.jobs, "Worker threads");
  bench_cmd->add_option("--out", bench_out, "Results CSV")->required();

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "Render benchmark medians as SVG");
  std::string plot_csv, plot_out;
  plot_cmd->add_option("--csv", plot_csv, "Results CSV from the benchmark subcommand")->required();
  plot_cmd->add_option("--out", plot_out, "Output prefix; emits <prefix>-varsN.svg")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*gen_cmd) return do_generate(argv_copy, gen_cfg, gen_out);
    if (*exact_cmd) return do_exact(exact_model, exact_evidence, exact_marginals);
    if (*fit_cmd) {
      if (fit_flags.mixture > 0 && fit_flags.method != "hidden") {
        std::cerr << "usage error: --mixture requires --method hidden\n";
        return 1;
      }
      if (fit_flags.mixture == 0 && fit_flags.structure_path.empty()) {
        std::cerr << "usage error: fit needs --q-structure or --mixture\n";
        return 1;
      }
      return do_fit(argv_copy, fit_flags);
    }
    if (*bench_cmd) {
      bc.slices = parse_int_list(bench_slices);
      bc.vars = parse_int_list(bench_vars);
      bc.methods = parse_methods(bench_methods);
      return do_benchmark(argv_copy, bc, bench_out);
    }
    if (*plot_cmd) return do_plot(argv_copy, plot_csv, plot_out);
  } catch (const StructuralError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace structvar
